import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tumorphase.errors import RegimeError
from tumorphase.geometry import Far, Vascular, build_grid
from tumorphase.poisson import MIXED, NEUMANN, PoissonOperator, poincare_constant, poisson_operator

MIXED_ROLES = (Vascular(1.0, 1.0), Far(0.5, 1.0))
NO_FAR = (Vascular(1.0, 1.0), Vascular(1.0, 1.0))


def cp_closed_form(n):
    """Largest eigenvalue of the lumped mixed problem is 1 / (2n sin(pi/(4n)))^2."""
    return 1.0 / (2 * n * math.sin(math.pi / (4 * n)))


@pytest.mark.parametrize("n", [16, 64, 256])
def test_mixed_inverse_of_one(n):
    g = build_grid(n, MIXED_ROLES)
    op = poisson_operator(g)
    assert op.variant == MIXED
    u = op.apply(np.ones(n + 1))
    x = g.nodes
    # the lumped scheme reproduces the quadratic exactly at the nodes
    np.testing.assert_allclose(u, (1 - x ** 2) / 2, atol=1e-12)


@pytest.mark.parametrize("n", [16, 64, 256])
def test_weak_norm_of_one(n):
    op = poisson_operator(build_grid(n, MIXED_ROLES))
    h = 1 / n
    # trapezoid of (1 - x^2)/2 over [0, 1]: 1/3 - h^2/12
    assert op.weak_norm(np.ones(n + 1)) ** 2 == pytest.approx(1 / 3 - h ** 2 / 12, rel=1e-12)


def test_far_end_on_the_left():
    g = build_grid(32, (Far(0.5, 1.0), Vascular(1.0, 1.0)))
    u = poisson_operator(g).apply(np.ones(33))
    x = g.nodes
    np.testing.assert_allclose(u, x - x ** 2 / 2, atol=1e-12)


def test_two_far_ends():
    g = build_grid(32, (Far(0.5, 1.0), Far(0.5, 1.0)))
    u = poisson_operator(g).apply(np.ones(33))
    x = g.nodes
    np.testing.assert_allclose(u, x * (1 - x) / 2, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_mixed_weak_inner_symmetric_positive(seed):
    rng = np.random.default_rng(seed)
    op = poisson_operator(build_grid(24, MIXED_ROLES))
    f, g = rng.normal(size=(2, 25))
    assert op.weak_inner(f, g) == pytest.approx(op.weak_inner(g, f), rel=1e-12, abs=1e-14)
    assert op.weak_inner(f, f) > 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_neumann_weak_inner_symmetric_positive(seed):
    rng = np.random.default_rng(seed)
    op = poisson_operator(build_grid(24, NO_FAR))
    assert op.variant == NEUMANN
    f, g = rng.normal(size=(2, 25))
    assert abs(op.weak_inner(f, g) - op.weak_inner(g, f)) <= 1e-12 * max(1.0, abs(op.weak_inner(f, g)))
    assert op.weak_inner(f, f) > 0


def test_neumann_solution_properties():
    g = build_grid(40, NO_FAR)
    op = poisson_operator(g)
    np.testing.assert_allclose(op.apply(np.ones(41)), 1.0, atol=1e-12)
    f = np.cos(np.pi * g.nodes)  # zero mean
    u = op.apply(f)
    assert g.mass() @ u == pytest.approx(g.mass() @ f, abs=1e-12)
    # K u = W (f - <f>) + ... with <f> = 0 here
    np.testing.assert_allclose(g.stiffness_apply(u), g.mass() * f, atol=1e-10)


def test_mixed_variant_rejects_no_far_grid():
    with pytest.raises(RegimeError):
        PoissonOperator(build_grid(8, NO_FAR), MIXED)


def test_poincare_matches_closed_form():
    for n in (4, 16, 128):
        assert poincare_constant(build_grid(n, MIXED_ROLES)) == pytest.approx(cp_closed_form(n), rel=1e-10)


def test_poincare_decreases_to_continuum_value():
    vals = [poincare_constant(build_grid(n, MIXED_ROLES)) for n in (8, 32, 128, 512)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 2 / math.pi


def test_poincare_needs_far_end():
    with pytest.raises(RegimeError):
        poincare_constant(build_grid(8, NO_FAR))
    # roles can be overridden
    assert poincare_constant(build_grid(8, NO_FAR), MIXED_ROLES) == pytest.approx(cp_closed_form(8), rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_poincare_inequality_holds(seed):
    g = build_grid(32, MIXED_ROLES)
    cp = poincare_constant(g)
    u = np.random.default_rng(seed).normal(size=33)
    u[-1] = 0.0
    l2 = np.sqrt(u @ (g.mass() * u))
    grad = np.sqrt(np.sum(np.diff(u) ** 2) / g.h)
    assert l2 <= cp * grad * (1 + 1e-12)
