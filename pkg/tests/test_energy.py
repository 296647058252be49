import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonlocal_plap.coefficient import ClosedForm, Simple, parse_coefficient
from nonlocal_plap.domain import Domain, build_grid, shifted_slices
from nonlocal_plap.energy import (PairIndicator, QuadratureScheme, ScalarField, block_pair_sums, energy_gradient,
                                  load, local_energy, nonlocal_energy, nonlocal_form, objective, pair_stencil,
                                  pair_terms)
from nonlocal_plap.kernel import Kernel

UNIT = Domain.unit()
ONE = parse_coefficient("const:1", UNIT)


def fixed(grid, fn):
    return ScalarField.from_function(grid, fn, constrained=False)


def random_free(grid, seed):
    return ScalarField.from_free(grid, np.random.default_rng(seed).standard_normal(int(grid.interior.sum())))


def test_scalar_field_constraint():
    g = build_grid(UNIT, [21], 0.1)
    with pytest.raises(ValueError):
        ScalarField(g, np.ones(g.size), g.collar)
    u = ScalarField.from_function(g, lambda x: x[:, 0])
    assert np.all(u.values[g.collar] == 0)
    with pytest.raises(ValueError):
        u.values[0] = 1.0  # read-only
    assert np.all((2 * u).values == 2 * u.values)


def test_scheme_validation():
    with pytest.raises(ValueError):
        QuadratureScheme("simpson")
    with pytest.raises(ValueError):
        QuadratureScheme(diagonal_policy="include")


def test_constant_field_has_zero_energy():
    g = build_grid(UNIT, [101], 0.1)
    k = Kernel("hat", 0.1, 3.0, 1)
    assert nonlocal_energy(fixed(g, lambda x: np.full(len(x), 4.2)), ONE, k) == 0.0


def test_linear_field_closed_form():
    g = build_grid(UNIT, [2000], 0.1)
    k = Kernel("constant", 0.1, 2.0, 1)
    e = nonlocal_energy(fixed(g, lambda x: x[:, 0]), ONE, k)
    assert abs(e - 0.95) / 0.95 < 0.01


def test_affine_coefficient_closed_form():
    # the band |x - x'| < delta is symmetric under x -> 1 - x, so the mean of
    # the midpoint coefficient over it is 1.5 and the value is 1.5 (1 - delta/2)
    g = build_grid(UNIT, [2000], 0.1)
    k = Kernel("constant", 0.1, 2.0, 1)
    e = nonlocal_energy(fixed(g, lambda x: x[:, 0]), parse_coefficient("affine:1,1", UNIT), k)
    assert abs(e - 1.5 * 0.95) / (1.5 * 0.95) < 0.01


def test_cell_average_more_accurate_in_1d():
    g = build_grid(UNIT, [400], 0.1)
    k = Kernel("constant", 0.1, 2.0, 1)
    u = fixed(g, lambda x: x[:, 0])
    e_node = nonlocal_energy(u, ONE, k, QuadratureScheme("node_midpoint"))
    e_cell = nonlocal_energy(u, ONE, k, QuadratureScheme("cell_average"))
    assert abs(e_cell - 0.95) < abs(e_node - 0.95)


def test_cell_average_weights_integrate_kernel():
    g = build_grid(Domain.unit(2), [41, 41], 0.1)
    k = Kernel("hat", 0.1, 2.0, 2)
    offsets, factors = pair_stencil(g, k, QuadratureScheme("cell_average"))
    r = np.sqrt(((offsets * g.spacing) ** 2).sum(axis=1))
    # both orientations plus the diagonal cell recover the kernel mass
    from nonlocal_plap.energy import _cell_average
    centre = _cell_average(k, tuple(g.spacing), (0, 0))
    mass = (2 * np.sum(factors * r**2) + centre) * g.cell_volume
    assert mass == pytest.approx(k.c_n, rel=1e-8)


def test_local_energy_examples():
    g = build_grid(UNIT, [1000], 0.1)
    assert local_energy(fixed(g, lambda x: x[:, 0]), ONE, 2.0) == pytest.approx(1.0, abs=1e-12)
    bubble = fixed(g, lambda x: x[:, 0] * (1 - x[:, 0]) / 2)
    assert local_energy(bubble, ONE, 2.0) == pytest.approx(1 / 12, abs=1e-6)
    assert local_energy(fixed(g, lambda x: x[:, 0]), parse_coefficient("affine:1,1", UNIT), 3.0) == pytest.approx(1.5, abs=1e-12)


def test_local_energy_2d_plane():
    g = build_grid(Domain.unit(2), [61, 61], 0.1)
    u = fixed(g, lambda x: x[:, 0] + 0.5 * x[:, 1])
    assert local_energy(u, parse_coefficient("const:1", g.domain), 2.0) == pytest.approx(1.25, abs=1e-12)


def test_load_examples():
    g = build_grid(UNIT, [1000], 0.1)
    f = fixed(g, lambda x: np.ones(len(x)))
    assert load(f, fixed(g, lambda x: x[:, 0])) == pytest.approx(0.5, abs=1e-14)
    assert load(fixed(g, lambda x: np.zeros(len(x))), fixed(g, lambda x: x[:, 0])) == 0.0
    assert load(f, fixed(g, lambda x: x[:, 0] * (1 - x[:, 0]) / 2)) == pytest.approx(1 / 12, abs=1e-6)


def test_mismatched_grids_rejected():
    g1, g2 = build_grid(UNIT, [21], 0.1), build_grid(UNIT, [21], 0.1)
    with pytest.raises(ValueError):
        load(fixed(g1, lambda x: x[:, 0]), fixed(g2, lambda x: x[:, 0]))
    with pytest.raises(ValueError):
        nonlocal_form(random_free(g1, 0), random_free(g2, 0), ONE, Kernel("hat", 0.1, 2.0, 1))


def test_horizon_exceeding_collar_rejected():
    g = build_grid(UNIT, [41], 0.1)
    with pytest.raises(ValueError):
        nonlocal_energy(fixed(g, lambda x: x[:, 0]), ONE, Kernel("hat", 0.2, 2.0, 1))


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_form_with_itself_is_energy(p):
    g = build_grid(UNIT, [80], 0.1)
    h = parse_coefficient("affine:1,1", UNIT)
    k = Kernel("tquad", 0.1, p, 1)
    u = random_free(g, 1)
    assert nonlocal_form(u, u, h, k) == nonlocal_energy(u, h, k, region="omega_delta")


def test_form_linear_in_w_and_symmetric_for_p2():
    g = build_grid(UNIT, [80], 0.1)
    k = Kernel("hat", 0.1, 2.0, 1)
    h = parse_coefficient("affine:1,1", UNIT)
    u, w, v = random_free(g, 2), random_free(g, 3), random_free(g, 4)
    assert nonlocal_form(u, w, h, k) == nonlocal_form(w, u, h, k)
    lin = nonlocal_form(u, w.with_values(2 * w.values + v.values), h, k)
    assert lin == pytest.approx(2 * nonlocal_form(u, w, h, k) + nonlocal_form(u, v, h, k), rel=1e-12)
    const = fixed(g, lambda x: np.full(len(x), 3.0))
    assert nonlocal_form(const, w, h, Kernel("hat", 0.1, 3.0, 1)) == 0.0


@pytest.mark.parametrize("p,rtol", [(2.0, 1e-6), (3.0, 1e-4)])
def test_gradient_matches_finite_differences(p, rtol):
    g = build_grid(UNIT, [50], 0.1)
    h = parse_coefficient("affine:1,1", UNIT)
    k = Kernel("hat", 0.1, p, 1)
    f = fixed(g, lambda x: np.sin(3 * x[:, 0]))
    free = np.flatnonzero(g.interior)
    for seed in range(5):
        u = random_free(g, seed)
        grad = energy_gradient(u, f, h, k)
        eps = 1e-5
        fd = np.empty(len(free))
        for a, node in enumerate(free):
            plus, minus = u.values.copy(), u.values.copy()
            plus[node] += eps
            minus[node] -= eps
            fd[a] = (objective(u.with_values(plus), f, h, k) - objective(u.with_values(minus), f, h, k)) / (2 * eps)
        assert np.max(np.abs(fd - grad)) <= rtol * np.max(np.abs(grad))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.sampled_from([1.5, 2.0, 3.0]),
       family=st.sampled_from(["constant", "hat", "tquad"]))
def test_nonnegative_and_orientation_symmetric(seed, p, family):
    g = build_grid(UNIT, [40], 0.15)
    k = Kernel(family, 0.15, p, 1)
    h = parse_coefficient("checkerboard:1,3,3", UNIT)
    u = fixed(g, lambda x: np.random.default_rng(seed).standard_normal(len(x)))
    e = nonlocal_energy(u, h, k, region="omega_delta")
    assert e >= 0
    # flip the orientation of every pair: same terms, same sums
    offsets, factors = pair_stencil(g, k)
    w = g.trapezoid_weights("omega_delta")
    hv = h.nodal(g)
    flipped = []
    for o, fac in zip(offsets, factors):
        sb, sa = shifted_slices(g.shape, o)
        term = w[sa] * w[sb] * (0.5 * (hv[sa] + hv[sb])) * fac * np.abs(u.values[sa] - u.values[sb]) ** p
        flipped.append(float(term.sum()))
    ref = 2.0 * math.fsum(float(t.sum()) for *_, t in pair_terms(u, h, k, region="omega_delta"))
    assert ref == e
    assert 2.0 * math.fsum(flipped) == pytest.approx(e, rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_monotone_in_h(seed):
    g = build_grid(UNIT, [50], 0.1)
    k = Kernel("hat", 0.1, 2.5, 1)
    rng = np.random.default_rng(seed)
    u = fixed(g, lambda x: rng.standard_normal(len(x)))
    h1 = parse_coefficient("affine:1,1", UNIT)
    h2 = parse_coefficient("quadratic:1,1,0.5", UNIT)  # h2 >= h1 pointwise
    assert np.all(h1.nodal(g) <= h2.nodal(g))
    assert nonlocal_energy(u, h1, k) <= nonlocal_energy(u, h2, k)


@pytest.mark.parametrize("p", [2.0, 3.0, 1.5])
def test_p_homogeneity(p):
    g = build_grid(UNIT, [60], 0.1)
    k = Kernel("constant", 0.1, p, 1)
    u = random_free(g, 7)
    e = nonlocal_energy(u, ONE, k)
    for c in (2.0, -0.5):
        scaled = nonlocal_energy(c * u, ONE, k)
        if p == int(p):
            # |c|**p is then a power of two, and scaling by it is exact
            assert scaled == abs(c) ** p * e
        else:
            assert scaled == pytest.approx(abs(c) ** p * e, rel=1e-12)
    assert nonlocal_energy(3.7 * u, ONE, k) == pytest.approx(3.7**p * e, rel=1e-12)


def _slabs_fixture(values, cuts):
    from nonlocal_plap.coefficient import slabs
    return slabs(values, cuts, UNIT)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 4))
def test_block_lower_bound_exact(seed, m):
    rng = np.random.default_rng(seed)
    cuts = sorted(rng.uniform(0.1, 0.9, m - 1))
    h = _slabs_fixture(list(rng.uniform(0.5, 3.0, m)), cuts)
    g = build_grid(UNIT, [60], 0.1)
    k = Kernel("hat", 0.1, 2.0, 1)
    u = fixed(g, lambda x: rng.standard_normal(len(x)))
    sums = block_pair_sums(u, h, k)
    assert math.fsum(sums.ravel()) >= math.fsum(np.diag(sums))
    assert np.all(sums >= 0)
    np.testing.assert_array_equal(sums, sums.T)
    assert math.fsum(sums.ravel()) == pytest.approx(nonlocal_energy(u, h, k), rel=1e-13)


def test_block_sums_single_block_equals_energy():
    h = _slabs_fixture([2.0], [])
    g = build_grid(UNIT, [60], 0.1)
    k = Kernel("hat", 0.1, 2.0, 1)
    u = random_free(g, 3)
    sums = block_pair_sums(u, h, k)
    assert sums.shape == (1, 1)
    assert sums[0, 0] == pytest.approx(nonlocal_energy(u, h, k), rel=1e-14)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), lo=st.floats(0.0, 0.4), width=st.floats(0.1, 0.6))
def test_indicator_identity_exact(seed, lo, width):
    g = build_grid(Domain.unit(2), [24, 24], 0.1)
    k = Kernel("tquad", 0.1, 2.0, 2)
    rng = np.random.default_rng(seed)
    u = fixed(g, lambda x: rng.standard_normal(len(x)))
    mask = g.mask_of(Domain((lo, lo), (min(lo + width, 1.0), min(lo + width, 1.0))))
    one = parse_coefficient("const:1", g.domain)
    assert nonlocal_energy(u, PairIndicator(mask), k) == nonlocal_energy(u, one, k, region=mask)


def test_shrunken_domain_energy_of_linear_field():
    # pairs inside the shrunken box lose the same boundary fraction
    g = build_grid(UNIT, [1200], 0.1)
    k = Kernel("constant", 0.1, 2.0, 1)
    u = fixed(g, lambda x: x[:, 0])
    mask = g.mask_of(Domain((0.2,), (0.8,)))
    e = nonlocal_energy(u, ONE, k, region=mask)
    assert abs(e - 0.6 * (1 - 0.1 / 0.6 / 2)) < 0.01


def test_2d_energy_approaches_local_with_inverse_normalization():
    d = Domain.unit(2)
    one = parse_coefficient("const:1", d)
    vals = []
    for delta in (0.2, 0.1):
        g = build_grid(d, [int(round(12 * (1 + 2 * delta) / delta)) + 1] * 2, delta)
        k = Kernel("hat", delta, 2.0, 2, normalization="inverse_cn")
        vals.append(nonlocal_energy(fixed(g, lambda x: x[:, 0] + 0.5 * x[:, 1]), one, k))
    assert vals[0] < vals[1] < 1.25
    assert 1.25 - vals[1] < 0.2
