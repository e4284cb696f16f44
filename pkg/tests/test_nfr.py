import itertools

import numpy as np
import pytest

from dnls_nfr.nfr import (BudgetExceeded, NfrTerms, ThresholdSchedule, check_budget, eval_T0,
                          eval_TT1, in_C, in_F)
from dnls_nfr.operators import eval_cubic_T, split_cubic
from dnls_nfr.solvers import rk4_step
from dnls_nfr.spectral import FrequencyGrid, SpectralField
from dnls_nfr.trees import enumerate_trees


def brute(tree, grid, v, leaf_value, t, restrict, weight):
    """Sum over every leaf assignment with all nodes on the grid.

    ``leaf_value(c, conj)`` gives the value at a leaf, ``restrict(nu)`` selects
    rows from the signed modulations, ``weight(xi2, nu, eps)`` is the
    multiplier.  Vectorised over all n^(2J+1) assignments.
    """
    h = grid.n // 2
    J = tree.J
    K = np.array(list(itertools.product(range(-h, h), repeat=len(tree.terminals))))
    k = np.zeros((len(K), tree.n_nodes), dtype=np.int64)
    k[:, list(tree.terminals)] = K
    for j in range(J, 0, -1):
        r, (a, b, c) = tree.projection(j)
        k[:, r] = k[:, a] - k[:, b] + k[:, c]
    ok = np.all((k >= -h) & (k < h), axis=1)
    k = k[ok]
    d = grid.dxi
    nu = np.empty((len(k), J))
    xi2 = np.empty((len(k), J))
    eps = np.empty(J)
    for j in range(1, J + 1):
        r, (a, b, c) = tree.projection(j)
        eps[j - 1] = -1 if tree.conjugated[r] else 1
        mu = 2 * (k[:, b] - k[:, a]) * (k[:, b] - k[:, c]) * d * d
        nu[:, j - 1] = eps[j - 1] * mu
        xi2[:, j - 1] = k[:, b] * d
    sel = restrict(nu)
    k, nu, xi2 = k[sel], nu[sel], xi2[sel]
    vals = np.ones(len(k), dtype=complex)
    for leaf in tree.terminals:
        vals *= leaf_value(k[:, leaf] + h, tree.conjugated[leaf])
    vals *= weight(xi2, nu, eps) * np.exp(1j * nu.sum(axis=1) * t)
    out = np.zeros(grid.n, dtype=complex)
    np.add.at(out, k[:, 0] + h, vals)
    return out


def K_J(xi2, nu, eps):
    return np.prod(eps * xi2 / np.cumsum(nu, axis=1), axis=1)


def field_value(v):
    def f(idx, conj):
        c = v.coeffs[idx]
        return np.conj(c) if conj else c
    return f


GRID = FrequencyGrid(8, 2 * np.pi)
SCHED = ThresholdSchedule(0.6, 2.0, betas=(2.0, 2.0))


def oracle_t0(J, v, t):
    out = np.zeros(GRID.n, dtype=complex)
    for tree in enumerate_trees(J):
        out += brute(tree, GRID, v, field_value(v), t, lambda nu: in_F(nu, SCHED), K_J)
    return out * (-1) ** (J - 1) * GRID.measure ** (2 * J)


def oracle_substituted(J, v, sub, t):
    """Each leaf in turn carries ``sub`` instead of ``v``."""
    out = np.zeros(GRID.n, dtype=complex)
    for tree in enumerate_trees(J):
        for target in tree.terminals:
            order = iter(tree.terminals)

            def leaf(idx, conj):
                return field_value(sub if next(order) == target else v)(idx, conj)
            out += brute(tree, GRID, v, leaf, t, lambda nu: in_F(nu, SCHED), K_J)
    return out * (-1) ** J * GRID.measure ** (2 * J)


def oracle_tt1(J, v, t):
    """Generation J+1 trees restricted to F_J and C_J, with one extra factor i eps xi2."""
    out = np.zeros(GRID.n, dtype=complex)
    for tree in enumerate_trees(J + 1):
        def restrict(nu):
            nut = np.cumsum(nu, axis=1)
            return in_F(nu[:, :J], SCHED) & in_C(J, nut[:, J - 1], nu[:, J], SCHED)

        def weight(xi2, nu, eps):
            return K_J(xi2[:, :J], nu[:, :J], eps[:J]) * 1j * eps[J] * xi2[:, J]
        out += brute(tree, GRID, v, field_value(v), t, restrict, weight)
    return out * (-1) ** J * GRID.measure ** (2 * J + 2)


@pytest.fixture(scope="module")
def v8():
    rng = np.random.default_rng(5)
    return SpectralField(GRID, rng.standard_normal(8) + 1j * rng.standard_normal(8))


@pytest.mark.parametrize("J", [1, 2])
def test_t0_matches_brute_force(J, v8):
    terms = NfrTerms(GRID, SCHED, J)
    got = terms.t0(v8, 0.3).coeffs
    ref = oracle_t0(J, v8, 0.3)
    assert np.abs(ref).max() > 0
    assert np.abs(got - ref).max() <= 1e-12 * np.abs(ref).max()


@pytest.mark.parametrize("J", [1, 2])
def test_remainder_matches_brute_force(J, v8):
    terms = NfrTerms(GRID, SCHED, J)
    sub = eval_cubic_T(v8, 0.3)
    got = terms.remainder(v8, 0.3).coeffs
    ref = oracle_substituted(J, v8, sub, 0.3)
    assert np.abs(got - ref).max() <= 1e-12 * np.abs(ref).max()


@pytest.mark.parametrize("J", [1, 2])
def test_tt1_matches_brute_force(J, v8):
    terms = NfrTerms(GRID, SCHED, J)
    got = terms.tt1(v8, 0.3).coeffs
    ref = oracle_tt1(J, v8, 0.3)
    assert np.abs(ref).max() > 0
    assert np.abs(got - ref).max() <= 1e-11 * np.abs(ref).max()


def test_single_mode_boundary_term():
    g = FrequencyGrid(16, 2 * np.pi)
    c = np.zeros(16, dtype=complex)
    for k in (3, 1, 0):
        c[g.index_of(k)] = 1.0
    v = SpectralField(g, c)
    out = eval_T0(1, 2.0, 0.6, v, 0.0).coeffs
    # only (3,1,0) and (0,1,3) reach k = 2 with |Phi| = 4 > 2, each weighing 1/(-4)
    assert out[g.index_of(2)] == pytest.approx(-0.5 * g.measure**2, abs=1e-16)


def test_tt1_at_zero_is_near_resonant_cubic(v8):
    assert np.array_equal(eval_TT1(0, 2.0, 0.6, v8, 0.1).coeffs,
                          split_cubic(v8, 0.1, 2.0)[0].coeffs)


def test_schedule():
    s = ThresholdSchedule(0.6, 4.0)
    assert s.theta == pytest.approx(0.2)
    assert s.beta(0) == 1.0 and s.beta(1) == pytest.approx(5.0**10)
    assert s.b(2) == pytest.approx(5.0**10)
    assert ThresholdSchedule(0.8, 4.0).theta == 0.5
    with pytest.raises(ValueError):
        ThresholdSchedule(0.5, 4.0)
    with pytest.raises(ValueError):
        ThresholdSchedule(0.6, 0.5)


def test_budget_guard():
    assert check_budget(16, 1) == 16.0**2
    with pytest.raises(BudgetExceeded):
        NfrTerms(FrequencyGrid(64, 2 * np.pi), ThresholdSchedule(0.6, 4.0), 3)
    with pytest.raises(BudgetExceeded):
        eval_T0(2, 4.0, 0.6, SpectralField.zeros(FrequencyGrid(32, 2 * np.pi)), 0.0, budget=1e3)


@pytest.mark.parametrize("J", [1, 2])
def test_one_more_integration_by_parts(J):
    """Along the exact flow, the generation-J remainder splits into the resonant
    part, the time derivative of the next boundary term, the quintic part and
    the next remainder."""
    g = FrequencyGrid(16, 2 * np.pi / 1.5)
    rng = np.random.default_rng(1)
    z = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    v0 = SpectralField(g, z * (1 + g.xi**2) ** -0.55) * 0.02
    h = 1e-4
    states = {0: v0}
    for sgn in (1, -1):
        v = v0
        for i in (1, 2):
            v = rk4_step(v, sgn * (i - 1) * h, sgn * h)
            states[sgn * i] = v
    sched = ThresholdSchedule(0.6, 8.0, betas=(2.0, 2.0))
    terms = NfrTerms(g, sched, J)
    f = {i: terms.t0(states[i], i * h).coeffs for i in (-2, -1, 1, 2)}
    dT0 = (-f[2] + 8 * f[1] - 8 * f[-1] + f[-2]) / (12 * h)
    if J == 1:
        lhs = split_cubic(v0, 0.0, 8.0)[1].coeffs
        res = np.zeros(16)
    else:
        prev = NfrTerms(g, sched, J - 1)
        lhs = prev.remainder(v0, 0.0).coeffs
        res = prev.tt1(v0, 0.0).coeffs
    right = res + dT0 + terms.tq(v0, 0.0).coeffs + terms.remainder(v0, 0.0).coeffs
    assert np.abs(lhs - right).max() <= 1e-6 * np.abs(lhs).max()
