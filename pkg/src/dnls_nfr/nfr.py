"""Normal-form reduction terms of generation J+1.

After J integrations by parts the cubic term splits into boundary terms
T_0^(J+1), terms T_Q^(J+1) where one leaf carries the quintic term, a
resonant part T_{T,1}^(J+1) and the remainder T_T^(J+1).  Each is a sum over
ordered trees of generation J and frequency assignments restricted to
F_J, with multiplier

    K_J = prod_j eps_j xi_2^(j) / nu~_j,   phase exp(i nu~_J t),

where eps_j is the conjugation state of the j-th parental node and
nu_j = eps_j mu_j.  Modulations are integers in units of dxi^2, so the
restriction predicates are decided exactly.

Tables of admissible assignments are built once per (grid, schedule, J) and
reused for every field and time.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .operators import eval_cubic_T, eval_quintic, split_cubic
from .spectral import FrequencyGrid, SpectralField
from .trees import count_trees, enumerate_trees

DEFAULT_BUDGET = 5e9
_CHUNK = 4_000_000


class BudgetExceeded(RuntimeError):
    """Raised when an evaluation would exceed the configured operation count."""


@dataclass(frozen=True)
class ThresholdSchedule:
    """theta = min(2s-1, 1/2), beta_0 = 1, beta_j = (2j+3)^(2/theta), b_J = prod_{j<J} beta_j.

    ``betas`` overrides beta_1, beta_2, ... (beta_0 stays 1).
    """

    s: float
    N: float
    betas: tuple | None = None

    def __post_init__(self):
        if not self.s > 0.5:
            raise ValueError(f"need s > 1/2, got {self.s}")
        if not self.N >= 1:
            raise ValueError(f"need N >= 1, got {self.N}")
        if self.betas is not None:
            object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    @property
    def theta(self) -> float:
        return min(2 * self.s - 1, 0.5)

    def beta(self, j: int) -> float:
        if j == 0:
            return 1.0
        if self.betas is not None and j <= len(self.betas):
            return self.betas[j - 1]
        return float((2 * j + 3) ** (2 / self.theta))

    def b(self, J: int) -> float:
        out = 1.0
        for j in range(J):
            out *= self.beta(j)
        return out


def in_C0(mu1, N):
    """|mu_1| > N."""
    return np.abs(mu1) > N


def in_C(J: int, nu_tilde_J, nu_next, schedule: ThresholdSchedule):
    """C_J: |nu~_J + nu_{J+1}| <= beta_J |nu~_J|."""
    return np.abs(nu_tilde_J + nu_next) <= schedule.beta(J) * np.abs(nu_tilde_J)


def in_F(nu, schedule: ThresholdSchedule):
    """F_J for signed modulations ``nu[..., :J]``: C_0 and the complements of C_1..C_{J-1}."""
    nu = np.asarray(nu, dtype=float)
    nut = np.cumsum(nu, axis=-1)
    ok = in_C0(nut[..., 0], schedule.N)
    for j in range(1, nu.shape[-1]):
        ok &= ~in_C(j, nut[..., j - 1], nu[..., j], schedule)
    return ok


def check_budget(n: int, J: int, budget: float = DEFAULT_BUDGET):
    cost = float(n) ** (2 * J) * count_trees(J)
    if cost > budget:
        raise BudgetExceeded(
            f"n={n}, J={J}: n^(2J) * |T(J)| = {cost:.3g} exceeds the budget {budget:.3g}")
    return cost


@dataclass(frozen=True, eq=False)
class TermTable:
    """Admissible assignments for one tree of generation J."""

    tree: object
    out: np.ndarray       # root index
    leaves: np.ndarray    # (m, 2J+1) leaf indices, planar order
    conj: np.ndarray      # (2J+1,) conjugation state of each leaf
    coef: np.ndarray      # K_J in physical units
    nut: np.ndarray       # nu~_J in units of dxi^2

    @property
    def size(self):
        return len(self.out)


def _floor_bound(beta, a):
    return np.floor(beta * np.abs(a).astype(float)).astype(np.int64)


def _expand(grid, parent_k):
    """All (k1, k2, k3) children of the given parent modes, k3 on the grid.

    Returns (row, k1, k2, k3, mu) with mu in units of dxi^2.
    """
    h = grid.n // 2
    k = grid.k
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    K1, K2 = K1.ravel(), K2.ravel()
    K3 = parent_k[:, None] - K1[None] + K2[None]
    ok = (K3 >= -h) & (K3 < h)
    row, col = np.nonzero(ok)
    k1, k2, k3 = K1[col], K2[col], K3[row, col]
    mu = 2 * (k2 - k1) * (k2 - k3)
    return row, k1, k2, k3, mu.astype(np.int64)


def build_table(tree, grid: FrequencyGrid, schedule: ThresholdSchedule) -> TermTable:
    """Enumerate assignments of ``tree`` restricted to F_J, pruning early."""
    J = tree.J
    h = grid.n // 2
    d2 = grid.dxi**2
    n_thr = schedule.N / d2
    max_mu = 2 * (grid.n - 1) ** 2
    eps = [(-1 if tree.conjugated[r] else 1) for r in tree.roots]

    # generation 1
    row, k1, k2, k3, mu = _expand(grid, grid.k)
    root = grid.k[row]
    keep = np.abs(mu) > n_thr
    cols = {0: root[keep], 1: k1[keep], 2: k2[keep], 3: k3[keep]}
    nut = mu[keep]
    coef = (k2[keep] * grid.dxi) / (nut * d2)

    for j in range(2, J + 1):
        beta = schedule.beta(j - 1)
        # rows that cannot reach |nu~_j| > beta |nu~_{j-1}|
        if beta > 1:
            feas = np.abs(nut) * (beta - 1) < max_mu
            cols = {a: c[feas] for a, c in cols.items()}
            nut, coef = nut[feas], coef[feas]
        r = tree.roots[j - 1]
        e = eps[j - 1]
        new_cols = {a: [] for a in list(cols) + [3 * j - 2, 3 * j - 1, 3 * j]}
        new_nut, new_coef = [], []
        step = max(1, _CHUNK // (grid.n * grid.n))
        for a0 in range(0, len(nut), step):
            sl = slice(a0, a0 + step)
            prow, c1, c2, c3, m = _expand(grid, cols[r][sl])
            pn = nut[sl][prow]
            nn = pn + e * m
            ok = np.abs(nn) > _floor_bound(beta, pn)
            prow = prow[ok]
            for a, c in cols.items():
                new_cols[a].append(c[sl][prow])
            new_cols[3 * j - 2].append(c1[ok])
            new_cols[3 * j - 1].append(c2[ok])
            new_cols[3 * j].append(c3[ok])
            new_nut.append(nn[ok])
            new_coef.append(coef[sl][prow] * e * (c2[ok] * grid.dxi) / (nn[ok] * d2))
        cols = {a: (np.concatenate(c) if c else np.zeros(0, np.int64)) for a, c in new_cols.items()}
        nut = np.concatenate(new_nut) if new_nut else np.zeros(0, np.int64)
        coef = np.concatenate(new_coef) if new_coef else np.zeros(0)

    leaves = np.stack([cols[a] + h for a in tree.terminals], axis=1).astype(np.int32) \
        if len(nut) else np.zeros((0, len(tree.terminals)), np.int32)
    return TermTable(tree, (cols[0] + h).astype(np.int32), leaves,
                     np.array([tree.conjugated[a] for a in tree.terminals]),
                     np.asarray(coef, dtype=float), np.asarray(nut, dtype=np.int64))


def _leaf_values(c, table):
    vals = c[table.leaves]
    return np.where(table.conj[None, :], np.conj(vals), vals)


def _scatter(n, idx, values):
    return (np.bincount(idx, weights=values.real, minlength=n)
            + 1j * np.bincount(idx, weights=values.imag, minlength=n))


class _InnerSums:
    """Prefix sums for the last-generation sum over (k1, k2) at each parent mode,
    ordered by modulation, so that a closed modulation interval is two lookups."""

    def __init__(self, grid):
        self.grid = grid
        h = grid.n // 2
        row, k1, k2, k3, mu = _expand(grid, grid.k)
        self.span = int(2 * (grid.n - 1) ** 2)
        key = row.astype(np.int64) * (2 * self.span + 1) + (mu + self.span)
        order = np.argsort(key, kind="stable")
        self.key = key[order]
        self.i1, self.i2, self.i3 = (k1 + h)[order], (k2 + h)[order], (k3 + h)[order]
        self.xi2 = (k2 * grid.dxi)[order]
        self.phi = (mu * grid.dxi**2)[order]

    def prefix(self, v: SpectralField, t: float):
        c = v.coeffs
        w = 1j * np.exp(1j * self.phi * t) * self.xi2 * c[self.i1] * np.conj(c[self.i2]) * c[self.i3]
        return np.concatenate([[0.0], np.cumsum(w)])

    def interval(self, P, parent, lo, hi):
        """Sum of w over parent mode ``parent`` with lo <= mu <= hi (integers)."""
        W = 2 * self.span + 1
        lo = np.clip(lo, -self.span, self.span + 1)
        hi = np.clip(hi, -self.span - 1, self.span)
        a = np.searchsorted(self.key, parent * W + lo + self.span, side="left")
        b = np.searchsorted(self.key, parent * W + hi + self.span, side="right")
        return np.where(b > a, P[b] - P[np.minimum(a, b)], 0.0)


class NfrTerms:
    """All generation-(J+1) terms on one grid and schedule."""

    def __init__(self, grid: FrequencyGrid, schedule: ThresholdSchedule, J: int,
                 budget: float = DEFAULT_BUDGET):
        if J < 1:
            raise ValueError("J must be >= 1")
        check_budget(grid.n, J, budget)
        self.grid, self.schedule, self.J = grid, schedule, J
        self.tables = [build_table(t, grid, schedule) for t in enumerate_trees(J)]
        self._inner = None
        self._scale = grid.measure ** (2 * J)

    @property
    def size(self):
        return sum(tb.size for tb in self.tables)

    def _phase(self, table, t):
        return table.coef * np.exp(1j * t * self.grid.dxi**2 * table.nut)

    def t0(self, v: SpectralField, t: float) -> SpectralField:
        n = self.grid.n
        acc = np.zeros(n, dtype=complex)
        for tb in self.tables:
            if tb.size:
                vals = np.prod(_leaf_values(v.coeffs, tb), axis=1)
                acc += _scatter(n, tb.out, self._phase(tb, t) * vals)
        return SpectralField(self.grid, acc * (-1) ** (self.J - 1) * self._scale)

    def _substituted(self, v, sub, t):
        n = self.grid.n
        acc = np.zeros(n, dtype=complex)
        for tb in self.tables:
            if not tb.size:
                continue
            L = _leaf_values(v.coeffs, tb)
            S = _leaf_values(sub.coeffs, tb)
            tot = np.zeros(tb.size, dtype=complex)
            for b in range(L.shape[1]):
                tot += S[:, b] * np.prod(np.delete(L, b, axis=1), axis=1)
            acc += _scatter(n, tb.out, self._phase(tb, t) * tot)
        return SpectralField(self.grid, acc * (-1) ** self.J * self._scale)

    def tq(self, v: SpectralField, t: float, q: SpectralField | None = None) -> SpectralField:
        """T_Q^(J+1); pass ``q = eval_quintic(v, t)`` to reuse it."""
        return self._substituted(v, eval_quintic(v, t) if q is None else q, t)

    def remainder(self, v: SpectralField, t: float) -> SpectralField:
        """T_T^(J+1): the cubic term substituted at each leaf."""
        return self._substituted(v, eval_cubic_T(v, t), t)

    def tt1(self, v: SpectralField, t: float) -> SpectralField:
        """T_{T,1}^(J+1): one more generation, restricted to C_J."""
        if self._inner is None:
            self._inner = _InnerSums(self.grid)
        inner = self._inner
        P = inner.prefix(v, t)
        beta = self.schedule.beta(self.J)
        n = self.grid.n
        acc = np.zeros(n, dtype=complex)
        for tb in self.tables:
            if not tb.size:
                continue
            L = _leaf_values(v.coeffs, tb)
            B = _floor_bound(beta, tb.nut)
            tot = np.zeros(tb.size, dtype=complex)
            for b in range(L.shape[1]):
                eta = tb.leaves[:, b].astype(np.int64)
                if tb.conj[b]:
                    s = np.conj(inner.interval(P, eta, tb.nut - B, tb.nut + B))
                else:
                    s = inner.interval(P, eta, -tb.nut - B, -tb.nut + B)
                tot += s * np.prod(np.delete(L, b, axis=1), axis=1)
            acc += _scatter(n, tb.out, self._phase(tb, t) * tot)
        return SpectralField(self.grid, acc * (-1) ** self.J * self._scale * self.grid.measure**2)


@lru_cache(maxsize=32)
def nfr_terms(grid: FrequencyGrid, schedule: ThresholdSchedule, J: int,
              budget: float = DEFAULT_BUDGET) -> NfrTerms:
    return NfrTerms(grid, schedule, J, budget)


def _terms(J, N, s, v, budget):
    return nfr_terms(v.grid, ThresholdSchedule(s, N), J, budget)


def eval_T0(J, N, s, v, t, budget=DEFAULT_BUDGET):
    return _terms(J, N, s, v, budget).t0(v, t)


def eval_TQ(J, N, s, v, t, budget=DEFAULT_BUDGET):
    return _terms(J, N, s, v, budget).tq(v, t)


def eval_TT1(J, N, s, v, t, budget=DEFAULT_BUDGET):
    """T_{T,1}^(J+1); J = 0 gives the near-resonant cubic part T1."""
    if J == 0:
        return split_cubic(v, t, N)[0]
    return _terms(J, N, s, v, budget).tt1(v, t)


def eval_TT_remainder(J, N, s, v, t, budget=DEFAULT_BUDGET):
    return _terms(J, N, s, v, budget).remainder(v, t)


FAMILIES = {"t0": eval_T0, "tq": eval_TQ, "tt1": eval_TT1, "remainder": eval_TT_remainder}
