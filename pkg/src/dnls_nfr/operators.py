"""Trilinear Fourier multipliers and the gauged nonlinearities.

All trilinear forms act on the frequency configuration
``xi = xi1 - xi2 + xi3`` with the middle argument conjugated, and carry the
discrete measure ``(dxi / 2pi)^2``.  The modulation is
``Phi = xi^2 - xi1^2 + xi2^2 - xi3^2 = 2 (xi2 - xi1)(xi2 - xi3)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (FrequencyGrid, SpectralField, derivative, free_propagate,
                       hs_norm, japanese, to_physical, to_spectral)

KINDS = ("raw", "phi", "weak")
PAD = 3


def modulation(xi1, xi2, xi3):
    return 2.0 * (xi2 - xi1) * (xi2 - xi3)


@dataclass(frozen=True)
class TrilinearKernel:
    """Multiplier m(xi, xi1, xi2, xi3).

    raw:  exp(i Phi t) xi2
    phi:  |xi2| / <Phi>^(1/2)
    weak: 1_{|Phi| > M} |xi2| / <Phi>
    """

    kind: str = "raw"
    t: float = 0.0
    M: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "weak" and not self.M >= 1:
            raise ValueError(f"weak kernel needs M >= 1, got {self.M}")

    def __call__(self, xi1, xi2, xi3):
        phi = modulation(xi1, xi2, xi3)
        if self.kind == "raw":
            return np.exp(1j * phi * self.t) * xi2
        if self.kind == "phi":
            return np.abs(xi2) / np.sqrt(japanese(phi))
        return np.where(np.abs(phi) > self.M, np.abs(xi2) / japanese(phi), 0.0)


def _chunks(n, size):
    for a in range(0, n, size):
        yield a, min(n, a + size)


def eval_trilinear(kernel: TrilinearKernel, v1: SpectralField, v2: SpectralField,
                   v3: SpectralField) -> SpectralField:
    """Direct O(n^3) summation; modes with xi3 off the grid are dropped."""
    g = v1.grid
    v1._check_same_grid(v2)
    v1._check_same_grid(v3)
    n, h = g.n, g.n // 2
    k = g.k
    c1, c2, c3 = v1.coeffs, np.conj(v2.coeffs), v3.coeffs
    out = np.empty(n, dtype=complex)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    step = max(1, 2_000_000 // (n * n))
    for a, b in _chunks(n, step):
        K3 = k[a:b, None, None] - K1[None] + K2[None]
        ok = (K3 >= -h) & (K3 < h)
        i3 = np.where(ok, K3 + h, 0)
        m = kernel(K1[None] * g.dxi, K2[None] * g.dxi, K3 * g.dxi)
        terms = np.where(ok, m * (c1[:, None] * c2[None, :])[None] * c3[i3], 0.0)
        out[a:b] = terms.sum(axis=(1, 2))
    return SpectralField(g, out * g.measure**2)


def _pad_product(fields_fn, grid: FrequencyGrid):
    big = grid.padded(PAD)
    return to_spectral(fields_fn(big), big, target=grid)


def raw_trilinear_physical(v1, v2, v3, t: float = 0.0) -> SpectralField:
    """Raw kernel through dealiased physical products:
    S(-t)[w1 * i d_x conj(w2) * w3] with w_j = S(t) v_j."""
    g = v1.grid
    w1, w2, w3 = (free_propagate(v, t) for v in (v1, v2, v3))

    def prod(big):
        dw2 = to_physical(derivative(w2), big)
        return to_physical(w1, big) * 1j * np.conj(dw2) * to_physical(w3, big)

    return free_propagate(_pad_product(prod, g), -t)


def eval_cubic_T(v: SpectralField, t: float) -> SpectralField:
    """S(-t)[-w^2 d_x conj(w)], w = S(t) v, summed in frequency space."""
    return eval_trilinear(TrilinearKernel("raw", t), v, v, v) * 1j


def cubic_T_physical(v: SpectralField, t: float) -> SpectralField:
    """Same as :func:`eval_cubic_T` through padded physical products."""
    return raw_trilinear_physical(v, v, v, t) * 1j


def eval_quintic(v: SpectralField, t: float) -> SpectralField:
    """S(-t)[(i/2) |w|^4 w], w = S(t) v."""
    w = free_propagate(v, t)

    def prod(big):
        f = to_physical(w, big)
        return 0.5j * np.abs(f) ** 4 * f

    return free_propagate(_pad_product(prod, v.grid), -t)


def rhs(v: SpectralField, t: float) -> SpectralField:
    """d/dt v for the gauged equation in the interaction picture."""
    w = free_propagate(v, t)
    dw = derivative(w)

    def prod(big):
        f = to_physical(w, big)
        df = to_physical(dw, big)
        return -f * f * np.conj(df) + 0.5j * np.abs(f) ** 4 * f

    return free_propagate(_pad_product(prod, v.grid), -t)


def split_cubic(v: SpectralField, t: float, N: float):
    """(T1, T2): the cubic term restricted to |Phi| <= N and |Phi| > N."""
    g = v.grid
    n, h = g.n, g.n // 2
    k = g.k
    c = v.coeffs
    low = np.empty(n, dtype=complex)
    high = np.empty(n, dtype=complex)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    step = max(1, 2_000_000 // (n * n))
    for a, b in _chunks(n, step):
        K3 = k[a:b, None, None] - K1[None] + K2[None]
        ok = (K3 >= -h) & (K3 < h)
        i3 = np.where(ok, K3 + h, 0)
        xi1, xi2, xi3 = K1[None] * g.dxi, K2[None] * g.dxi, K3 * g.dxi
        phi = modulation(xi1, xi2, xi3)
        terms = np.where(ok, np.exp(1j * phi * t) * xi2 * (c[:, None] * np.conj(c)[None, :])[None] * c[i3], 0.0)
        near = np.abs(phi) <= N
        low[a:b] = np.where(near, terms, 0.0).sum(axis=(1, 2))
        high[a:b] = np.where(near, 0.0, terms).sum(axis=(1, 2))
    f = 1j * g.measure**2
    return SpectralField(g, low * f), SpectralField(g, high * f)


def iterated_map_S(tree, inputs, weak_cutoffs=None) -> SpectralField:
    """Replace each parental node, deepest generation first, by the phi kernel
    applied to its children.  ``inputs`` follow the planar terminal order.

    With ``weak_cutoffs`` (one M per generation) the weak kernel is used instead.
    """
    inputs = list(inputs)
    if len(inputs) != len(tree.terminals):
        raise ValueError(f"tree has {len(tree.terminals)} terminals, got {len(inputs)} inputs")
    vals = dict(zip(tree.terminals, inputs))
    for j in range(tree.J, 0, -1):
        r, kids = tree.projection(j)
        if weak_cutoffs is None:
            kern = TrilinearKernel("phi")
        else:
            kern = TrilinearKernel("weak", M=max(1.0, float(weak_cutoffs[j - 1])))
        vals[r] = eval_trilinear(kern, *(vals[c] for c in kids))
    return vals[0]


def iterated_map_S_weak(tree, inputs, schedule) -> SpectralField:
    """Weak version: generation j uses the cutoff b_j N / 2."""
    cut = [schedule.b(j) * schedule.N / 2 for j in range(1, tree.J + 1)]
    return iterated_map_S(tree, inputs, weak_cutoffs=cut)


def product_physical(v1, v2, v3) -> SpectralField:
    """Dealiased v1 * d_x conj(v2) * v3 (no propagator)."""
    d2 = derivative(v2)

    def prod(big):
        return to_physical(v1, big) * np.conj(to_physical(d2, big)) * to_physical(v3, big)

    return _pad_product(prod, v1.grid)


def cubic_derivative_weaknorm_ratio(v1, v2, v3, s: float) -> float:
    """||v1 d_x(conj v2) v3||_{H^(s-1)} / prod ||v_j||_{H^s}."""
    num = hs_norm(product_physical(v1, v2, v3), s - 1)
    return num / (hs_norm(v1, s) * hs_norm(v2, s) * hs_norm(v3, s))


def trilinear_ratio(kernel, v1, v2, v3, s: float, placement: int | None = None,
                    out_s: float | None = None) -> float:
    """||T(v1,v2,v3)||_{H^out_s} / norms, with ``v_placement`` measured in H^(s-1).

    ``out_s`` defaults to ``s - 1`` when a placement is given and ``s`` otherwise.
    """
    vs = (v1, v2, v3)
    if out_s is None:
        out_s = s if placement is None else s - 1
    den = 1.0
    for j, v in enumerate(vs, start=1):
        den *= hs_norm(v, s - 1 if j == placement else s)
    return hs_norm(eval_trilinear(kernel, *vs), out_s) / den


def dt_v_norm_check(v: SpectralField, s: float, t: float = 0.0) -> float:
    """||Q(v) + T(v)||_{H^(s-1)} / (||v||^3 + ||v||^5), norms in H^s."""
    r = hs_norm(v, s)
    return hs_norm(rhs(v, t), s - 1) / (r**3 + r**5)
