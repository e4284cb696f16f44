"""Reference and normal-form solvers for the gauged equation.

Both work on the interaction variable v = S(-t) w.  The reference solver is
classical RK4 on dv/dt = Q(v) + T(v).  The normal-form solver finds the fixed
point of the truncated normal-form map by Picard iteration on a trajectory
sampled at the time steps, integrating in time with the trapezoid rule.
"""
from __future__ import annotations

import csv
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .nfr import DEFAULT_BUDGET, NfrTerms, ThresholdSchedule
from .operators import eval_quintic, rhs, split_cubic
from .spectral import (FrequencyGrid, SpectralField, free_propagate, gauge_forward,
                       gauge_inverse, gaussian_field, hs_norm, random_field,
                       read_field, rng_stream)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class SolverDiverged(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    n: int = 32
    L: float = 8 * np.pi
    s: float = 0.6
    dt: float = 1e-3
    T: float = 0.1
    J: int = 2
    N: float = 4.0
    picard_tol: float = 1e-12
    picard_max_iter: int = 60
    c_hat: float | None = None
    override: bool = False
    guard: float = 10.0
    budget: float = DEFAULT_BUDGET
    initial: dict = field(default_factory=lambda: {"kind": "gaussian", "amplitude": 0.1, "width": 2.0})
    seed: int = 0

    def __post_init__(self):
        try:
            FrequencyGrid(self.n, self.L)
            ThresholdSchedule(self.s, self.N)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if not (self.dt > 0 and self.T >= 0):
            raise ConfigError("need dt > 0 and T >= 0")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"T={self.T} is not a multiple of dt={self.dt}")
        if self.J < 1:
            raise ConfigError("J must be >= 1")

    @property
    def grid(self):
        return FrequencyGrid(self.n, self.L)

    @property
    def schedule(self):
        return ThresholdSchedule(self.s, self.N)

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @property
    def times(self):
        return np.linspace(0.0, self.n_steps * self.dt, self.n_steps + 1)

    def to_dict(self):
        return asdict(self)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                d = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"{path}: {e}") from None
        d = dict(d.get("solver", d))
        if "initial" in d and d["initial"].get("kind") == "file":
            p = Path(d["initial"]["path"])
            if not p.is_absolute():
                d["initial"] = {**d["initial"], "path": str(path.parent / p)}
        return cls.from_dict(d)

    def initial_u(self) -> SpectralField:
        spec = dict(self.initial)
        kind = spec.pop("kind", "gaussian")
        g = self.grid
        if kind == "gaussian":
            return gaussian_field(g, spec.get("amplitude", 0.1), spec.get("width", 2.0),
                                  spec.get("x0", 0.0))
        if kind == "random":
            amp = spec.get("amplitude", 0.1)
            rng = rng_stream(self.seed, "initial")
            return random_field(g, self.s, rng, window=spec.get("window")) * amp
        if kind == "file":
            f = read_field(spec["path"])
            if f.grid != g:
                raise ConfigError("initial field grid does not match the config")
            return f
        raise ConfigError(f"unknown initial kind {kind!r}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: FrequencyGrid
    times: np.ndarray
    coeffs: np.ndarray  # (len(times), n)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def field(self, i) -> SpectralField:
        return SpectralField(self.grid, self.coeffs[i])

    @property
    def final(self):
        return self.field(-1)

    def norms(self, s):
        w = (1 + self.grid.xi**2) ** s
        return np.sqrt(np.sum(w * np.abs(self.coeffs) ** 2, axis=1) * self.grid.measure)

    def sup_norm(self, s):
        return float(self.norms(s).max())

    def u(self, i) -> SpectralField:
        """Ungauged solution at snapshot i."""
        return gauge_inverse(free_propagate(self.field(i), self.times[i]))

    def write(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "L"])
            w.writerow([self.grid.n, repr(self.grid.L)])
            w.writerow(["t", "k", "re", "im"])
            for t, c in zip(self.times, self.coeffs):
                for k, z in zip(self.grid.k, c):
                    w.writerow([repr(float(t)), int(k), repr(float(z.real)), repr(float(z.imag))])


def read_trajectory(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    grid = FrequencyGrid(int(rows[1][0]), float(rows[1][1]))
    body = np.array([[float(x) for x in r] for r in rows[3:]])
    if len(body) % grid.n:
        raise ValueError(f"{path}: row count is not a multiple of n")
    body = body.reshape(-1, grid.n, 4)
    return Trajectory(grid, body[:, 0, 0], body[:, :, 2] + 1j * body[:, :, 3])


def rk4_step(v, t, dt):
    k1 = rhs(v, t)
    k2 = rhs(v + k1 * (dt / 2), t + dt / 2)
    k3 = rhs(v + k2 * (dt / 2), t + dt / 2)
    k4 = rhs(v + k3 * dt, t + dt)
    return v + (k1 + k2 * 2 + k3 * 2 + k4) * (dt / 6)


def integrate_v(v0: SpectralField, dt: float, n_steps: int, s: float, t0: float = 0.0,
                guard: float = 10.0):
    """RK4 from (t0, v0); returns (times, coeffs).  Negative dt runs backwards."""
    R = 2 * hs_norm(v0, s)
    out = np.empty((n_steps + 1, v0.grid.n), dtype=complex)
    out[0] = v0.coeffs
    v, t = v0, t0
    for i in range(1, n_steps + 1):
        v = rk4_step(v, t, dt)
        t = t0 + i * dt
        out[i] = v.coeffs
        if R > 0 and hs_norm(v, s) > guard * R:
            raise SolverDiverged(f"|v|_H^{s} exceeded {guard} x 2|v0| at t={t:g}")
    return t0 + dt * np.arange(n_steps + 1), out


def solve_reference(u0: SpectralField, cfg: SolverConfig) -> Trajectory:
    """RK4 on the interaction variable, started from the gauge transform of u0."""
    v0 = gauge_forward(u0)
    times, coeffs = integrate_v(v0, cfg.dt, cfg.n_steps, cfg.s, guard=cfg.guard)
    return Trajectory(cfg.grid, times, coeffs,
                      {"solver": "reference", "config_hash": cfg.hash()})


# -- normal form ------------------------------------------------------------

def measure_c_hat(grid: FrequencyGrid, s: float, N: float, J: int, n_samples: int = 6,
                  seed: int = 0, budget: float = DEFAULT_BUDGET, extra=()) -> float:
    """Largest normalised size of the terms in the normal-form map over unit H^s samples.

    Ratios: |T1| / N^(1/2), |Q|, |T_0^(j+1)| / N^(-j/2), |T_Q^(j+1)| / N^(-j/2)
    for j <= J, and |T_(T,1)^(j+1)| / N^(-(j-1)/2) for j < J.
    """
    sched = ThresholdSchedule(s, N)
    terms = [NfrTerms(grid, sched, j, budget) for j in range(1, J + 1)]
    samples = [random_field(grid, s, rng_stream(seed, "c_hat", i)) for i in range(n_samples)]
    samples += [f * (1.0 / hs_norm(f, s)) for f in extra]
    best = 0.0
    for v in samples:
        r = [hs_norm(split_cubic(v, 0.0, N)[0], s) / N**0.5, hs_norm(eval_quintic(v, 0.0), s)]
        for j, tm in enumerate(terms, start=1):
            r.append(hs_norm(tm.t0(v, 0.0), s) * N ** (j / 2))
            r.append(hs_norm(tm.tq(v, 0.0), s) * N ** (j / 2))
            if j < J:
                r.append(hs_norm(tm.tt1(v, 0.0), s) * N ** ((j - 1) / 2))
        best = max(best, *r)
    return float(best)


def compliance(cfg: SolverConfig, v0: SpectralField, c_hat: float) -> dict:
    """The smallness conditions for the contraction argument, with R = 2|v0|_H^s."""
    R = 2 * hs_norm(v0, cfg.s)
    T1 = 1.0 / (6 * (1 + c_hat) * R**4) if R > 0 else np.inf
    T2 = 1.0 / (6 * c_hat * cfg.N**0.5 * R**2) if R > 0 and c_hat > 0 else np.inf
    n_cond = 2 * c_hat * (1 + 2 * min(T1, 1e300) * R**2) * cfg.N**-0.5 * R**2
    checks = {
        "N >= 4R^4": bool(cfg.N >= 4 * R**4),
        "T <= T1": bool(cfg.T <= T1),
        "T <= 1/(6 c N^1/2 R^2)": bool(cfg.T <= T2),
        "2c(1+2T1R^2)N^-1/2 R^2 <= 1/6": bool(n_cond <= 1 / 6),
    }
    return {"R": R, "c_hat": c_hat, "T1": T1, "T_max": min(T1, T2), "checks": checks,
            "compliant": all(checks.values())}


class NormalFormMap:
    """Gamma: trajectory -> trajectory for fixed v0, J, N on the step grid."""

    def __init__(self, cfg: SolverConfig, v0: SpectralField):
        self.cfg = cfg
        self.v0 = v0
        self.terms = [NfrTerms(cfg.grid, cfg.schedule, j, cfg.budget) for j in range(1, cfg.J + 1)]
        self.times = cfg.times

    def _pieces(self, v: SpectralField, t: float):
        """(boundary, integrand) at one time."""
        q = eval_quintic(v, t)
        bnd = np.zeros(v.grid.n, dtype=complex)
        dens = q.coeffs + split_cubic(v, t, self.cfg.N)[0].coeffs
        for j, tm in enumerate(self.terms, start=1):
            bnd += tm.t0(v, t).coeffs
            dens += tm.tq(v, t, q).coeffs
            if j < self.cfg.J:
                dens += tm.tt1(v, t).coeffs
        return bnd, dens

    def __call__(self, coeffs: np.ndarray) -> np.ndarray:
        g = self.cfg.grid
        bnd = np.empty_like(coeffs)
        dens = np.empty_like(coeffs)
        for i, t in enumerate(self.times):
            bnd[i], dens[i] = self._pieces(SpectralField(g, coeffs[i]), t)
        b0, _ = self._pieces(self.v0, 0.0) if len(self.times) else (0.0, None)
        out = self.v0.coeffs[None, :] + bnd - b0[None, :]
        if len(self.times) > 1:
            out = out + cumulative_trapezoid(dens, self.times, axis=0, initial=0.0)
        return out


def trajectory_distance(a, b, s, grid):
    w = (1 + grid.xi**2) ** s
    return float(np.sqrt((np.sum(w * np.abs(a - b) ** 2, axis=1) * grid.measure).max()))


def picard(gamma: NormalFormMap, start: np.ndarray, tol: float, max_iter: int):
    """Iterate to a fixed point; returns (coeffs, history of successive differences)."""
    g, s = gamma.cfg.grid, gamma.cfg.s
    cur = start
    hist = []
    for _ in range(max_iter):
        nxt = gamma(cur)
        hist.append(trajectory_distance(nxt, cur, s, g))
        cur = nxt
        if hist[-1] <= tol:
            break
    return cur, hist


def solve_normal_form(v0: SpectralField, cfg: SolverConfig, start: np.ndarray | None = None,
                      c_hat: float | None = None) -> Trajectory:
    """Fixed point of the truncated normal-form map, started from v == v0 by default."""
    if c_hat is None:
        c_hat = cfg.c_hat
    if c_hat is None:
        c_hat = measure_c_hat(cfg.grid, cfg.s, cfg.N, cfg.J, seed=cfg.seed,
                              budget=cfg.budget, extra=[v0])
    comp = compliance(cfg, v0, c_hat)
    if not comp["compliant"] and not cfg.override:
        failed = [k for k, ok in comp["checks"].items() if not ok]
        raise ConfigError(f"smallness conditions fail: {failed}; set override = true to run anyway")
    gamma = NormalFormMap(cfg, v0)
    if start is None:
        start = np.tile(v0.coeffs, (len(gamma.times), 1))
    else:
        start = np.array(start, dtype=complex)
    coeffs, hist = picard(gamma, start, cfg.picard_tol, cfg.picard_max_iter)
    R = comp["R"]
    sup = trajectory_distance(coeffs, np.zeros_like(coeffs), cfg.s, cfg.grid)
    if R > 0 and sup > cfg.guard * R:
        raise SolverDiverged(f"fixed point left {cfg.guard} x R")
    factors = [b / a for a, b in zip(hist, hist[1:]) if a > 0]
    meta = {"solver": "normal_form", "config_hash": cfg.hash(), "J": cfg.J, "N": cfg.N,
            "iterations": len(hist), "residuals": hist, "contraction_estimates": factors,
            "converged": bool(hist and hist[-1] <= cfg.picard_tol), "compliance": comp,
            "override": cfg.override}
    return Trajectory(cfg.grid, gamma.times.copy(), coeffs, meta)


def cross_validate(u0: SpectralField, cfg: SolverConfig, Js=None, c_hat=None) -> dict:
    """Reference vs normal-form trajectories for each J in ``Js`` (default 1..cfg.J)."""
    ref = solve_reference(u0, cfg)
    v0 = ref.field(0)
    if c_hat is None:
        c_hat = cfg.c_hat
    if c_hat is None:
        c_hat = measure_c_hat(cfg.grid, cfg.s, cfg.N, cfg.J, seed=cfg.seed,
                              budget=cfg.budget, extra=[v0])
    scale = hs_norm(v0, cfg.s)
    out = {"norm_v0": scale, "c_hat": c_hat, "per_J": {}}
    for J in Js or range(1, cfg.J + 1):
        sub = replace(cfg, J=J)
        traj = solve_normal_form(v0, sub, c_hat=c_hat)
        diff = ref.coeffs - traj.coeffs
        final = hs_norm(SpectralField(cfg.grid, diff[-1]), cfg.s)
        out["per_J"][J] = {
            "final": final,
            "final_relative": final / scale,
            "sup_relative": trajectory_distance(ref.coeffs, traj.coeffs, cfg.s, cfg.grid) / scale,
            "iterations": traj.metadata["iterations"],
            "converged": traj.metadata["converged"],
            "compliant": traj.metadata["compliance"]["compliant"],
            "compliance": traj.metadata["compliance"],
        }
    out["reference"] = ref
    return out
