"""Stationary sphere radius: quadrature, bisection solver, lemma oracles, force profile.

A uniform distribution on the sphere of radius rho in dimension d >= 3 is a
stationary point of the repulsive pair loss exactly when

    integral over u in [1, 1 + 4 rho^2/N] of f_{d,a}(u) du  =  1/mu,

with a = N/(2 rho^2) and

    f_{d,a}(u) = (2a/sqrt(pi)) * (Gamma(d/2)/Gamma((d-1)/2))
                 * (a(u-1))^((d-1)/2) * (2 - a(u-1))^((d-3)/2) / u.

This module evaluates that integral with an adaptive subdivision scheme,
solves for rho by bisection, sweeps the maximum deviation of rho from
sqrt(d) over a mu grid, and provides the two identities used to justify the
N(d, mu) selection rule as numerical oracles.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernel import ParamSet, choose_big_n

__all__ = [
    "QuadratureError",
    "SolverError",
    "RadiusProblem",
    "RadiusSolution",
    "ForceProfile",
    "gamma_ratio",
    "stationarity_integral",
    "solve_radius",
    "sweep_radius",
    "lemma_a_check",
    "lemma_b_argmax",
    "lemma_b_argmax_numeric",
    "force_profile",
]

MAX_QUAD_NODES = 1 << 20


class QuadratureError(RuntimeError):
    """Adaptive refinement failed to converge within the node budget."""


class SolverError(RuntimeError):
    """Root bracketing or bisection failed for the given parameters."""


def gamma_ratio(dim: int) -> float:
    """Gamma(d/2) / Gamma((d-1)/2) via log-gamma difference (no overflow to d=1e6)."""
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    return math.exp(math.lgamma(dim / 2.0) - math.lgamma((dim - 1) / 2.0))


def _adaptive_simpson(f, lo: float, hi: float, rel_tol: float = 1e-12,
                      max_nodes: int = MAX_QUAD_NODES) -> tuple[float, int]:
    """Integrate f on [lo, hi] by adaptive Simpson subdivision.

    Intervals are halved until the Richardson error estimate of each falls
    under its width-proportional share of the tolerance; all pending
    intervals are refined in one vectorized batch per generation.  Returns
    (value, nodes_evaluated); raises QuadratureError past max_nodes.
    """
    if not hi > lo:
        raise ValueError(f"empty integration interval [{lo}, {hi}]")
    span = hi - lo
    # initial partition: 8 panels
    k0 = 8
    edges = np.linspace(lo, hi, k0 + 1)
    a = edges[:-1]
    b = edges[1:]
    m = 0.5 * (a + b)
    fa = f(a)
    fb = f(b)
    fm = f(m)
    nodes = 3 * k0
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    scale = max(abs(float(np.sum(whole))), 1e-300)
    abs_tol = rel_tol * scale

    total = 0.0
    min_width = span * 2.0 ** -48
    while a.size:
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = f(lm)
        frm = f(rm)
        nodes += 2 * a.size
        if nodes > max_nodes:
            raise QuadratureError(
                f"no convergence after {nodes} nodes (cap {max_nodes}) on [{lo}, {hi}]"
            )
        h = b - a
        left = h / 12.0 * (fa + 4.0 * flm + fm)
        right = h / 12.0 * (fm + 4.0 * frm + fb)
        s2 = left + right
        err = s2 - whole
        # accept once resolved, at the width floor, or at ulp resolution
        # (lm/rm collide with the interval ends and halving makes no progress)
        splittable = (a < lm) & (lm < m) & (m < rm) & (rm < b)
        done = (np.abs(err) <= 15.0 * abs_tol * h / span) | (h <= min_width) | ~splittable
        total += float(np.sum(s2[done] + err[done] / 15.0))
        keep = ~done
        # split surviving intervals into their two halves
        a = np.concatenate([a[keep], m[keep]])
        b = np.concatenate([m[keep], b[keep]])
        fa = np.concatenate([fa[keep], fm[keep]])
        fb = np.concatenate([fm[keep], fb[keep]])
        m = np.concatenate([lm[keep], rm[keep]])
        fm = np.concatenate([flm[keep], frm[keep]])
        whole = np.concatenate([left[keep], right[keep]])
    return total, nodes


def _f_integrand(u: np.ndarray, dim: int, a: float) -> np.ndarray:
    """f_{d,a}(u) including the 2a/sqrt(pi) * Gamma-ratio prefactor."""
    u = np.asarray(u, dtype=np.float64)
    t = np.clip(a * (u - 1.0), 0.0, 2.0)
    p = 0.5 * (dim - 1)
    q = 0.5 * (dim - 3)
    val = t**p * (2.0 - t) ** q / u
    return (2.0 * a / math.sqrt(math.pi)) * gamma_ratio(dim) * val


@dataclass(frozen=True)
class RadiusProblem:
    """Parameters (d, mu, N) of the stationarity condition; d >= 3 required."""

    dim: int
    mu: float
    big_n: float

    def __post_init__(self):
        if self.dim < 3:
            raise ValueError(f"radius theory requires dim >= 3, got {self.dim}")
        if not self.big_n > 0:
            raise ValueError(f"big_n must be positive, got {self.big_n}")

    def a_of(self, rho: float) -> float:
        """Substitution a = N / (2 rho^2)."""
        return self.big_n / (2.0 * rho * rho)


@dataclass(frozen=True)
class RadiusSolution:
    """Solved stationary radius with residual and work diagnostics."""

    rho: float
    residual: float
    iterations: int
    quadrature_points: int


@dataclass(frozen=True)
class ForceProfile:
    """Sampled magnitude 2 mu r / (1 + r^2/N) of the pairwise repulsion."""

    distances: np.ndarray = field(repr=False)
    magnitudes: np.ndarray = field(repr=False)


def _integral(rho: float, dim: int, big_n: float) -> tuple[float, int]:
    a = big_n / (2.0 * rho * rho)
    hi = 1.0 + 2.0 / a
    return _adaptive_simpson(lambda u: _f_integrand(u, dim, a), 1.0, hi)


def stationarity_integral(rho: float, problem: RadiusProblem) -> float:
    """Left-hand side of the stationarity condition at candidate radius rho.

    Equals 1/mu exactly at the stationary radius.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    value, _ = _integral(rho, problem.dim, problem.big_n)
    return value


def solve_radius(dim: int, mu: float, big_n: float, *, rho_tol: float = 1e-12,
                 residual_tol: float = 1e-10, max_iter: int = 200) -> RadiusSolution:
    """Solve the stationarity condition for rho by bisection.

    The integral is monotone decreasing in rho (from 2 at rho -> 0 toward 0),
    so the residual changes sign exactly once.  The bracket starts at
    [sqrt(d)/4, 4 sqrt(d)] and expands geometrically if needed.
    """
    if dim < 3:
        raise ValueError(f"radius theory requires dim >= 3, got {dim}")
    if mu < 1.0:
        raise ValueError(f"solver assumes mu >= 1, got {mu}")
    if not big_n > 0:
        raise ValueError(f"big_n must be positive, got {big_n}")

    target = 1.0 / mu
    nodes = 0

    def residual_at(rho):
        nonlocal nodes
        val, n = _integral(rho, dim, big_n)
        nodes += n
        return val - target

    root_d = math.sqrt(dim)
    lo, hi = root_d / 4.0, 4.0 * root_d
    g_lo = residual_at(lo)
    g_hi = residual_at(hi)
    expansions = 0
    while g_lo < 0.0:  # residual decreasing in rho: need g(lo) >= 0
        lo *= 0.5
        g_lo = residual_at(lo)
        expansions += 1
        if expansions > 60:
            raise SolverError(f"no sign change below rho={lo} for (d={dim}, mu={mu}, N={big_n})")
    expansions = 0
    while g_hi > 0.0:
        hi *= 2.0
        g_hi = residual_at(hi)
        expansions += 1
        if expansions > 60:
            raise SolverError(f"no sign change above rho={hi} for (d={dim}, mu={mu}, N={big_n})")

    iterations = 0
    mid = 0.5 * (lo + hi)
    g_mid = residual_at(mid)
    while iterations < max_iter:
        iterations += 1
        if g_mid >= 0.0:
            lo = mid
        else:
            hi = mid
        mid = 0.5 * (lo + hi)
        g_mid = residual_at(mid)
        if hi - lo <= rho_tol * mid and abs(g_mid) < residual_tol:
            break
    if abs(g_mid) >= residual_tol:
        raise SolverError(
            f"bisection stalled at rho={mid} with residual {g_mid} for (d={dim}, mu={mu}, N={big_n})"
        )
    return RadiusSolution(rho=mid, residual=g_mid, iterations=iterations,
                          quadrature_points=nodes)


def _sweep_cell(args) -> float:
    dim, mu = args
    sol = solve_radius(dim, mu, choose_big_n(dim, mu))
    root_d = math.sqrt(dim)
    return abs(sol.rho - root_d) / root_d * 100.0


def default_workers() -> int:
    """Worker count from ECCENTRIC_THREADS (0 or unset = single process)."""
    raw = os.environ.get("ECCENTRIC_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"ECCENTRIC_THREADS must be an integer, got {raw!r}")
    if n == 0:
        return 1
    return max(1, n)


def sweep_radius(dims, mu_step: float = 0.25, workers: int | None = None) -> list[tuple[int, float]]:
    """Max percent deviation of rho from sqrt(d) over mu in [1, 2d+1], per dimension.

    Returns one (d, max_percent) row per entry of dims, in input order.
    """
    if mu_step <= 0:
        raise ValueError(f"mu_step must be positive, got {mu_step}")
    dims = list(dims)
    for d in dims:
        if d < 3:
            raise ValueError(f"radius theory requires dim >= 3, got {d}")
    if workers is None:
        workers = default_workers()

    cells = []
    counts = []
    for d in dims:
        mus = np.arange(1.0, 2.0 * d + 1.0 + mu_step / 2.0, mu_step)
        counts.append(len(mus))
        cells.extend((d, float(mu)) for mu in mus)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pcts = list(pool.map(_sweep_cell, cells, chunksize=32))
    else:
        pcts = [_sweep_cell(c) for c in cells]

    rows = []
    start = 0
    for d, n in zip(dims, counts):
        rows.append((d, max(pcts[start:start + n])))
        start += n
    return rows


def lemma_a_check(dim: int, a: float) -> float:
    """Integral of u * f_{d,a}(u) over [1, 1 + 2/a]; identically 2 for 0 < a < 2."""
    if dim < 3:
        raise ValueError(f"requires dim >= 3, got {dim}")
    if not 0.0 < a < 2.0:
        raise ValueError(f"requires 0 < a < 2, got {a}")
    value, _ = _adaptive_simpson(lambda u: u * _f_integrand(u, dim, a), 1.0, 1.0 + 2.0 / a)
    return value


def lemma_b_argmax(dim: int, a: float) -> float:
    """Closed-form location of the maximum of f_{d,a} on (1, 1 + 2/a).

    The stationarity condition a = (1 + 1/(u(d-3)+1)) / (u-1) is quadratic
    in u; the root with u > 1 is returned.  Requires dim >= 4.
    """
    if dim < 4:
        raise ValueError(f"requires dim >= 4, got {dim}")
    if not a > 0:
        raise ValueError(f"requires a > 0, got {a}")
    m = dim - 3
    # a*m*u^2 + (a*(1-m) - m)*u - (a + 2) = 0
    qa = a * m
    qb = a * (1.0 - m) - m
    qc = -(a + 2.0)
    disc = qb * qb - 4.0 * qa * qc
    return (-qb + math.sqrt(disc)) / (2.0 * qa)


def lemma_b_argmax_numeric(dim: int, a: float, grid: int = 4001,
                           tol: float = 1e-10) -> float:
    """Grid scan plus golden-section refinement of the maximum of f_{d,a}."""
    if dim < 4:
        raise ValueError(f"requires dim >= 4, got {dim}")
    hi = 1.0 + 2.0 / a
    u = np.linspace(1.0, hi, grid)
    vals = _f_integrand(u, dim, a)
    k = int(np.argmax(vals))
    lo_u = u[max(k - 1, 0)]
    hi_u = u[min(k + 1, grid - 1)]

    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi_u - inv_phi * (hi_u - lo_u)
    x2 = lo_u + inv_phi * (hi_u - lo_u)
    f1 = float(_f_integrand(np.array([x1]), dim, a)[0])
    f2 = float(_f_integrand(np.array([x2]), dim, a)[0])
    while hi_u - lo_u > tol:
        if f1 < f2:
            lo_u = x1
            x1, f1 = x2, f2
            x2 = lo_u + inv_phi * (hi_u - lo_u)
            f2 = float(_f_integrand(np.array([x2]), dim, a)[0])
        else:
            hi_u = x2
            x2, f2 = x1, f1
            x1 = hi_u - inv_phi * (hi_u - lo_u)
            f1 = float(_f_integrand(np.array([x1]), dim, a)[0])
    return 0.5 * (lo_u + hi_u)


def force_profile(params: ParamSet, r_max: float, steps: int) -> ForceProfile:
    """Sample the pairwise repulsion magnitude on a uniform grid including r = 0."""
    if not r_max > 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    r = np.linspace(0.0, r_max, steps)
    mag = 2.0 * params.mu * r / (1.0 + r * r / params.big_n)
    return ForceProfile(distances=r, magnitudes=mag)
