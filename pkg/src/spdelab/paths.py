"""Pathwise simulation of the truncated mode system on one shared Brownian path.

Used to cross-check the closed form: the exact exponential scheme must land on
the conditional field, Euler-Maruyama must converge to it strongly, the
discrete strong-solution identity must close as the grid refines, and Monte
Carlo moments must bracket the quadrature values.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import ModelParams, SpectralField, SpectralSymbols
from .moments import log_conditional_norm
from .spaces import NormSpec, TWO_PI, bessel_weights, lq_norm, to_grid, _check_grid

__all__ = [
    "BrownianPath",
    "SchemeKind",
    "PathSolution",
    "StabilityError",
    "MonteCarloEstimate",
    "brownian_increments",
    "simulate_path",
    "simulate_modes",
    "strong_solution_residual",
    "monte_carlo_moment",
    "ito_isometry_check",
    "IsometryResult",
]

BLOCK = 1024  # paths per RNG substream


class StabilityError(ValueError):
    """Euler-Maruyama step too large for the stiffest mode."""


class SchemeKind(enum.Enum):
    EULER_MARUYAMA = "euler-maruyama"
    EXACT_EXPONENTIAL = "exact-exponential"


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def brownian_increments(paths: int, steps: int, dt: float, seed: int, first_path: int = 0) -> np.ndarray:
    """Increments of shape ``(paths, steps)``; path ``i`` always gets the same draws.

    Paths are grouped into fixed blocks of ``BLOCK``, each with its own
    substream, so any slice of paths regenerates bit-identically.
    """
    out = np.empty((paths, steps))
    sd = math.sqrt(dt)
    i = first_path
    end = first_path + paths
    while i < end:
        block, offset = divmod(i, BLOCK)
        take = min(BLOCK - offset, end - i)
        draws = _rng(seed, 0, block).standard_normal((offset + take, steps))[offset:]
        out[i - first_path : i - first_path + take] = sd * draws
        i += take
    return out


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """A Brownian path sampled on a uniform grid ``0 = t_0 < ... < t_K = T``."""

    time_grid: np.ndarray
    increments: np.ndarray
    seed: int | None = None

    @classmethod
    def generate(cls, T: float, steps: int, seed: int, index: int = 0) -> "BrownianPath":
        dt = T / steps
        incr = brownian_increments(1, steps, dt, seed, first_path=index)[0]
        return cls(np.linspace(0.0, T, steps + 1), incr, seed)

    @property
    def W(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.increments)])

    @property
    def dt(self) -> float:
        return float(self.time_grid[1] - self.time_grid[0])

    @property
    def T(self) -> float:
        return float(self.time_grid[-1])

    def coarsen(self, factor: int) -> "BrownianPath":
        """Same path observed on every ``factor``-th grid point."""
        steps = self.increments.size
        if steps % factor:
            raise ValueError(f"{steps} steps not divisible by {factor}")
        incr = self.increments.reshape(-1, factor).sum(axis=1)
        return BrownianPath(self.time_grid[::factor], incr, self.seed)


@dataclass(frozen=True, eq=False)
class PathSolution:
    times: np.ndarray
    coeffs: np.ndarray  # (len(times), 2N+1)

    @property
    def N(self) -> int:
        return (self.coeffs.shape[-1] - 1) // 2

    def field(self, k: int) -> SpectralField:
        return SpectralField(self.N, self.coeffs[k])

    @property
    def final(self) -> SpectralField:
        return self.field(-1)


def simulate_modes(
    increments: np.ndarray,
    dt: float,
    scheme: SchemeKind,
    symbols: SpectralSymbols,
    initial: SpectralField,
) -> np.ndarray:
    """Advance all modes along each row of ``increments``.

    Returns coefficients of shape ``increments.shape[:-1] + (steps + 1, 2N + 1)``.
    """
    scheme = SchemeKind(scheme)
    n = initial.modes
    a = symbols.a_of(n)
    b = symbols.b_of(n)
    if scheme is SchemeKind.EULER_MARUYAMA and dt * float(np.max(a, initial=0.0)) > 0.5:
        raise StabilityError(f"dt * max a(n) = {dt * np.max(a):.3g} exceeds 1/2")
    dW = np.asarray(increments, dtype=float)[..., None]
    if scheme is SchemeKind.EXACT_EXPONENTIAL:
        factors = np.exp(-dt * (a + 2 * b * b) + 2 * b * dW)
    else:
        factors = 1.0 - a * dt + 2 * b * dW
    steps = dW.shape[-2]
    out = np.empty(dW.shape[:-2] + (steps + 1, n.size), dtype=complex)
    out[..., 0, :] = initial.coeffs
    v = np.broadcast_to(initial.coeffs, dW.shape[:-2] + (n.size,)).copy()
    for k in range(steps):
        v = v * factors[..., k, :]
        out[..., k + 1, :] = v
    return out


def simulate_path(
    path: BrownianPath,
    scheme: SchemeKind,
    params: ModelParams,
    symbols: SpectralSymbols,
    initial: SpectralField,
) -> PathSolution:
    coeffs = simulate_modes(path.increments, path.dt, scheme, symbols, initial)
    return PathSolution(path.time_grid, coeffs)


def _norms_over_time(coeffs: np.ndarray, spec: NormSpec) -> np.ndarray:
    N = (coeffs.shape[-1] - 1) // 2
    if spec.kind != "bessel":
        raise ValueError("residuals are aggregated in a Bessel norm")
    weighted = coeffs * bessel_weights(N, spec.s)
    if spec.q == 2:
        return np.sqrt(TWO_PI * np.sum(np.abs(weighted) ** 2, axis=-1))
    M = _check_grid(N, spec.q, spec.grid_points)
    return lq_norm(to_grid(weighted, M), spec.q)


def strong_solution_residual(
    path: BrownianPath,
    solution: PathSolution,
    params: ModelParams,
    symbols: SpectralSymbols,
    spec: NormSpec,
) -> float:
    """Max over grid times of the defect in ``U(t) - u_0 = -int A U ds + int 2 B U dW``.

    Drift integral by the trapezoid rule, stochastic integral by left-point
    (Ito) sums on the path's own increments.
    """
    if solution.coeffs.shape[0] != path.time_grid.size:
        raise ValueError("solution was not produced on this path's grid")
    U = solution.coeffs
    n = np.arange(-solution.N, solution.N + 1)
    a = symbols.a_of(n)
    b = symbols.b_of(n)
    dt = np.diff(path.time_grid)[:, None]
    drift = np.concatenate([np.zeros((1, n.size)), np.cumsum(0.5 * dt * (U[1:] + U[:-1]), axis=0)])
    ito = np.concatenate([np.zeros((1, n.size)), np.cumsum(U[:-1] * path.increments[:, None], axis=0)])
    defect = U - U[0] + a * drift - 2 * b * ito
    return float(np.max(_norms_over_time(defect, spec)))


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    ci95: float
    paths: int
    excess_kurtosis: float
    heavy_tail: bool

    @property
    def status(self) -> str:
        return "heavy-tail" if self.heavy_tail else "ok"

    def brackets(self, value: float) -> bool:
        return abs(self.estimate - value) <= self.ci95


def _pairwise_mean(x: np.ndarray) -> float:
    # numpy's sum is pairwise, so the result does not depend on block order
    return float(np.sum(x) / x.size)


def monte_carlo_moment(
    paths: int,
    T: float,
    params: ModelParams,
    symbols: SpectralSymbols,
    initial: SpectralField,
    spec: NormSpec,
    seed: int,
    kurtosis_threshold: float = 100.0,
    workers: int = 1,
) -> MonteCarloEstimate:
    """Sample mean of ``||U(T)||^p`` over independent draws of ``W(T)``.

    Only ``W(T)`` enters the closed form, so each path is a single Gaussian
    draw.  Samples with excess kurtosis above ``kurtosis_threshold`` are
    flagged: near the blow-up time the estimator's own variance is infinite
    and no confidence interval can be trusted.
    """
    if paths < 100:
        raise ValueError("need at least 100 paths")
    blocks = range(0, paths, BLOCK)

    def run(start):
        count = min(BLOCK, paths - start)
        w = brownian_increments(count, 1, T, seed, first_path=start)[:, 0]
        return params.p * log_conditional_norm(T, w, params, symbols, initial, spec)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    logs = np.concatenate(parts)
    with np.errstate(over="ignore"):
        samples = np.exp(logs)
    if not np.all(np.isfinite(samples)):
        return MonteCarloEstimate(math.inf, math.inf, paths, math.inf, True)
    mean = _pairwise_mean(samples)
    dev = samples - mean
    var = _pairwise_mean(dev * dev)
    if var > 0:
        kurt = _pairwise_mean(dev**4) / var**2 - 3.0
    else:
        kurt = 0.0
    std = math.sqrt(var * paths / (paths - 1))
    ci95 = 1.959963984540054 * std / math.sqrt(paths)
    return MonteCarloEstimate(mean, ci95, paths, kurt, bool(kurt > kurtosis_threshold))


@dataclass(frozen=True)
class IsometryResult:
    lhs: float
    rhs: float
    sigma: float  # standard error of lhs / rhs

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs else math.nan


def ito_isometry_check(
    paths: int,
    integrand: str,
    seed: int,
    T: float = 1.0,
    steps: int = 64,
    field: SpectralField | None = None,
    params: ModelParams | None = None,
    symbols: SpectralSymbols | None = None,
) -> IsometryResult:
    """Compare ``E ||int phi dW||^2_{L^2}`` with ``E int ||phi||^2_{L^2} dt``.

    ``integrand`` selects the family: ``"constant"`` (``phi = field``),
    ``"brownian"`` (``phi(s) = W(s) field``), ``"solution"`` (``phi = 2 B U``
    along the exact-exponential solution started at ``field``) or ``"zero"``.
    Integrals are left-point sums, for which the isometry is exact in
    expectation on the grid.
    """
    dt = T / steps
    dW = brownian_increments(paths, steps, dt, seed)
    if integrand == "zero":
        return IsometryResult(0.0, 0.0, 0.0)
    if field is None:
        raise ValueError(f"integrand {integrand!r} needs a field")
    c = field.coeffs
    if integrand == "constant":
        phi = np.broadcast_to(c, (paths, steps, c.size))
    elif integrand == "brownian":
        W = np.cumsum(dW, axis=1) - dW  # left endpoints
        phi = W[..., None] * c
    elif integrand == "solution":
        if symbols is None:
            raise ValueError("solution integrand needs symbols")
        U = simulate_modes(dW, dt, SchemeKind.EXACT_EXPONENTIAL, symbols, field)[:, :-1, :]
        phi = 2 * symbols.b_of(field.modes) * U
    else:
        raise ValueError(f"unknown integrand family {integrand!r}")
    stoch = np.einsum("pkn,pk->pn", phi, dW)
    lhs_i = TWO_PI * np.sum(np.abs(stoch) ** 2, axis=1)
    rhs_i = TWO_PI * dt * np.sum(np.abs(phi) ** 2, axis=(1, 2))
    lhs, rhs = float(np.mean(lhs_i)), float(np.mean(rhs_i))
    if rhs == 0:
        return IsometryResult(lhs, rhs, 0.0)
    ratio = lhs / rhs
    # delta-method standard error of a ratio of paired means
    sigma = float(np.std(lhs_i - ratio * rhs_i, ddof=1) / math.sqrt(paths) / rhs)
    return IsometryResult(lhs, rhs, sigma)
