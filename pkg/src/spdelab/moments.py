"""Exact reduction of ``L^p(Omega)`` moments to one-dimensional Gaussian integrals.

Conditioned on ``W(t) = w`` every Fourier coefficient of the solution is
deterministic, so ``E ||U(t)||^p = E F(sqrt(t) Z)`` with ``Z`` standard normal
and ``F(w)`` the conditional norm to the power ``p``.  All integrand
evaluations are done in log space: the coefficients grow like
``exp(4 beta |n| w)`` and overflow long before the Gaussian weight wins.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp, roots_hermitenorm

from .core import (
    ConvergenceError,
    ModelParams,
    SpectralField,
    SpectralSymbols,
    ConditionedState,
    conditional_field,
    mode_exponent,
)
from .spaces import NormSpec, TWO_PI, _block_norms, _check_grid, _lp_combine, bessel_weights, lq_norm, to_grid

__all__ = [
    "GaussianReduction",
    "MomentEstimate",
    "log_conditional_norm",
    "conditional_norm",
    "tail_coefficient",
    "expected_norm_p",
    "divergence_time",
    "time_integrated_moment",
    "gaussian_exp_moment",
    "exact_second_moment",
]

log = logging.getLogger(__name__)

GAUSS_HERMITE = "gauss-hermite"
ADAPTIVE_TAIL = "adaptive-tail"
MONTE_CARLO = "monte-carlo"

NEAR_CRITICAL = 1e-3
CRITICAL = 1e-12
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class GaussianReduction:
    """Completed-square form of the conditional norm for the heat-kernel datum.

    ``f_tilde = 2(t + 2 theta t + delta)``; the squared Hilbert norm equals
    ``e^{2 h_tilde(w)}`` times a Gaussian bump of width ``f_tilde`` centred at
    ``g_tilde(w)``.
    """

    t: float
    params: ModelParams
    delta: float = 1.0

    @property
    def denominator(self) -> float:
        return self.t * (1 + 2 * self.params.theta()) + self.delta

    @property
    def f_tilde(self) -> float:
        return 2 * self.denominator

    def g_tilde(self, w):
        return self.params.beta * np.asarray(w) / self.denominator

    def h_tilde(self, w):
        w = np.asarray(w)
        return self.params.beta**2 * w * w / self.denominator


@dataclass(frozen=True)
class MomentEstimate:
    """``value`` is ``E ||U(t)||^p`` (possibly ``inf``)."""

    value: float
    method: str
    quad_nodes: int
    error_indicator: float
    p: float = 2.0

    @property
    def norm(self) -> float:
        """``(E ||U(t)||^p)^{1/p}``, the ``L^p(Omega)`` norm."""
        return self.value ** (1.0 / self.p)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def _log_coefficients(t, w, symbols, initial):
    """Complex logs of the conditional coefficients, shape ``(len(w), 2N+1)``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    n = initial.modes
    nz = initial.coeffs != 0
    expo = mode_exponent(t, w[:, None], symbols, n[None, :])
    with np.errstate(divide="ignore"):
        log_a = np.where(nz, np.log(np.where(nz, initial.coeffs, 1.0)), -np.inf)
    return expo + log_a[None, :]


def log_conditional_norm(t, w, params: ModelParams, symbols: SpectralSymbols, initial: SpectralField, spec: NormSpec):
    """``log ||U(t)||`` given ``W(t) = w``, vectorised over ``w``.

    ``-inf`` for the zero field.  Hilbert norms use Parseval directly; ``L^q``
    based norms rescale by the largest coefficient before synthesis.
    """
    if spec.kind not in ("bessel", "besov"):
        raise ValueError("conditional norms support Bessel and Besov specs")
    logc = _log_coefficients(t, w, symbols, initial)
    N = initial.N
    if spec.kind == "bessel" and spec.q == 2:
        logw = math.log(TWO_PI) + spec.s * np.log1p(initial.modes.astype(float) ** 2)
        return 0.5 * logsumexp(2 * logc.real + logw[None, :], axis=1)
    shift = np.max(logc.real, axis=1)
    finite = np.isfinite(shift)
    safe_shift = np.where(finite, shift, 0.0)
    with np.errstate(under="ignore"):
        scaled = np.exp(logc - safe_shift[:, None])
    M = _check_grid(N, spec.q, spec.grid_points)
    if spec.kind == "bessel":
        norms = lq_norm(to_grid(scaled * bessel_weights(N, spec.s)[None, :], M), spec.q)
    else:
        norms = _lp_combine(_block_norms(scaled, spec.s, spec.q, M), spec.p)
    with np.errstate(divide="ignore"):
        out = np.log(norms) + safe_shift
    return np.where(finite, out, -np.inf)


def conditional_norm(t, w, params, symbols, initial, spec: NormSpec) -> float:
    """Norm of ``U(t)`` on the event ``W(t) = w``."""
    from .spaces import evaluate_norm

    field = conditional_field(ConditionedState(t, w, params, symbols, initial))
    if np.all(np.isfinite(field.coeffs)):
        return evaluate_norm(field, spec)
    return float(np.exp(log_conditional_norm(t, [w], params, symbols, initial, spec)[0]))


def _tail_applies(symbols: SpectralSymbols, initial: SpectralField) -> bool:
    return initial.heat_width is not None and symbols.gradient_type


def tail_coefficient(t: float, params: ModelParams, delta: float) -> float:
    """Coefficient of ``z^2`` in the log-integrand for large ``|z|``.

    ``p beta^2 t / (t + 2 theta t + delta) - 1/2``; ``inf`` once the
    completed-square width is no longer positive (pathwise divergence).
    """
    denom = t * (1 + 2 * params.theta()) + delta
    if denom <= 0:
        return math.inf
    return params.p * params.beta**2 * t / denom - 0.5


def _log_integrand(z, t, params, symbols, initial, spec):
    z = np.asarray(z, dtype=float)
    lnorm = log_conditional_norm(t, math.sqrt(t) * z, params, symbols, initial, spec)
    with np.errstate(invalid="ignore"):
        return params.p * lnorm - 0.5 * z * z - _LOG_SQRT_2PI


def _scan(logf, start: float = 16.0, step: float = 0.25, drop: float = 80.0, zcap: float = 1e5):
    """Locate the window where ``logf`` is within ``drop`` of its maximum."""
    R = start
    while True:
        z = np.arange(-R, R + step / 2, step)
        L = logf(z)
        L = np.where(np.isnan(L), -np.inf, L)
        top = np.max(L)
        if not np.isfinite(top):
            return None
        inside = np.nonzero(L > top - drop)[0]
        if inside[0] > 0 and inside[-1] < z.size - 1:
            return z, L, float(z[inside[0]] - step), float(z[inside[-1]] + step), top
        if R >= zcap:
            raise ConvergenceError("log-integrand does not decay within the scanned range")
        R *= 2
        step = min(step * 2, 2.0)


def _gauss_hermite(logf, centre, scale, rtol, max_nodes=1024):
    """Recentred Gauss-Hermite with node doubling; returns (value, nodes, change)."""
    prev = None
    k = 16
    while True:
        y, wts = roots_hermitenorm(k)
        z = centre + scale * y
        # int e^{L(z)} dz = scale * int e^{L(centre + scale y) + y^2/2} e^{-y^2/2} dy
        with np.errstate(divide="ignore"):
            # outer weights underflow to 0 for large k; log 0 = -inf drops them
            terms = logf(z) + 0.5 * y * y + np.log(wts)
        with np.errstate(over="ignore"):
            val = scale * float(np.exp(logsumexp(terms)))
        if prev is not None and math.isfinite(val):
            change = abs(val - prev) / max(abs(val), np.finfo(float).tiny)
            if change < rtol:
                return val, k, change
        if k >= max_nodes:
            change = abs(val - prev) / abs(val) if prev and val else math.inf
            return val, k, change
        prev = val
        k *= 2


def _trapezoid(logf, lo, hi, top, rtol, tail_coef=None):
    """Windowed trapezoid rule with step halving; spectrally accurate here."""
    prev = None
    npts = 257
    while True:
        z = np.linspace(lo, hi, npts)
        L = logf(z)
        h = z[1] - z[0]
        w = np.full(npts, h)
        w[0] = w[-1] = h / 2
        val = math.exp(logsumexp(L - top, b=w)) * math.exp(top)
        if prev is not None:
            change = abs(val - prev) / val
            if change < rtol:
                break
            if npts > 1 << 17:
                raise ConvergenceError(f"windowed quadrature stalled (relative change {change:.2e})")
        prev = val
        npts = 2 * npts - 1
    # Gaussian-tail bound on what lies outside the window: beyond an edge at
    # |z| = R the log-integrand falls at least like -kappa (z^2 - R^2)
    kappa = 0.5 if tail_coef is None else -tail_coef
    R = max(abs(lo), abs(hi), 1.0)
    tail = 2 * math.exp(max(L[0], L[-1])) / (2 * kappa * R)
    return val, npts, max(change, tail / val)


def expected_norm_p(
    t: float,
    params: ModelParams,
    symbols: SpectralSymbols,
    initial: SpectralField,
    spec: NormSpec,
    method: str = "auto",
    rtol: float = 1e-10,
) -> MomentEstimate:
    """``E ||U(t)||^p`` with ``p = params.p``.

    For the heat-kernel datum the analytic tail exponent decides finiteness
    first.  Finite moments are integrated by Gauss-Hermite recentred at the
    log-integrand peak, or by a windowed trapezoid rule near criticality and
    for multi-modal integrands.
    """
    if not t >= 0:
        raise ValueError(f"t must be >= 0, got {t}")
    p = params.p
    coef = None
    if _tail_applies(symbols, initial):
        coef = tail_coefficient(t, params, initial.heat_width)
        if coef >= 0:
            return MomentEstimate(math.inf, ADAPTIVE_TAIL, 0, 0.0, p)
        if coef > -CRITICAL:
            raise ConvergenceError(f"tail exponent {coef:.3e} is numerically critical at t={t}")
    if t == 0 or not np.any(initial.coeffs):
        val = float(np.exp(p * log_conditional_norm(t, [0.0], params, symbols, initial, spec)[0]))
        return MomentEstimate(val, GAUSS_HERMITE, 1, 0.0, p)

    def logf(z):
        return _log_integrand(z, t, params, symbols, initial, spec)

    scan = _scan(logf)
    if scan is None:
        return MomentEstimate(0.0, GAUSS_HERMITE, 0, 0.0, p)
    z, L, lo, hi, top = scan
    if method == "auto":
        near = coef is not None and coef > -NEAR_CRITICAL
        method = ADAPTIVE_TAIL if near or _multimodal(L, top) else GAUSS_HERMITE
    if method == GAUSS_HERMITE:
        centre, scale = _peak_and_scale(logf, z, L)
        val, nodes, change = _gauss_hermite(logf, centre, scale, rtol)
        if not change < max(rtol, 1e-8):
            log.debug("Gauss-Hermite did not settle (%.2e); switching to windowed rule", change)
            val, nodes, change = _trapezoid(logf, lo, hi, top, rtol, coef)
            method = ADAPTIVE_TAIL
    elif method == ADAPTIVE_TAIL:
        val, nodes, change = _trapezoid(logf, lo, hi, top, rtol, coef)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not math.isfinite(val):
        log.warning("moment overflowed the floating range at t=%g; reporting inf", t)
        return MomentEstimate(math.inf, method, nodes, math.inf, p)
    _check_truncation(t, params, initial, hi)
    return MomentEstimate(val, method, nodes, change, p)


def _multimodal(L, top, drop=40.0):
    """More than one local maximum within ``drop`` nats of the peak."""
    interior = (L[1:-1] > L[:-2]) & (L[1:-1] >= L[2:]) & (L[1:-1] > top - drop)
    return int(np.count_nonzero(interior)) > 1


def _peak_and_scale(logf, z, L):
    i = int(np.argmax(L))
    centre = float(z[i])
    h = 1e-3 * max(1.0, abs(centre))
    l0, lp, lm = logf(np.array([centre, centre + h, centre - h]))
    curv = (lp - 2 * l0 + lm) / (h * h)
    # refine the centre by one Newton step on the quadratic model
    if curv < 0 and np.isfinite(curv):
        centre -= (lp - lm) / (2 * h) / curv
        return centre, 1.0 / math.sqrt(-curv)
    return centre, 1.0


def _check_truncation(t, params, initial, zmax):
    # the heat-kernel datum is infinite-support: the truncated moment is only
    # faithful while the bump centre g_tilde stays well inside |n| <= N
    if initial.heat_width is None:
        return
    red = GaussianReduction(t, params, initial.heat_width)
    if red.denominator > 0:
        centre = abs(float(red.g_tilde(math.sqrt(t) * zmax)))
        if centre > initial.N - 4:
            log.warning(
                "truncation N=%d is too small near t=%g (bump centre %.1f); moment underestimated",
                initial.N, t, centre,
            )


def gaussian_exp_moment(c: float) -> float:
    """``E exp(c Z^2)`` for standard normal ``Z``."""
    if c >= 0.5:
        return math.inf
    return 1.0 / math.sqrt(1.0 - 2.0 * c)


def exact_second_moment(t: float, params: ModelParams, symbols: SpectralSymbols, initial: SpectralField, s: float = 0.0) -> float:
    """``E ||U(t)||^2_{H^{s,2}}`` by the per-mode Gaussian MGF.

    ``E |e^{2 b w}|^2 = e^{8 (Re b)^2 t}``; so the sum is
    ``2 pi sum (1+n^2)^s e^{-2t(a + 2 Re b^2) + 8 t (Re b)^2} |a_n|^2``.
    """
    n = initial.modes
    a = symbols.a_of(n)
    b = symbols.b_of(n)
    expo = -2 * t * (a + 2 * (b * b).real) + 8 * t * b.real**2
    with np.errstate(over="ignore"):
        terms = (1.0 + n.astype(float) ** 2) ** s * np.exp(expo) * np.abs(initial.coeffs) ** 2
    return float(TWO_PI * np.sum(terms))


def divergence_time(
    params: ModelParams,
    symbols: SpectralSymbols,
    initial: SpectralField,
    spec: NormSpec | None = None,
    delta: float | None = None,
) -> float:
    """First time at which the tail exponent of the moment integrand reaches 0.

    Root of ``p beta^2 t - (t + 2 theta t + delta)/2`` (the tail coefficient
    times its positive denominator).  ``inf`` when the coefficient stays
    negative, and also for finite-support data, whose moments never diverge.
    """
    if delta is None:
        delta = initial.heat_width
    if delta is None or not symbols.gradient_type:
        return math.inf
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    p, beta, theta = params.p, params.beta, params.theta()

    def phi(t):
        return p * beta**2 * t - 0.5 * (t * (1 + 2 * theta) + delta)

    slope = p * beta**2 - 0.5 * (1 + 2 * theta)
    if slope <= 0:
        return math.inf
    hi = 1.0
    while phi(hi) <= 0:
        hi *= 2
    return brentq(phi, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def time_integrated_moment(
    T: float,
    params: ModelParams,
    symbols: SpectralSymbols,
    initial: SpectralField,
    spec: NormSpec,
    time_nodes: int = 16,
    rtol: float = 1e-8,
    grading: float = 2.0,
) -> float:
    """``(int_0^T E ||U(t)||^p dt)^{1/p}``, or ``inf`` if any time diverges.

    Uses Gauss-Legendre in ``u`` with ``t = T u^grading`` so that the
    integrable singularities of rough data at ``t = 0`` are resolved; the
    node count doubles until the relative change is below ``rtol``.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if divergence_time(params, symbols, initial, spec) <= T:
        return math.inf
    p = params.p
    prev = None
    k = time_nodes
    while True:
        x, w = np.polynomial.legendre.leggauss(k)
        u = 0.5 * (x + 1)
        t = T * u**grading
        jac = 0.5 * T * grading * u ** (grading - 1)
        vals = np.array([expected_norm_p(ti, params, symbols, initial, spec).value for ti in t])
        if not np.all(np.isfinite(vals)):
            return math.inf
        total = float(np.dot(w * jac, vals))
        if prev is not None and abs(total - prev) <= rtol * abs(total):
            return total ** (1.0 / p)
        if k >= 512:
            raise ConvergenceError("time integral of the moment did not converge")
        prev = total
        k *= 2
