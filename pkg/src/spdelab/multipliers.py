"""Periodic Fourier multipliers, Marcinkiewicz constants and empirical L^q norms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .core import ModelParams, SpectralField, lp_condition
from .spaces import lq_norm, min_grid_points, to_grid

__all__ = [
    "MultiplierSeq",
    "MarcinkiewiczReport",
    "Theorem51Multipliers",
    "apply_multiplier",
    "modulate",
    "shifted",
    "product",
    "indicator",
    "marcinkiewicz_constant",
    "empirical_mq_norm",
    "theorem51_multipliers",
    "zeta_symbol",
]


@dataclass(frozen=True)
class MultiplierSeq:
    """A bounded sequence ``n -> m_n``, optionally the restriction of a smooth symbol.

    ``func`` must be vectorised over integer arrays.  ``symbol`` and
    ``derivative`` (functions of a real variable) enable the integral form
    of the Marcinkiewicz constant.
    """

    func: Callable[[np.ndarray], np.ndarray]
    description: str = ""
    symbol: Callable[[np.ndarray], np.ndarray] | None = None
    derivative: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, n) -> np.ndarray:
        return np.asarray(self.func(np.asarray(n)), dtype=complex)

    @classmethod
    def from_symbol(cls, symbol, derivative=None, description=""):
        return cls(lambda n: symbol(np.asarray(n, dtype=float)), description, symbol, derivative)

    @classmethod
    def constant(cls, c: complex):
        return cls.from_symbol(
            lambda x: np.full(np.shape(x), c, dtype=complex),
            lambda x: np.zeros(np.shape(x), dtype=complex),
            f"constant {c}",
        )


def apply_multiplier(m: MultiplierSeq, field: SpectralField) -> SpectralField:
    return SpectralField(field.N, m(field.modes) * field.coeffs)


def modulate(field: SpectralField, k: int) -> SpectralField:
    """Multiply by ``e^{ikx}``: coefficient ``n`` moves to ``n + k``."""
    N = field.N + abs(k)
    out = np.zeros(2 * N + 1, dtype=complex)
    start = N - field.N + k
    out[start : start + 2 * field.N + 1] = field.coeffs
    return SpectralField(N, out)


def shifted(m: MultiplierSeq, k: int) -> MultiplierSeq:
    return MultiplierSeq(lambda n: m(np.asarray(n) + k), f"{m.description} shifted by {k}")


def product(m1: MultiplierSeq, m2: MultiplierSeq) -> MultiplierSeq:
    return MultiplierSeq(lambda n: m1(n) * m2(n), f"({m1.description})*({m2.description})")


def indicator(predicate: Callable[[np.ndarray], np.ndarray], description="") -> MultiplierSeq:
    return MultiplierSeq(lambda n: np.where(predicate(np.asarray(n)), 1.0 + 0j, 0j), description)


@dataclass(frozen=True)
class MarcinkiewiczReport:
    sup_bound: float
    dyadic_variation: float
    K: float
    saturated: bool
    levels: tuple = ()  # per-level max(positive, negative) variation

    def __post_init__(self):
        assert self.K >= self.sup_bound and self.K >= self.dyadic_variation


def _sequence_report(m: MultiplierSeq, max_level: int) -> MarcinkiewiczReport:
    sup = float(np.max(np.abs(m(np.array([-1, 0, 1])))))
    levels = []
    running = []
    for lev in range(1, max_level + 1):
        lo, hi = 1 << (lev - 1), 1 << lev
        pos = m(np.arange(lo, hi + 1))  # j = 2^{n-1} .. 2^n - 1 uses m_{j+1} up to 2^n
        neg = m(np.arange(-hi, -lo + 1))  # j = -2^n .. -2^{n-1} uses m_{j+1} up to -2^{n-1}+1
        var = max(float(np.sum(np.abs(np.diff(pos)))), float(np.sum(np.abs(np.diff(neg)))))
        sup = max(sup, float(np.max(np.abs(pos))), float(np.max(np.abs(neg))))
        levels.append(var)
        running.append(max(sup, max(levels)))
    var = max(levels)
    K = max(sup, var)
    saturated = len(running) < 2 or running[-1] - running[-2] < 1e-10
    return MarcinkiewiczReport(sup, var, K, saturated, tuple(levels))


def _symbol_sup(symbol, extent: float) -> float:
    # dense sampling near the origin plus log-spaced sampling outward, then polish
    xs = np.concatenate([np.linspace(-4, 4, 8001), np.geomspace(4, extent, 4000), -np.geomspace(4, extent, 4000)])
    vals = np.abs(symbol(xs))
    i = int(np.argmax(vals))
    best = float(vals[i])
    x0 = xs[i]
    if i > 0 and i < xs.size - 1:
        left, right = np.sort([xs[max(i - 1, 0)], xs[min(i + 1, xs.size - 1)]])
        if right > left:
            res = optimize.minimize_scalar(
                lambda x: -float(np.abs(symbol(np.array([x]))[0])),
                bounds=(min(left, x0), max(right, x0)), method="bounded",
                options={"xatol": 1e-12},
            )
            best = max(best, -float(res.fun))
    return best


def _symbol_report(m: MultiplierSeq, max_level: int) -> MarcinkiewiczReport:
    sup = _symbol_sup(m.symbol, float(2**max_level))

    def dm(x):
        return float(np.abs(m.derivative(np.array([x]))[0]))

    levels = []
    running = []
    for lev in range(1, max_level + 1):
        lo, hi = float(2 ** (lev - 1)), float(2**lev)
        pos = integrate.quad(dm, lo, hi, limit=400, epsabs=1e-14, epsrel=1e-12)[0]
        neg = integrate.quad(dm, -hi, -lo, limit=400, epsabs=1e-14, epsrel=1e-12)[0]
        levels.append(max(pos, neg))
        running.append(max(sup, max(levels)))
    var = max(levels)
    K = max(sup, var)
    saturated = len(running) < 2 or running[-1] - running[-2] < 1e-10
    return MarcinkiewiczReport(sup, var, K, saturated, tuple(levels))


def marcinkiewicz_constant(m: MultiplierSeq, max_level: int | None = None, route: str = "auto") -> MarcinkiewiczReport:
    """Marcinkiewicz constant over dyadic levels ``1..max_level``.

    With a smooth symbol and its derivative the dyadic variations are the
    integrals of ``|m'|`` (adaptive quadrature); otherwise they are the
    discrete sums ``sum |m_{j+1} - m_j|``.  Defaults: 40 levels for symbols,
    20 for sequences (2^20 terms in the last level).
    """
    if route == "auto":
        route = "symbol" if m.symbol is not None and m.derivative is not None else "sequence"
    if route == "symbol":
        if m.symbol is None or m.derivative is None:
            raise ValueError("symbol route needs a symbol and its derivative")
        max_level = 40 if max_level is None else max_level
    elif route == "sequence":
        max_level = 20 if max_level is None else max_level
        if max_level > 26:
            raise ValueError("sequence route limited to 26 dyadic levels")
    else:
        raise ValueError(f"unknown route {route!r}")
    if max_level < 1:
        raise ValueError("max_level must be >= 1")
    if route == "symbol":
        return _symbol_report(m, max_level)
    return _sequence_report(m, max_level)


def _test_polynomial(rng: np.random.Generator, N: int, ensemble: str) -> np.ndarray:
    size = 2 * N + 1
    if ensemble == "gaussian":
        return rng.standard_normal(size) + 1j * rng.standard_normal(size)
    c = np.zeros(size, dtype=complex)
    if ensemble == "sparse":
        k = min(size, 4)
        idx = rng.choice(size, size=k, replace=False)
        c[idx] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        return c
    if ensemble == "lacunary":
        modes = [0] + [s * (1 << j) for j in range(int(math.log2(max(N, 1))) + 1) for s in (1, -1)]
        modes = [n for n in modes if abs(n) <= N]
        idx = np.array(modes) + N
        c[idx] = rng.standard_normal(idx.size) + 1j * rng.standard_normal(idx.size)
        return c
    raise ValueError(f"unknown ensemble {ensemble!r}")


def empirical_mq_norm(
    m: MultiplierSeq,
    q: float,
    trials: int,
    N: int,
    seed: int,
    ensemble: str = "gaussian",
    probe_modes: bool = True,
) -> float:
    """Lower bound for ``||T_m||_{L^q -> L^q}`` from test polynomials of degree ``N``.

    Takes the maximum of ``||T_m f||_q / ||f||_q`` over ``trials`` random
    polynomials (trial ``i`` has its own RNG substream, so the value is a
    running max in ``trials``) and, with ``probe_modes``, over the single
    exponentials ``e^{ikx}``, ``|k| <= N``, which certify ``|m_k|``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n = np.arange(-N, N + 1)
    mult = m(n)
    best = float(np.max(np.abs(mult))) if probe_modes else 0.0
    M = min_grid_points(N, q)
    M = 1 << (M - 1).bit_length()
    batch = 64
    for start in range(0, trials, batch):
        stop = min(trials, start + batch)
        coeffs = np.stack([_test_polynomial(np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,))), N, ensemble) for i in range(start, stop)])
        num = lq_norm(to_grid(coeffs * mult, M), q)
        den = lq_norm(to_grid(coeffs, M), q)
        ok = den > 0
        if ok.any():
            best = max(best, float(np.max(num[ok] / den[ok])))
    return best


def zeta_symbol(t: float, eps: float, alpha: float, beta: float, odd_phase: bool = False) -> MultiplierSeq:
    """``xi -> exp(-eps xi^2 t / 2 + 4 i beta alpha t xi^2)`` with its derivative.

    ``odd_phase`` replaces ``xi^2`` in the phase by ``-xi |xi|``, the phase of
    the second factor in the exact mode factorization; ``|zeta'|`` is the same.
    """
    c = 4 * beta * alpha * t

    def phase(x):
        return -c * x * np.abs(x) if odd_phase else c * x * x

    def dphase(x):
        return -2 * c * np.abs(x) if odd_phase else 2 * c * x

    def sym(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-eps * x * x * t / 2 + 1j * phase(x))

    def der(x):
        x = np.asarray(x, dtype=float)
        return (-eps * x * t + 1j * dphase(x)) * sym(x)

    return MultiplierSeq.from_symbol(sym, der, "zeta")


@dataclass(frozen=True)
class Theorem51Multipliers:
    """Factorization of the mode coefficients into bounded multipliers.

    ``v_n = e^{h} m1_n m2_n e^{-eps n^2 t/2} e^{2 i alpha n w} a_n`` with
    ``m1_n = exp(-f (|n| - g)^2 / 2)``, ``m2_n = exp(k_n)`` and ``m3`` the
    re-centred copy ``exp(-f (n - shift)^2 / 2)``, ``shift = g - floor(g)``.
    """

    m1: MultiplierSeq
    m2: MultiplierSeq
    m3: MultiplierSeq
    shift: float
    floor_shift: int
    f: float
    g: float
    h: float
    eps: float
    t: float
    w: float
    alpha: float

    def heat_factor(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        return np.exp(-self.eps * n * n * self.t / 2)

    def modulation(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        return np.exp(2j * self.alpha * n * self.w)

    def reconstruct(self, initial: SpectralField) -> np.ndarray:
        n = initial.modes
        return (
            math.exp(self.h) * self.m1(n) * self.m2(n) * self.heat_factor(n) * self.modulation(n) * initial.coeffs
        )


def theorem51_multipliers(t: float, w: float, params: ModelParams, eps: float) -> Theorem51Multipliers:
    """Build ``m1``, ``m2``, ``m3`` and ``f, g, h`` at ``(t, W(t) = w)``.

    Requires ``eps in (0, 1/2)`` with ``2 alpha^2 + 2 beta^2 (p - 1) < 1 - 2 eps``.
    The completed square uses ``r = 1 - eps``; together with the two
    ``e^{-eps n^2 t/2}`` factors this reproduces the mode solution exactly.
    """
    if not 0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
    if not lp_condition(params).margin > 2 * eps:
        raise ValueError("inadmissible eps: need 2 alpha^2 + 2 beta^2 (p-1) < 1 - 2 eps")
    if not t > 0:
        raise ValueError("t must be positive")
    alpha, beta, theta = params.alpha, params.beta, params.theta()
    r = 1.0 - eps
    width = (r + 2 * theta) * t
    f = 2 * width
    g = beta * w / width
    h = beta**2 * w * w / width
    g0 = math.floor(g)
    shift = g - g0
    if shift >= 1.0:  # tiny negative g rounds g - floor(g) up to 1
        g0, shift = g0 + 1, 0.0

    def m1_sym(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * f * (np.abs(x) - g) ** 2) + 0j

    def m3_sym(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * f * (x - shift) ** 2) + 0j

    def m3_der(x):
        x = np.asarray(x, dtype=float)
        return -f * (x - shift) * m3_sym(x)

    zeta = zeta_symbol(t, eps, alpha, beta, odd_phase=True)
    m1 = MultiplierSeq.from_symbol(m1_sym, None, "m1")
    m2 = MultiplierSeq(zeta.func, "m2", zeta.symbol, zeta.derivative)
    m3 = MultiplierSeq.from_symbol(m3_sym, m3_der, "m3")
    return Theorem51Multipliers(m1, m2, m3, shift, g0, f, g, h, eps, t, w, alpha)
