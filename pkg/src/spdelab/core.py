"""Model parameters, spectral symbols and closed-form mode solutions.

The SPDE ``dU + A U dt = 2 B U dW`` driven by one scalar Brownian motion is
diagonal in the Fourier basis of the torus: every mode solves a scalar linear
SDE with an explicit geometric-Brownian solution.  Everything downstream
(norms, moments, multipliers, path simulation) is built on the functions here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "ConvergenceError",
    "ModelParams",
    "SpectralSymbols",
    "SpectralField",
    "ConditionedState",
    "Condition",
    "SplitConditions",
    "second_order_symbols",
    "fourth_order_symbols",
    "heat_kernel_datum",
    "single_mode",
    "classical_condition",
    "lp_condition",
    "split_conditions",
    "blow_up_time",
    "mode_solution",
    "mode_exponent",
    "conditional_field",
]


class ConvergenceError(ArithmeticError):
    """A numerical procedure failed to reach its stated tolerance."""


@dataclass(frozen=True)
class ModelParams:
    """Noise coefficients and exponents of the model.

    ``alpha`` multiplies the transport part ``D`` of the noise operator and
    ``beta`` the dissipative part ``|D|``.  ``p`` is the moment exponent in
    ``L^p(Omega)``, ``q`` the spatial integrability and ``s`` the smoothness.
    """

    alpha: float
    beta: float
    p: float = 2.0
    q: float = 2.0
    s: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "p", "q", "s"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.p > 1:
            raise ValueError(f"p must be > 1, got {self.p}")
        if not self.q > 1:
            raise ValueError(f"q must be > 1, got {self.q}")

    def theta(self) -> float:
        return self.beta**2 - self.alpha**2

    def replace(self, **changes) -> "ModelParams":
        values = dict(alpha=self.alpha, beta=self.beta, p=self.p, q=self.q, s=self.s)
        values.update(changes)
        return ModelParams(**values)


@dataclass(frozen=True)
class SpectralSymbols:
    """Eigenvalue functions ``a(n)`` of ``A`` and ``b(n)`` of ``B``.

    Both callables must accept integer numpy arrays.  ``gradient_type`` is set
    by the built-in constructors; it certifies ``a = c^2``, ``Re b = beta|c|``
    and ``Re b^2 = theta c^2`` for some real ``c(n)``, which is what the
    analytic tail test of the moment engine relies on.
    """

    a: Callable[[np.ndarray], np.ndarray]
    b: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    order: int = 0
    gradient_type: bool = False

    def a_of(self, n) -> np.ndarray:
        return np.asarray(self.a(np.asarray(n)), dtype=float)

    def b_of(self, n) -> np.ndarray:
        return np.asarray(self.b(np.asarray(n)), dtype=complex)


def second_order_symbols(params: ModelParams) -> SpectralSymbols:
    """``A = -Laplacian``, ``B = alpha D + beta |D|`` on the torus."""
    alpha, beta = params.alpha, params.beta

    def a(n):
        n = np.asarray(n, dtype=float)
        return n * n

    def b(n):
        n = np.asarray(n, dtype=float)
        return beta * np.abs(n) + 1j * alpha * n

    return SpectralSymbols(a, b, name="second-order", order=2, gradient_type=True)


def fourth_order_symbols(params: ModelParams) -> SpectralSymbols:
    """``A = Laplacian^2`` with ``B = alpha C + beta |C|`` for ``C = i Laplacian``.

    With ``alpha = 0`` the noise term is ``-2 beta Laplacian u dW``.
    """
    alpha, beta = params.alpha, params.beta

    def a(n):
        n = np.asarray(n, dtype=float)
        return n**4

    def b(n):
        n = np.asarray(n, dtype=float)
        c = -(n * n)
        return beta * np.abs(c) + 1j * alpha * c

    return SpectralSymbols(a, b, name="fourth-order", order=4, gradient_type=True)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Truncated Fourier coefficients ``{f_n : |n| <= N}``.

    ``coeffs[n + N]`` holds the coefficient of ``e^{inx}``.  ``heat_width`` is
    metadata: when set to ``delta`` the field is the truncation of the
    infinite-support datum ``e^{-delta a(n)}`` and moment computations treat
    its tail analytically.
    """

    N: int
    coeffs: np.ndarray
    heat_width: float | None = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"N must be a non-negative integer, got {self.N}")
        coeffs = np.ascontiguousarray(self.coeffs, dtype=complex)
        if coeffs.shape != (2 * self.N + 1,):
            raise ValueError(
                f"expected {2 * self.N + 1} coefficients for N={self.N}, got shape {coeffs.shape}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def coeff(self, n: int) -> complex:
        if abs(n) > self.N:
            return 0j
        return complex(self.coeffs[n + self.N])

    def with_coeffs(self, coeffs, heat_width=None) -> "SpectralField":
        return SpectralField(self.N, coeffs, heat_width)

    def is_real_valued(self, rtol: float = 1e-12) -> bool:
        c = self.coeffs
        scale = max(float(np.max(np.abs(c), initial=0.0)), np.finfo(float).tiny)
        return bool(np.max(np.abs(c - np.conj(c[::-1])), initial=0.0) <= rtol * scale)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        N = max(self.N, other.N)
        return SpectralField(N, _padded(self, N) + _padded(other, N))

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        N = max(self.N, other.N)
        return SpectralField(N, _padded(self, N) - _padded(other, N))

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.N, self.coeffs * scalar)

    __rmul__ = __mul__


def _padded(f: SpectralField, N: int) -> np.ndarray:
    out = np.zeros(2 * N + 1, dtype=complex)
    out[N - f.N : N + f.N + 1] = f.coeffs
    return out


def heat_kernel_datum(N: int, delta: float, symbols: SpectralSymbols | None = None) -> SpectralField:
    """Initial datum with coefficients ``e^{-delta a(n)}`` for ``n != 0``.

    For the second-order symbols this is ``sum_{n != 0} e^{-delta n^2} e^{inx}``.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    n = np.arange(-N, N + 1)
    a = n.astype(float) ** 2 if symbols is None else symbols.a_of(n)
    coeffs = np.exp(-delta * a).astype(complex)
    coeffs[N] = 0.0
    return SpectralField(N, coeffs, heat_width=float(delta))


def single_mode(N: int, k: int, amplitude: complex = 1.0) -> SpectralField:
    if abs(k) > N:
        raise ValueError(f"mode {k} outside truncation N={N}")
    coeffs = np.zeros(2 * N + 1, dtype=complex)
    coeffs[k + N] = amplitude
    return SpectralField(N, coeffs)


@dataclass(frozen=True)
class ConditionedState:
    """The solution at time ``t`` given ``W(t) = w``; fully deterministic."""

    t: float
    w: float
    params: ModelParams
    symbols: SpectralSymbols
    initial: SpectralField = field(repr=False)

    def __post_init__(self):
        if not self.t >= 0:
            raise ValueError(f"t must be >= 0, got {self.t}")


class Condition(NamedTuple):
    holds: bool
    margin: float


class SplitConditions(NamedTuple):
    parabolicity: bool
    integrability: bool


def classical_condition(params: ModelParams) -> Condition:
    margin = 1.0 - 2 * params.alpha**2 - 2 * params.beta**2
    return Condition(margin > 0, margin)


def lp_condition(params: ModelParams) -> Condition:
    """The p-dependent condition ``2 alpha^2 + 2 beta^2 (p-1) < 1``.

    The boundary case is reported as not holding.
    """
    margin = 1.0 - 2 * params.alpha**2 - 2 * params.beta**2 * (params.p - 1)
    return Condition(margin > 0, margin)


def integrability_condition(params: ModelParams) -> bool:
    """Finiteness of ``E exp(beta^2 p W(1)^2 / (1 + 2 beta^2 - 2 alpha^2))``."""
    denom = 1.0 + 2 * params.beta**2 - 2 * params.alpha**2
    if denom <= 0:
        raise ValueError("integrability exponent undefined for 1 + 2 beta^2 - 2 alpha^2 <= 0")
    # E exp(c Z^2) < inf  <=>  c < 1/2; compared in product form to stay exact at c = 0
    return 2 * params.beta**2 * params.p < denom


def split_conditions(params: ModelParams) -> SplitConditions:
    parabolicity = 2 * params.alpha**2 - 2 * params.beta**2 < 1
    try:
        integrability = integrability_condition(params)
    except ValueError:
        # parabolicity already fails here
        integrability = False
    return SplitConditions(parabolicity, integrability)


def blow_up_time(params: ModelParams, delta: float = 1.0) -> float:
    """Nonrandom explosion time ``delta / (2 alpha^2 + 2 beta^2 (p-1) - 1)``.

    Returns ``inf`` when the denominator is not positive.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    denom = 2 * params.alpha**2 + 2 * params.beta**2 * (params.p - 1) - 1
    if denom <= 0:
        return math.inf
    return delta / denom


def mode_exponent(t, w, symbols: SpectralSymbols, n) -> np.ndarray:
    """Complex exponent ``-t a(n) - 2 t b(n)^2 + 2 b(n) w`` of each mode.

    ``t`` and ``w`` broadcast against ``n``.
    """
    a = symbols.a_of(n)
    b = symbols.b_of(n)
    return -t * a - 2 * t * b * b + 2 * b * w


def mode_solution(state: ConditionedState, n: int) -> complex:
    init = state.initial
    if abs(n) > init.N:
        raise ValueError(f"mode {n} outside truncation N={init.N}")
    a0 = init.coeffs[n + init.N]
    if a0 == 0:
        return 0j
    expo = mode_exponent(state.t, state.w, state.symbols, np.array(n))
    return complex(np.exp(expo) * a0)


def conditional_field(state: ConditionedState) -> SpectralField:
    init = state.initial
    expo = mode_exponent(state.t, state.w, state.symbols, init.modes)
    with np.errstate(over="ignore", invalid="ignore"):
        coeffs = np.where(init.coeffs != 0, np.exp(expo) * init.coeffs, 0j)
    return SpectralField(init.N, coeffs)
