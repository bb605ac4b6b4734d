"""Convex entropy functions and the closed-form admissibility thresholds.

An entropy function is a convex ``Phi`` on an open interval ``I`` with four
derivatives.  For a measure with weight exponent ``beta`` in dimension ``n``
the relevant quantities are

* ``condition_constant_K(beta, n)`` -- the constant ``K`` such that
  ``Phi'''' * Phi'' >= K * (Phi''')**2`` on ``I`` makes the entropy
  inequality applicable,
* ``p_beta(beta, n)`` -- the largest exponent ``p`` for which the power
  function ``t**(2/p)`` satisfies that condition (always in ``(1, 2)``),
* ``p_beta_n(beta, n)`` -- the largest Hoelder exponent for which the
  pointwise covariance claim holds (``inf`` when ``n == 1``).

For the power family ``t**a`` the ratio ``Phi'''' * Phi'' / (Phi''')**2``
is the constant ``(3 - a)/(2 - a)``, so admissibility of powers can be
decided exactly rather than through sampled derivatives; built-in entropy
functions carry that constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EvaluationError, ParameterError

__all__ = [
    "PhiFunction",
    "AdmissibilityResult",
    "condition_constant_K",
    "p_beta",
    "p_beta_n",
    "is_admissible",
    "phi_square",
    "phi_xlogx",
    "phi_power",
    "builtin_phis",
    "phi_from_config",
]


@dataclass(frozen=True, eq=False)
class PhiFunction:
    """Convex function on an open interval with derivatives up to order 4.

    ``interval`` endpoints may be ``-inf``/``inf``.  ``const_ratio`` is the
    exact value of ``Phi''''*Phi''/(Phi''')**2`` when that ratio is constant
    on the interval (powers and the square), ``None`` otherwise; ``inf``
    encodes a vanishing third derivative (condition trivially satisfied).
    """

    label: str
    interval: tuple[float, float]
    value: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    d3: Callable[[np.ndarray], np.ndarray]
    d4: Callable[[np.ndarray], np.ndarray]
    const_ratio: float | None = None

    def contains(self, t) -> bool:
        t = np.asarray(t, dtype=float)
        a, b = self.interval
        return bool(np.all(t > a) and np.all(t < b))


@dataclass(frozen=True)
class AdmissibilityResult:
    """Outcome of an admissibility check: verdict, margin and witness."""

    admissible: bool
    witness: float | None
    margin: float

    def __bool__(self) -> bool:
        return self.admissible


def condition_constant_K(beta: float, n: int) -> float:
    """Constant K(beta, n) = ((4*beta-5)**2 + n - 1) / (8*(beta-1)*(beta-n-1)).

    Defined for beta > n + 1; always > 2 and decreasing to 2 as beta grows.
    """
    _require_beta_gt(beta, n)
    return ((4.0 * beta - 5.0) ** 2 + n - 1.0) / (8.0 * (beta - 1.0) * (beta - n - 1.0))


def p_beta(beta: float, n: int) -> float:
    """Largest power exponent admissible at (beta, n); lies in (1, 2)."""
    _require_beta_gt(beta, n)
    num = 4.0 * (beta - 1.0) * (beta - n - 1.0)
    den = 4.0 * (beta - 1.0) ** 2 + 4.0 * (3.0 * n - 2.0) * (beta - 1.0) + n
    return 1.0 + num / den


def p_beta_n(beta: float, n: int) -> float:
    """Hoelder threshold for the covariance claim; ``inf`` when n == 1.

    For n >= 2 this is the larger root of
    ``p**2 = 4*(beta-2)*(beta-n)*(p-1)/(n-1)``, always >= 2, equal to 2
    exactly at beta = n + 1.
    """
    if n < 1:
        raise ParameterError(f"dimension must be a positive integer, got {n}")
    if beta < n + 1:
        raise ParameterError(f"require beta >= n+1 = {n + 1}, got beta = {beta}")
    if n == 1:
        return math.inf
    core = (beta - 1.0) * (beta - n - 1.0)
    disc = (beta - 1.0) * (beta - 2.0) * (beta - n) * (beta - n - 1.0)
    return 2.0 * (1.0 + (core + math.sqrt(disc)) / (n - 1.0))


def is_admissible(
    phi: PhiFunction,
    beta: float,
    n: int,
    sample_points=None,
) -> AdmissibilityResult:
    """Check ``Phi''''(t)*Phi''(t) >= K(beta,n) * Phi'''(t)**2`` on samples.

    Functions with a constant derivative ratio (``phi.const_ratio`` set) are
    decided exactly from that constant; otherwise the condition is tested at
    ``sample_points`` (default: 512 points spread over the interval, capped
    to a finite window) with relative tolerance 1e-9.  On failure the worst
    sample point is returned as witness.
    """
    K = condition_constant_K(beta, n)

    if phi.const_ratio is not None:
        ok = phi.const_ratio >= K * (1.0 - 1e-12)
        witness = None
        if not ok:
            pts = _default_samples(phi.interval) if sample_points is None else np.asarray(sample_points, dtype=float)
            witness = float(pts[0])
        return AdmissibilityResult(ok, witness, phi.const_ratio - K)

    pts = _default_samples(phi.interval) if sample_points is None else np.asarray(sample_points, dtype=float)
    if pts.size == 0:
        raise ParameterError("sample_points must be nonempty")
    if not phi.contains(pts):
        raise ParameterError("sample points must lie inside the interval of Phi")

    d2, d3, d4 = phi.d2(pts), phi.d3(pts), phi.d4(pts)
    if not (np.all(np.isfinite(d2)) and np.all(np.isfinite(d3)) and np.all(np.isfinite(d4))):
        raise EvaluationError("derivative evaluation produced non-finite values")

    lhs = d4 * d2
    rhs = K * d3**2
    scale = np.maximum(np.abs(lhs), rhs)
    margin = lhs - rhs
    rel = np.where(scale > 0, margin / np.where(scale > 0, scale, 1.0), 0.0)
    worst = int(np.argmin(rel))
    ok = bool(rel[worst] >= -1e-9)
    return AdmissibilityResult(ok, None if ok else float(pts[worst]), float(rel[worst]))


def phi_square() -> PhiFunction:
    """Phi(t) = t**2 on the whole line; entropy becomes the variance."""
    return PhiFunction(
        label="square",
        interval=(-math.inf, math.inf),
        value=lambda t: np.asarray(t, dtype=float) ** 2,
        d1=lambda t: 2.0 * np.asarray(t, dtype=float),
        d2=lambda t: np.full_like(np.asarray(t, dtype=float), 2.0),
        d3=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        d4=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        const_ratio=math.inf,
    )


def phi_xlogx() -> PhiFunction:
    """Phi(t) = t*log(t) on (0, inf); entropy becomes the Boltzmann entropy.

    Its derivative ratio is identically 2, strictly below every K(beta, n),
    so it is never admissible at finite beta.
    """
    return PhiFunction(
        label="xlogx",
        interval=(0.0, math.inf),
        value=lambda t: np.asarray(t, dtype=float) * np.log(t),
        d1=lambda t: np.log(t) + 1.0,
        d2=lambda t: 1.0 / np.asarray(t, dtype=float),
        d3=lambda t: -1.0 / np.asarray(t, dtype=float) ** 2,
        d4=lambda t: 2.0 / np.asarray(t, dtype=float) ** 3,
        const_ratio=2.0,
    )


def phi_power(p: float) -> PhiFunction:
    """Phi_p(t) = t**(2/p) on (0, inf) for p in (0, 2].

    p = 1 reproduces the square on the half line; p in (1, 2) interpolates
    toward the entropy function underlying the log-Sobolev limit.
    """
    if not (0.0 < p <= 2.0):
        raise ParameterError(f"power family requires p in (0, 2], got p = {p}")
    a = 2.0 / p
    c1 = a
    c2 = a * (a - 1.0)
    c3 = a * (a - 1.0) * (a - 2.0)
    c4 = a * (a - 1.0) * (a - 2.0) * (a - 3.0)
    ratio = math.inf if a == 2.0 else (3.0 - a) / (2.0 - a)
    return PhiFunction(
        label=f"power[p={p:g}]",
        interval=(0.0, math.inf),
        value=lambda t: np.asarray(t, dtype=float) ** a,
        d1=lambda t: c1 * np.asarray(t, dtype=float) ** (a - 1.0),
        d2=lambda t: c2 * np.asarray(t, dtype=float) ** (a - 2.0),
        d3=lambda t: c3 * np.asarray(t, dtype=float) ** (a - 3.0),
        d4=lambda t: c4 * np.asarray(t, dtype=float) ** (a - 4.0),
        const_ratio=ratio,
    )


def builtin_phis(powers=(1.5,)) -> list[PhiFunction]:
    """The built-in entropy functions: square, xlogx and requested powers."""
    return [phi_square(), phi_xlogx()] + [phi_power(p) for p in powers]


def phi_from_config(spec) -> PhiFunction:
    """Resolve {"phi": "square" | "xlogx" | {"power": p}} to a PhiFunction."""
    from .errors import ConfigError

    if spec == "square":
        return phi_square()
    if spec == "xlogx":
        return phi_xlogx()
    if isinstance(spec, dict) and "power" in spec:
        try:
            return phi_power(float(spec["power"]))
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown phi specification {spec!r}")


def _require_beta_gt(beta: float, n: int) -> None:
    if n < 1:
        raise ParameterError(f"dimension must be a positive integer, got {n}")
    if beta <= n + 1:
        raise ParameterError(f"require beta > n+1 = {n + 1}, got beta = {beta}")


def _default_samples(interval: tuple[float, float], count: int = 512) -> np.ndarray:
    """Sample points spread over ``interval``, log-uniform on positive ranges."""
    a, b = interval
    lo = a if math.isfinite(a) else -10.0
    hi = b if math.isfinite(b) else max(10.0, lo + 20.0)
    if lo > 0 or (a == 0.0 and not math.isfinite(b)):
        lo = max(lo, 1e-3)
        return np.geomspace(lo, hi, count)
    pad = 1e-9 * (hi - lo)
    return np.linspace(lo + pad, hi - pad, count)
