"""Core functionals: entropies, variance, covariance and weighted energies.

The entropy of ``f`` for an entropy function ``Phi`` is the Jensen gap
``E[Phi(f)] - Phi(E[f])``; the square recovers the variance and ``t log t``
the Boltzmann entropy.  The energies are the weighted Dirichlet form
``E[|grad f|^2 phi]`` and its entropy-weighted version
``E[Phi''(f) |grad f|^2 phi]`` appearing on the right-hand side of the
entropy inequality.

Both terms of an entropy are always evaluated through the same backend
(one grid pair or one sample batch), so their errors are correlated;
Monte Carlo errors for the nonlinear outer term use a first-order delta
method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import integrate
from .errors import DomainViolationError, EvaluationError, ParameterError
from .phi_functions import PhiFunction, phi_square

__all__ = [
    "ScalarField",
    "coordinate_field",
    "linear_field",
    "polynomial_field",
    "gaussian_bump_field",
    "tanh_field",
    "field_from_config",
    "phi_entropy",
    "variance",
    "covariance",
    "weighted_dirichlet",
    "phi_weighted_energy",
]


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Test function with a gradient and a declared value range.

    ``range_interval`` is asserted, not inferred: evaluation points whose
    value leaves it are reported as domain violations, which keeps entropy
    domain errors loud.  A missing gradient falls back to central finite
    differences with step ``1e-5 * (1 + |x|)``.
    """

    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    range_interval: tuple[float, float] = (-math.inf, math.inf)
    label: str = ""
    hessian: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.gradient is None:
            from .potentials import _fd_gradient

            object.__setattr__(self, "gradient", _fd_gradient(self.value, self.dim))

    def checked_values(self, pts: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.value(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            bad = pts[~np.isfinite(vals)][0]
            raise EvaluationError(f"field {self.label or '<anon>'} non-finite at {bad}")
        lo, hi = self.range_interval
        outside = (vals < lo) | (vals > hi)
        if np.any(outside):
            bad = pts[outside][0]
            raise DomainViolationError(
                f"field {self.label or '<anon>'} leaves its declared range "
                f"[{lo:g}, {hi:g}] at point {np.array2string(bad, precision=6)}"
            )
        return vals

    def grad_sq(self, pts: np.ndarray) -> np.ndarray:
        g = np.asarray(self.gradient(pts), dtype=float)
        if not np.all(np.isfinite(g)):
            raise EvaluationError(f"gradient of {self.label or '<anon>'} non-finite")
        return (g**2).sum(axis=-1)

    def is_positive(self) -> bool:
        return self.range_interval[0] > 0.0


def coordinate_field(i: int, n: int, range_interval=(-math.inf, math.inf)) -> ScalarField:
    """f(x) = x_i."""
    if not 0 <= i < n:
        raise ParameterError(f"coordinate index {i} out of range for dimension {n}")
    e = np.zeros(n)
    e[i] = 1.0
    return ScalarField(
        dim=n,
        value=lambda X: np.asarray(X, dtype=float)[..., i],
        gradient=lambda X: np.broadcast_to(e, np.asarray(X).shape).copy(),
        hessian=lambda X: np.zeros((np.asarray(X).shape[0], n, n)),
        range_interval=range_interval,
        label=f"x{i + 1}",
    )


def linear_field(a, b: float = 0.0, range_interval=(-math.inf, math.inf), n: int | None = None) -> ScalarField:
    """f(x) = <a, x> + b."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    n = a.size if n is None else n
    return ScalarField(
        dim=n,
        value=lambda X: np.asarray(X, dtype=float) @ a + b,
        gradient=lambda X: np.broadcast_to(a, np.asarray(X).shape).copy(),
        hessian=lambda X: np.zeros((np.asarray(X).shape[0], n, n)),
        range_interval=range_interval,
        label=f"linear[{b:g}+a.x]",
    )


def polynomial_field(coeffs, n: int = 1, axis: int = 0, range_interval=(-math.inf, math.inf)) -> ScalarField:
    """Polynomial in a single coordinate: f(x) = sum_k c_k * x_axis^k."""
    c = np.asarray(coeffs, dtype=float)
    dc = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1)
    ddc = np.polynomial.polynomial.polyder(dc) if dc.size > 1 else np.zeros(1)

    def val(X):
        return np.polynomial.polynomial.polyval(np.asarray(X, dtype=float)[..., axis], c)

    def grad(X):
        X = np.asarray(X, dtype=float)
        g = np.zeros_like(X)
        g[..., axis] = np.polynomial.polynomial.polyval(X[..., axis], dc)
        return g

    def hess(X):
        X = np.asarray(X, dtype=float)
        H = np.zeros(X.shape[:-1] + (n, n))
        H[..., axis, axis] = np.polynomial.polynomial.polyval(X[..., axis], ddc)
        return H

    return ScalarField(dim=n, value=val, gradient=grad, hessian=hess,
                       range_interval=range_interval, label=f"poly[{list(c)}]")


def gaussian_bump_field(
    n: int,
    amplitude: float = 0.2,
    width: float = 1.0,
    offset: float = 1.0,
    center=None,
    range_interval=None,
) -> ScalarField:
    """f(x) = offset + amplitude * exp(-|x - center|^2 / (2 width^2))."""
    c0 = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    if range_interval is None:
        lo = min(offset, offset + amplitude)
        hi = max(offset, offset + amplitude)
        range_interval = (lo - 1e-12, hi + 1e-12)

    def val(X):
        d2 = ((np.asarray(X, dtype=float) - c0) ** 2).sum(axis=-1)
        return offset + amplitude * np.exp(-d2 / (2.0 * width**2))

    def grad(X):
        X = np.asarray(X, dtype=float)
        d = X - c0
        bump = amplitude * np.exp(-(d**2).sum(axis=-1) / (2.0 * width**2))
        return -d / width**2 * bump[..., None]

    def hess(X):
        X = np.asarray(X, dtype=float)
        d = X - c0
        bump = amplitude * np.exp(-(d**2).sum(axis=-1) / (2.0 * width**2))
        outer = d[..., :, None] * d[..., None, :] / width**4
        return (outer - np.eye(n) / width**2) * bump[..., None, None]

    return ScalarField(dim=n, value=val, gradient=grad, hessian=hess,
                       range_interval=range_interval, label=f"bump[{amplitude:g},{width:g}]")


def tanh_field(n: int, amplitude: float = 0.1, offset: float = 1.0, axis: int = 0) -> ScalarField:
    """f(x) = offset + amplitude * tanh(x_axis), bounded and smooth."""
    lo = offset - abs(amplitude)
    hi = offset + abs(amplitude)

    def val(X):
        return offset + amplitude * np.tanh(np.asarray(X, dtype=float)[..., axis])

    def grad(X):
        X = np.asarray(X, dtype=float)
        g = np.zeros_like(X)
        g[..., axis] = amplitude / np.cosh(X[..., axis]) ** 2
        return g

    def hess(X):
        X = np.asarray(X, dtype=float)
        H = np.zeros(X.shape[:-1] + (n, n))
        t = np.tanh(X[..., axis])
        H[..., axis, axis] = -2.0 * amplitude * t / np.cosh(X[..., axis]) ** 2
        return H

    return ScalarField(dim=n, value=val, gradient=grad, hessian=hess,
                       range_interval=(lo - 1e-12, hi + 1e-12),
                       label=f"tanh[{offset:g}+{amplitude:g}]")


def field_from_config(cfg: dict, n: int) -> ScalarField:
    """Build a field from {"field": kind, "params": {...}, "range": [a, b]}."""
    from .errors import ConfigError

    kind = cfg.get("field")
    params = cfg.get("params", {})
    rng = tuple(cfg.get("range", (-math.inf, math.inf)))
    try:
        if kind == "coordinate":
            return coordinate_field(int(params.get("i", 0)), n, range_interval=rng)
        if kind == "linear":
            return linear_field(params.get("a", [1.0] * n), float(params.get("b", 0.0)),
                                range_interval=rng, n=n)
        if kind == "polynomial":
            return polynomial_field(params["coeffs"], n=n, axis=int(params.get("axis", 0)),
                                    range_interval=rng)
        if kind == "gaussian_bump":
            f = gaussian_bump_field(
                n,
                amplitude=float(params.get("amplitude", 0.2)),
                width=float(params.get("width", 1.0)),
                offset=float(params.get("offset", 1.0)),
                center=params.get("center"),
            )
            if "range" in cfg:
                return ScalarField(f.dim, f.value, f.gradient, rng, f.label, f.hessian)
            return f
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad field config {cfg!r}: {exc}") from exc
    raise ConfigError(f"unknown field kind {kind!r}")


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

def phi_entropy(
    m,
    phi: PhiFunction,
    f: ScalarField,
    method: str = "grid",
    budget: int | None = None,
    seed: int = 0,
    batch=None,
) -> tuple[float, float]:
    """Jensen gap E[Phi(f)] - Phi(E[f]) with a propagated error estimate.

    Rejects evaluation points where ``f`` leaves the interval of ``Phi``
    (or its own declared range), naming the offending point.
    """
    def phi_of_f(pts):
        vals = f.checked_values(pts)
        _check_in_interval(vals, phi, f, pts)
        return phi.value(vals)

    if method == "mc":
        if batch is None:
            batch = integrate.default_batch(m, budget or 10**5, seed)
        fv = f.checked_values(batch.points)
        _check_in_interval(fv, phi, f, batch.points)
        phiv = np.asarray(phi.value(fv), dtype=float)
        ef = float(fv.mean())
        if not phi.contains(ef):
            raise DomainViolationError(
                f"mean value {ef:g} of field {f.label or '<anon>'} left the interval of {phi.label}"
            )
        ent = float(phiv.mean()) - float(phi.value(np.asarray(ef)))
        # delta method on the joint estimator: same-sample correlation matters
        influence = phiv - float(phi.d1(np.asarray(ef))) * fv
        _, err = integrate.mc_mean_err(influence, batch)
        return ent, err

    (ephi, ef), (err_ephi, err_ef), _ = integrate.expectation_bundle(
        m, [phi_of_f, f.checked_values], method, budget, seed, batch
    )
    if not phi.contains(ef):
        raise DomainViolationError(
            f"mean value {ef:g} of field {f.label or '<anon>'} left the interval of {phi.label}"
        )
    ent = ephi - float(phi.value(np.asarray(ef)))
    err = err_ephi + abs(float(phi.d1(np.asarray(ef)))) * err_ef
    return ent, err


def variance(m, f: ScalarField, method: str = "grid", budget=None, seed: int = 0, batch=None):
    """Variance of ``f``: the entropy of the square function."""
    return phi_entropy(m, phi_square(), f, method, budget, seed, batch)


def covariance(m, g: ScalarField, h: ScalarField, method: str = "grid",
               budget=None, seed: int = 0, batch=None) -> tuple[float, float]:
    """cov(g, h) = E[g h] - E[g] E[h]; symmetric, and cov(g, g) is the variance."""
    gv, hv = g.checked_values, h.checked_values
    if method == "mc":
        if batch is None:
            batch = integrate.default_batch(m, budget or 10**5, seed)
        gs = gv(batch.points)
        hs = hv(batch.points)
        # centered product is the influence function of the covariance
        prod = (gs - gs.mean()) * (hs - hs.mean())
        return integrate.mc_mean_err(prod, batch)
    (egh, eg, eh), (err_egh, err_eg, err_eh), _ = integrate.expectation_bundle(
        m, [lambda X: gv(X) * hv(X), gv, hv], method, budget, seed, batch
    )
    cov = egh - eg * eh
    err = err_egh + abs(eg) * err_eh + abs(eh) * err_eg
    return cov, err


def weighted_dirichlet(m, f: ScalarField, method: str = "grid", budget=None,
                       seed: int = 0, batch=None) -> tuple[float, float]:
    """Weighted energy E[|grad f|^2 phi] of the generator's Dirichlet form."""
    phi_w = m.potential.value
    (val,), (err,), _ = integrate.expectation_bundle(
        m, [lambda X: f.grad_sq(X) * np.asarray(phi_w(X), dtype=float)],
        method, budget, seed, batch,
    )
    return val, err


def phi_weighted_energy(m, phi: PhiFunction, f: ScalarField, method: str = "grid",
                        budget=None, seed: int = 0, batch=None) -> tuple[float, float]:
    """Entropy-weighted energy E[Phi''(f) |grad f|^2 phi]; nonnegative."""
    phi_w = m.potential.value

    def integrand(pts):
        vals = f.checked_values(pts)
        _check_in_interval(vals, phi, f, pts)
        return phi.d2(vals) * f.grad_sq(pts) * np.asarray(phi_w(pts), dtype=float)

    (val,), (err,), _ = integrate.expectation_bundle(m, [integrand], method, budget, seed, batch)
    return val, err


def _check_in_interval(vals: np.ndarray, phi: PhiFunction, f: ScalarField, pts: np.ndarray) -> None:
    a, b = phi.interval
    outside = (vals <= a) | (vals >= b)
    if np.any(outside):
        bad = pts[outside][0]
        raise DomainViolationError(
            f"field {f.label or '<anon>'} leaves the interval ({a:g}, {b:g}) of "
            f"{phi.label} at point {np.array2string(bad, precision=6)}"
        )
