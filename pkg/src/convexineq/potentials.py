"""Convex potentials and the probability measures they weight.

A potential ``phi`` is a positive, strictly convex C^2 function on R^n; the
associated measure has density ``phi(x)**(-beta) / Z``.  The distinguished
family is the generalized Cauchy one, ``phi(x) = 1 + |x|^2``, whose
normalization and moments are known in closed form and which saturates the
inequalities this package verifies.

Measures are truncated to a centered box [-R, R]^n for quadrature; R is
chosen so the estimated tail mass outside the box stays below ``1e-9``
(power-law bound for quadratic-growth potentials, ray-sampled numeric bound
otherwise).  The normalization constant is computed once at construction
and stamped with an error estimate from a (half step, doubled radius)
refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import gammaln

from . import integrate
from .errors import (
    DomainViolationError,
    EvaluationError,
    ParameterError,
    UnsupportedDimensionError,
)

__all__ = [
    "ConvexPotential",
    "ConvexMeasure",
    "cauchy_potential",
    "quadratic_potential",
    "quadratic_psi",
    "standard_gaussian_psi",
    "limit_family_potential",
    "make_cauchy",
    "make_limit_family",
    "make_measure",
    "min_hessian_eigenvalue",
    "measure_from_config",
    "cauchy_normalization",
    "logconcave_radius",
]

TAIL_TARGET = integrate.TAIL_TARGET


def _as_points(x, n: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[-1] != n:
        raise ParameterError(f"points must have {n} coordinates, got shape {pts.shape}")
    return pts


@dataclass(frozen=True, eq=False)
class ConvexPotential:
    """Positive convex function with gradient and Hessian evaluators.

    ``value`` maps (m, n) points to (m,) positives, ``gradient`` to (m, n),
    ``hessian`` to (m, n, n).  ``convexity_constant_c`` is a declared lower
    bound on the Hessian eigenvalues (0 when unknown).  Evaluators left as
    ``None`` fall back to central finite differences with step
    ``1e-5 * (1 + |x|)``.
    """

    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    hessian: Callable[[np.ndarray], np.ndarray] | None = None
    convexity_constant_c: float = 0.0
    kind: str = "generic"
    label: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError(f"dimension must be positive, got {self.dim}")
        if self.gradient is None:
            object.__setattr__(self, "gradient", _fd_gradient(self.value, self.dim))
        if self.hessian is None:
            object.__setattr__(self, "hessian", _fd_hessian(self.value, self.dim))


def _fd_step(pts: np.ndarray) -> np.ndarray:
    return 1e-5 * (1.0 + np.linalg.norm(pts, axis=-1, keepdims=True))


def _fd_gradient(value, n: int):
    def grad(x):
        pts = _as_points(x, n)
        h = _fd_step(pts)
        out = np.empty_like(pts)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            out[:, i] = (value(pts + h * e) - value(pts - h * e)).ravel() / (2.0 * h.ravel())
        return out
    return grad


def _fd_hessian(value, n: int):
    def hess(x):
        pts = _as_points(x, n)
        m = pts.shape[0]
        h = _fd_step(pts).ravel()
        out = np.empty((m, n, n))
        f0 = np.asarray(value(pts), dtype=float)
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = 1.0
            fpp = np.asarray(value(pts + h[:, None] * ei), dtype=float)
            fmm = np.asarray(value(pts - h[:, None] * ei), dtype=float)
            out[:, i, i] = (fpp - 2.0 * f0 + fmm) / h**2
            for j in range(i + 1, n):
                ej = np.zeros(n)
                ej[j] = 1.0
                fp = np.asarray(value(pts + h[:, None] * (ei + ej)), dtype=float)
                fm = np.asarray(value(pts - h[:, None] * (ei + ej)), dtype=float)
                fpm = np.asarray(value(pts + h[:, None] * (ei - ej)), dtype=float)
                fmp = np.asarray(value(pts - h[:, None] * (ei - ej)), dtype=float)
                out[:, i, j] = out[:, j, i] = (fp + fm - fpm - fmp) / (4.0 * h**2)
        return out
    return hess


def cauchy_potential(n: int) -> ConvexPotential:
    """phi(x) = 1 + |x|^2 with gradient 2x and constant Hessian 2*I."""
    return ConvexPotential(
        dim=n,
        value=lambda x: 1.0 + (_as_points(x, n) ** 2).sum(axis=-1),
        gradient=lambda x: 2.0 * _as_points(x, n),
        hessian=lambda x: np.broadcast_to(
            2.0 * np.eye(n), (_as_points(x, n).shape[0], n, n)
        ).copy(),
        convexity_constant_c=2.0,
        kind="cauchy",
        label="cauchy",
    )


def quadratic_potential(matrix, const: float = 1.0) -> ConvexPotential:
    """phi(x) = const + <A x, x> for a symmetric positive definite A."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-12):
        raise ParameterError("matrix must be square and symmetric")
    lam_min = float(np.linalg.eigvalsh(A)[0])
    if lam_min <= 0:
        raise ParameterError("matrix must be positive definite")
    if const <= 0:
        raise ParameterError("const must be positive so the potential stays positive")
    return ConvexPotential(
        dim=n,
        value=lambda x: const + np.einsum("mi,ij,mj->m", _as_points(x, n), A, _as_points(x, n)),
        gradient=lambda x: 2.0 * _as_points(x, n) @ A,
        hessian=lambda x: np.broadcast_to(2.0 * A, (_as_points(x, n).shape[0], n, n)).copy(),
        convexity_constant_c=2.0 * lam_min,
        kind="quadratic",
        label="quadratic",
    )


def quadratic_psi(matrix, const: float = 0.0) -> ConvexPotential:
    """psi(x) = const + <M x, x>/2, the log-density of a Gaussian-type weight."""
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    n = M.shape[0]
    if M.shape != (n, n) or not np.allclose(M, M.T, atol=1e-12):
        raise ParameterError("matrix must be square and symmetric")
    rho = float(np.linalg.eigvalsh(M)[0])
    if rho <= 0:
        raise ParameterError("matrix must be positive definite")
    return ConvexPotential(
        dim=n,
        value=lambda x: const + 0.5 * np.einsum("mi,ij,mj->m", _as_points(x, n), M, _as_points(x, n)),
        gradient=lambda x: _as_points(x, n) @ M,
        hessian=lambda x: np.broadcast_to(M, (_as_points(x, n).shape[0], n, n)).copy(),
        convexity_constant_c=rho,
        kind="quadratic_psi",
        label="quadratic_psi",
    )


def standard_gaussian_psi(n: int) -> ConvexPotential:
    """psi(x) = |x|^2/2 + (n/2) log(2 pi): exp(-psi) is the standard Gaussian."""
    return quadratic_psi(np.eye(n), const=0.5 * n * math.log(2.0 * math.pi))


def limit_family_potential(psi: ConvexPotential, beta: float) -> ConvexPotential:
    """phi_beta = 1 + psi/beta; its convexity constant is psi's divided by beta."""
    n = psi.dim
    return ConvexPotential(
        dim=n,
        value=lambda x: 1.0 + np.asarray(psi.value(_as_points(x, n)), dtype=float) / beta,
        gradient=lambda x: np.asarray(psi.gradient(_as_points(x, n)), dtype=float) / beta,
        hessian=lambda x: np.asarray(psi.hessian(_as_points(x, n)), dtype=float) / beta,
        convexity_constant_c=psi.convexity_constant_c / beta,
        kind="limit_family",
        label=f"limit[{psi.label or 'psi'}, beta={beta:g}]",
    )


@dataclass(frozen=True, eq=False)
class ConvexMeasure:
    """Probability measure with density phi^(-beta)/Z on a working box.

    Immutable after construction; ``normalization_Z`` carries the error
    estimate ``z_error`` from a refined requadrature, and ``radius`` is the
    half width of the box outside which the tail mass is below 1e-9.
    """

    potential: ConvexPotential
    beta: float
    dim: int
    normalization_Z: float
    z_error: float
    radius: float
    points_per_dim: int
    mode: str = "quadrature"   # "quadrature" | "mc"

    def log_unnorm_density(self, x) -> np.ndarray:
        phi = np.asarray(self.potential.value(_as_points(x, self.dim)), dtype=float)
        if np.any(phi <= 0):
            raise DomainViolationError("potential is nonpositive at an evaluated point")
        return -self.beta * np.log(phi)

    def density(self, x) -> np.ndarray:
        return np.exp(self.log_unnorm_density(x) - math.log(self.normalization_Z))


def cauchy_normalization(n: int, beta: float) -> float:
    """Closed form of the Cauchy normalization: pi^(n/2) G(beta-n/2)/G(beta)."""
    return math.exp(0.5 * n * math.log(math.pi) + gammaln(beta - 0.5 * n) - gammaln(beta))


def _sphere_area(n: int) -> float:
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _cauchy_radius(n: int, beta: float, target: float = TAIL_TARGET) -> float:
    # unnormalized tail <= S_{n-1} R^{n-2 beta} / (2 beta - n); solve for R
    Z = cauchy_normalization(n, beta)
    R = (target * Z * (2.0 * beta - n) / _sphere_area(n)) ** (1.0 / (n - 2.0 * beta))
    return max(R, 2.0)


def _ray_radius_core(log_density, n: int, target: float = TAIL_TARGET) -> float:
    """Radius rule via log-segment ray integration of a log-density.

    Bounds the density along radial rays by its maximum over a direction
    stencil, integrates shells on a geometric radial grid assuming a local
    power law, and picks the smallest grid radius whose outward remainder is
    below ``target`` times the whole-space bound.
    """
    dirs = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        dirs.extend([e, -e])
    dirs.append(np.ones(n) / math.sqrt(n))
    dirs.append(-np.ones(n) / math.sqrt(n))
    D = np.array(dirs)

    g = 1.25
    radii = 1.0 * g ** np.arange(0, 220)
    pts = radii[:, None, None] * D[None, :, :]
    logvals = np.asarray(log_density(pts.reshape(-1, n)), dtype=float).reshape(len(radii), len(D))
    logu = logvals.max(axis=1)  # max density over directions

    area = _sphere_area(n)
    seg = np.zeros(len(radii))
    with np.errstate(over="ignore", under="ignore"):
        for k in range(len(radii) - 1):
            s = (logu[k] - logu[k + 1]) / math.log(g)
            if not math.isfinite(s):
                break
            ex = n - s
            if abs(ex) < 1e-12:
                factor = math.log(g)
            else:
                factor = (g**ex - 1.0) / ex
            seg[k] = area * math.exp(logu[k] + n * math.log(radii[k])) * factor
    s_last = (logu[-2] - logu[-1]) / math.log(g)
    rem = 0.0
    if s_last > n and math.isfinite(s_last):
        rem = area * math.exp(logu[-1] + n * math.log(radii[-1])) / (s_last - n)
    tails = np.cumsum(seg[::-1])[::-1] + rem
    total = tails[0] + math.exp(logu[0])  # crude core contribution, scale only
    idx = np.argmax(tails <= target * total)
    if tails[idx] > target * total:
        raise EvaluationError("could not locate a truncation radius with the target tail mass")
    return float(radii[idx])


def _ray_radius(potential: ConvexPotential, beta: float, target: float = TAIL_TARGET) -> float:
    def logdens(pts):
        phi = np.asarray(potential.value(pts), dtype=float)
        if np.any(phi <= 0):
            raise DomainViolationError("potential is nonpositive on the working domain")
        return -beta * np.log(phi)

    return _ray_radius_core(logdens, potential.dim, target)


def logconcave_radius(psi: ConvexPotential, target: float = TAIL_TARGET) -> float:
    """Truncation radius for the probability density exp(-psi)."""
    return _ray_radius_core(
        lambda pts: -np.asarray(psi.value(pts), dtype=float), psi.dim, target
    )


def _auto_radius(potential: ConvexPotential, beta: float, n: int) -> float:
    if potential.kind == "cauchy":
        return _cauchy_radius(n, beta)
    return _ray_radius(potential, beta)


def _spot_check(potential: ConvexPotential, pts: np.ndarray) -> None:
    """Sampled invariants: positivity, Hessian symmetry, eigenvalue floor."""
    vals = np.asarray(potential.value(pts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("potential produced non-finite values")
    if np.any(vals <= 0):
        raise DomainViolationError("potential must be positive on the working domain")
    H = np.asarray(potential.hessian(pts), dtype=float)
    if not np.all(np.isfinite(H)):
        raise EvaluationError("Hessian evaluator produced non-finite entries")
    if np.max(np.abs(H - np.swapaxes(H, -1, -2))) > 1e-10:
        raise EvaluationError("Hessian is not symmetric within 1e-10")
    lam_min = np.linalg.eigvalsh(H)[..., 0].min()
    if lam_min < potential.convexity_constant_c - 1e-8:
        raise EvaluationError(
            f"sampled Hessian eigenvalue {lam_min:.3e} below the declared "
            f"convexity constant {potential.convexity_constant_c:.3e}"
        )


def _quadrature_normalization(potential, beta, n, radius, N) -> tuple[float, float]:
    def unnorm(X):
        phi = np.asarray(potential.value(X), dtype=float)
        if np.any(phi <= 0):
            raise DomainViolationError("potential is nonpositive inside the working box")
        return np.exp(-beta * np.log(phi))

    z0 = integrate.integrate_box(unnorm, n, radius, N)
    z1 = integrate.integrate_box(unnorm, n, 2.0 * radius, 4 * N)
    err = 2.0 * abs(z1 - z0) + 1e-14 * z1
    return z1, err


def _build_measure(potential, beta, n, radius, points_per_dim, mode) -> ConvexMeasure:
    if radius is None:
        radius = _auto_radius(potential, beta, n)
    if points_per_dim is None:
        points_per_dim = integrate.default_points_per_dim(min(n, 3), radius) if n <= 3 else 0

    check_pts = np.vstack(
        [np.zeros((1, n)), np.random.default_rng(0).uniform(-radius, radius, (64, n))]
    )
    _spot_check(potential, check_pts)

    if mode == "quadrature":
        if n > 3:
            raise UnsupportedDimensionError(
                "quadrature normalization supports n <= 3; pass mode='mc' for larger n"
            )
        Z, z_err = _quadrature_normalization(potential, beta, n, radius, points_per_dim)
    else:
        raise ParameterError("mode 'mc' is only available for the Cauchy family")
    return ConvexMeasure(potential, float(beta), n, Z, z_err, float(radius), int(points_per_dim), mode)


def make_cauchy(
    n: int,
    beta: float,
    points_per_dim: int | None = None,
    radius: float | None = None,
    mode: str | None = None,
) -> ConvexMeasure:
    """Generalized Cauchy measure: density ~ (1 + |x|^2)^(-beta), beta > n/2.

    Normalization: closed Gamma-function form for n = 1 (and for the
    MC-only mode), midpoint quadrature for n in {2, 3}.  Requesting
    quadrature in higher dimension raises; theorem-level constraints on
    beta are enforced by the individual checks, not here.
    """
    if n < 1:
        raise ParameterError(f"dimension must be a positive integer, got {n}")
    if beta <= n / 2.0:
        raise ParameterError(f"integrability needs beta > n/2 = {n / 2}, got beta = {beta}")
    pot = cauchy_potential(n)
    if mode is None:
        mode = "quadrature" if n <= 3 else "mc"
    if mode == "quadrature" and n > 3:
        raise UnsupportedDimensionError(
            "quadrature normalization supports n <= 3; pass mode='mc' for larger n"
        )
    radius = _cauchy_radius(n, beta) if radius is None else float(radius)
    if mode == "mc" or n == 1:
        Z = cauchy_normalization(n, beta)
        z_err = 4.0 * np.finfo(float).eps * Z
        N = integrate.default_points_per_dim(n, radius) if (n <= 3 and points_per_dim is None) \
            else (points_per_dim or 0)
        return ConvexMeasure(pot, float(beta), n, Z, z_err, radius, int(N), mode)
    N = points_per_dim or integrate.default_points_per_dim(n, radius)
    Z, z_err = _quadrature_normalization(pot, beta, n, radius, N)
    return ConvexMeasure(pot, float(beta), n, Z, z_err, radius, int(N), "quadrature")


def make_limit_family(
    psi_potential: ConvexPotential,
    beta: float,
    points_per_dim: int | None = None,
    radius: float | None = None,
) -> ConvexMeasure:
    """Measure with potential phi_beta = 1 + psi/beta, converging to exp(-psi).

    ``psi_potential`` must be uniformly convex; ``beta`` must be large
    enough that phi_beta stays positive on the working box, otherwise a
    domain violation is raised.
    """
    if beta <= 0:
        raise ParameterError(f"beta must be positive, got beta = {beta}")
    pot = limit_family_potential(psi_potential, beta)
    n = pot.dim
    if radius is None:
        radius = _ray_radius(pot, beta)
    # probe out to 2R: normalization refinement evaluates the density there
    probe = np.random.default_rng(1).uniform(-2.0 * radius, 2.0 * radius, (256, n))
    probe = np.vstack([probe, np.zeros((1, n)), np.full((1, n), 2.0 * radius),
                       np.full((1, n), -2.0 * radius)])
    if np.any(np.asarray(pot.value(probe), dtype=float) <= 0):
        raise DomainViolationError(
            "phi_beta = 1 + psi/beta is nonpositive on the working domain; increase beta"
        )
    return _build_measure(pot, beta, n, radius, points_per_dim, "quadrature")


def make_measure(
    potential: ConvexPotential,
    beta: float,
    points_per_dim: int | None = None,
    radius: float | None = None,
) -> ConvexMeasure:
    """Quadrature-normalized measure for a user-supplied potential (n <= 3)."""
    if beta <= potential.dim / 2.0:
        raise ParameterError(
            f"integrability needs beta > n/2 = {potential.dim / 2}, got beta = {beta}"
        )
    return _build_measure(potential, beta, potential.dim, radius, points_per_dim, "quadrature")


def min_hessian_eigenvalue(potential: ConvexPotential, x) -> float:
    """Smallest eigenvalue of the potential Hessian at a point."""
    pts = _as_points(x, potential.dim)
    H = np.asarray(potential.hessian(pts), dtype=float)
    if not np.all(np.isfinite(H)):
        raise EvaluationError("Hessian evaluator produced non-finite entries")
    return float(np.linalg.eigvalsh(H)[..., 0].min())


def hessian_eigensystems(potential: ConvexPotential, pts: np.ndarray):
    """Batched symmetric eigendecomposition of the Hessian at many points."""
    H = np.asarray(potential.hessian(_as_points(pts, potential.dim)), dtype=float)
    if not np.all(np.isfinite(H)):
        raise EvaluationError("Hessian evaluator produced non-finite entries")
    return np.linalg.eigh(H)


def measure_from_config(cfg: dict) -> ConvexMeasure:
    """Build a measure from {"kind", "n", "beta", "params"} (see README)."""
    from .errors import ConfigError

    try:
        kind = cfg["kind"]
        n = int(cfg["n"])
        beta = float(cfg["beta"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"measure config needs 'kind', 'n', 'beta': {exc}") from exc
    params = cfg.get("params", {})
    N = params.get("points_per_dim")
    R = params.get("radius")
    if kind == "cauchy":
        return make_cauchy(n, beta, points_per_dim=N, radius=R, mode=params.get("mode"))
    if kind == "quadratic":
        if "matrix" not in params:
            raise ConfigError("quadratic measure config needs params.matrix")
        pot = quadratic_potential(params["matrix"], params.get("const", 1.0))
        return make_measure(pot, beta, points_per_dim=N, radius=R)
    if kind == "limit_family":
        psi_spec = params.get("psi", "standard_gaussian")
        if psi_spec == "standard_gaussian":
            psi = standard_gaussian_psi(n)
        elif isinstance(psi_spec, dict) and "matrix" in psi_spec:
            psi = quadratic_psi(psi_spec["matrix"], psi_spec.get("const", 0.0))
        else:
            raise ConfigError(f"unrecognized psi specification {psi_spec!r}")
        return make_limit_family(psi, beta, points_per_dim=N, radius=R)
    raise ConfigError(f"unknown measure kind {kind!r}")
