"""Pointwise algebraic and matrix inequalities behind the integral estimates.

The central object is the eigenvalue functional

    F(a) = (b-1) S2 - S1^2 + (p-2) * ((b-1) <lam^2, a> - S1 <lam, a>),

with ``lam`` the Hessian eigenvalues of a test function, ``S1 = sum(lam)``,
``S2 = sum(lam^2)`` and ``a`` on the probability simplex (``b`` is the
weight exponent beta).  F is affine in ``a``, so its minimum over the
simplex sits at a vertex; nonnegativity of that minimum for all eigenvalue
configurations is exactly what makes the asymmetric covariance estimate
work, and it holds precisely for ``2 <= p <= p_beta_n``.  Above the
threshold a violating configuration exists along the extremal pattern
``lam = (t, s, ..., s)`` with ``a`` at the matching vertex; the
counterexample search therefore reduces to a two-variable sign problem.

The module also hosts the scalar matrix inequalities used on the way
(trace versus Hilbert-Schmidt norm, the mixed Hessian term bound, the
fractional power bound) with vectorized randomized suites, and the
carre du champ / Gamma_2 calculus evaluated by finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ParameterError
from .phi_functions import p_beta_n

__all__ = [
    "ClaimInstance",
    "ClaimVerdict",
    "claim_F",
    "claim_vertex_values",
    "claim_holds",
    "pattern_min",
    "find_claim_flip",
    "find_violation",
    "laplacian_hs_bound",
    "mixed_term_bound",
    "matrix_power_bound",
    "sym_fractional_power",
    "carre_du_champ",
    "gamma2_logconcave",
    "gamma2_bochner",
    "commutation_residual",
    "SuiteResult",
    "laplacian_suite",
    "mixed_suite",
    "power_suite",
]


@dataclass(frozen=True)
class ClaimInstance:
    """One evaluation point of the claim functional F."""

    n: int
    beta: float
    p: float
    lambdas: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        a = np.asarray(self.a, dtype=float)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "a", a)
        if lam.shape != (self.n,) or a.shape != (self.n,):
            raise ParameterError("lambdas and a must be vectors of length n")
        if np.any(a < -1e-12) or abs(a.sum() - 1.0) > 1e-12:
            raise ParameterError("a must lie on the probability simplex within 1e-12")


@dataclass(frozen=True)
class ClaimVerdict:
    holds: bool
    min_scaled: float
    threshold: float
    witness: ClaimInstance | None


def claim_F(inst: ClaimInstance) -> float:
    """Evaluate F at the instance; affine in ``a`` and quadratic in ``lambdas``."""
    lam, a, b, p = inst.lambdas, inst.a, inst.beta, inst.p
    s1 = lam.sum()
    s2 = float(lam @ lam)
    return float((b - 1.0) * s2 - s1**2
                 + (p - 2.0) * ((b - 1.0) * (lam**2 @ a) - s1 * (lam @ a)))


def claim_vertex_values(lambdas: np.ndarray, beta: float, p: float) -> np.ndarray:
    """F at every simplex vertex; by affinity these bracket the simplex minimum."""
    lam = np.atleast_2d(np.asarray(lambdas, dtype=float))
    s1 = lam.sum(axis=1, keepdims=True)
    s2 = (lam**2).sum(axis=1, keepdims=True)
    base = (beta - 1.0) * s2 - s1**2
    vals = base + (p - 2.0) * ((beta - 1.0) * lam**2 - s1 * lam)
    return vals if lambdas.ndim > 1 else vals[0]


def _claim_scale(lambdas: np.ndarray, beta: float, p: float) -> np.ndarray:
    lam = np.atleast_2d(np.asarray(lambdas, dtype=float))
    s2 = (lam**2).sum(axis=1)
    return (1.0 + abs(p - 2.0)) * ((beta - 1.0) * s2 + s2 * lam.shape[1]) + 1e-300


def _extremal_lambdas(n: int, beta: float, p: float) -> np.ndarray:
    """lam = (t*, s, ..., s) with sigma = (n-1)s = 1: the proof's equality pattern."""
    t = p / (2.0 * (beta - 2.0) * (p - 1.0)) if beta > 2.0 else 1.0
    lam = np.full(n, 1.0 / (n - 1))
    lam[0] = t
    return lam


def claim_holds(n: int, beta: float, p: float, trials: int = 10**5, seed: int = 0) -> ClaimVerdict:
    """Randomized + adversarial verdict on nonnegativity of F at (n, beta, p).

    In one dimension F reduces to ``(beta-2)(p-1) lam^2`` and always holds.
    For n >= 2 the simplex minimum is evaluated at all vertices for random
    Gaussian eigenvalue draws plus structured patterns (axes, ties, the
    extremal near-threshold configuration); the verdict is negative as soon
    as a scaled vertex value drops below -1e-9.
    """
    if n < 1:
        raise ParameterError(f"dimension must be a positive integer, got {n}")
    if beta < n + 1:
        raise ParameterError(f"require beta >= n+1 = {n + 1}, got beta = {beta}")
    if p < 2:
        raise ParameterError(f"require p >= 2, got p = {p}")
    threshold = p_beta_n(beta, n)
    if n == 1:
        # F = (beta-2)(p-1) lam^2 >= 0 identically
        return ClaimVerdict(True, 0.0, threshold, None)

    rng = np.random.default_rng(seed)
    lam = rng.standard_normal((trials, n))
    tie = np.zeros((n - 1, n))
    for k in range(n - 1):
        tie[k, k], tie[k, k + 1] = 1.0, -1.0
    ext = _extremal_lambdas(n, beta, p)
    lam = np.vstack([lam, np.eye(n), -np.eye(n), np.ones((1, n)), tie,
                     ext[None, :], -ext[None, :], ext[::-1][None, :]])

    vals = claim_vertex_values(lam, beta, p)
    scale = _claim_scale(lam, beta, p)
    scaled = vals / scale[:, None]
    i, j = np.unravel_index(np.argmin(scaled), scaled.shape)
    worst = float(scaled[i, j])
    holds = worst >= -1e-9
    witness = None
    if not holds:
        a = np.zeros(n)
        a[j] = 1.0
        witness = ClaimInstance(n, beta, p, lam[i], a)
    return ClaimVerdict(holds, worst, threshold, witness)


def pattern_min(beta: float, n: int, p: float, grid: int = 4096) -> tuple[float, tuple[float, float]]:
    """Minimum of F over the extremal two-parameter pattern, unit normalized.

    Parametrizes ``lam_{i0} = cos(theta)`` and the tied remainder mass
    ``sigma = sin(theta)``; the vertex value is the quadratic form
    ``(beta-2)(p-1) t^2 + (beta-n)/(n-1) sigma^2 - p t sigma``.  A coarse
    theta grid brackets the minimum, then bounded scalar minimization
    refines it.
    """
    if n < 2:
        raise ParameterError("the pattern family needs n >= 2")
    A = (beta - 2.0) * (p - 1.0)
    B = (beta - n) / (n - 1.0)

    def val(theta):
        t, s = np.cos(theta), np.sin(theta)
        return A * t**2 + B * s**2 - p * t * s

    thetas = np.linspace(0.0, math.pi, grid)
    coarse = val(thetas)
    k = int(np.argmin(coarse))
    lo = thetas[max(0, k - 1)]
    hi = thetas[min(grid - 1, k + 1)]
    res = minimize_scalar(val, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-14})
    theta = float(res.x)
    return float(res.fun), (math.cos(theta), math.sin(theta))


def find_claim_flip(n: int, beta: float, p_hi: float | None = None, rtol: float = 1e-10) -> float:
    """Bisect the largest p at which the extremal pattern stays nonnegative."""
    if n < 2:
        raise ParameterError("the one-dimensional claim never flips")
    lo = 2.0
    if pattern_min(beta, n, lo)[0] < -1e-13:
        return lo
    hi = p_hi if p_hi is not None else max(4.0, 4.0 * p_beta_n(beta, n))
    if pattern_min(beta, n, hi)[0] >= 0:
        raise ParameterError(f"no sign change up to p = {hi}")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if pattern_min(beta, n, mid)[0] >= -1e-14:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_violation(n: int, beta: float, p: float) -> ClaimInstance | None:
    """Explicit violating instance above the threshold, if one exists.

    Grid + refinement over the pattern angle; returns the instance at the
    most negative vertex value, or None when the claim holds at this p.
    """
    if n < 2:
        return None
    fmin, (t, s) = pattern_min(beta, n, p)
    if fmin >= -1e-13:
        return None
    lam = np.full(n, s / (n - 1.0))
    lam[0] = t
    a = np.zeros(n)
    a[0] = 1.0
    return ClaimInstance(n, beta, p, lam, a)


# ---------------------------------------------------------------------------
# scalar matrix inequalities
# ---------------------------------------------------------------------------

def laplacian_hs_bound(H) -> bool:
    """(trace H)^2 <= n ||H||_HS^2 for symmetric H; equality at multiples of I."""
    H = np.asarray(H, dtype=float)
    n = H.shape[-1]
    tr = np.trace(H, axis1=-2, axis2=-1)
    hs2 = (H**2).sum(axis=(-2, -1))
    return bool(np.all(tr**2 <= n * hs2 + 1e-12 * (1.0 + hs2)))


def mixed_term_bound(H, v, beta: float) -> bool:
    """|4(b-1)/(b-2) <Hv,v> - tr(H)/(b-2)| <= sqrt((4b-5)^2+n-1)/(b-2) ||H||_HS.

    Requires a unit vector v and beta > 2 (the shared (beta-2) factor must
    be positive).
    """
    H = np.asarray(H, dtype=float)
    v = np.asarray(v, dtype=float)
    if beta <= 2.0:
        raise ParameterError(f"mixed term bound needs beta > 2, got {beta}")
    if abs(np.linalg.norm(v) - 1.0) > 1e-8:
        raise ParameterError("v must be a unit vector")
    n = H.shape[-1]
    lhs = abs(4.0 * (beta - 1.0) / (beta - 2.0) * (v @ H @ v) - np.trace(H) / (beta - 2.0))
    rhs = math.sqrt((4.0 * beta - 5.0) ** 2 + n - 1.0) / (beta - 2.0) * np.linalg.norm(H, "fro")
    return bool(lhs <= rhs + 1e-12 * (1.0 + rhs))


def sym_fractional_power(A, s: float) -> np.ndarray:
    """A^s for symmetric positive definite A via eigendecomposition.

    Eigenvalues are clamped below at 1e-14 before powering; a genuinely
    non-SPD input raises.
    """
    A = np.asarray(A, dtype=float)
    if not np.allclose(A, np.swapaxes(A, -1, -2), atol=1e-10):
        raise ParameterError("matrix must be symmetric")
    w, V = np.linalg.eigh(A)
    if np.min(w) <= 0:
        raise ParameterError("matrix must be positive definite")
    w = np.maximum(w, 1e-14)
    return (V * w[..., None, :] ** s) @ np.swapaxes(V, -1, -2)


def matrix_power_bound(A, v, p: float) -> bool:
    """|A^{1/p} v|^p <= |v|^{p-2} |A^{1/2} v|^2 and the eigenvalue floor bound.

    The floor bound is |v| <= lambda_min(A)^{-1/p} |A^{1/p} v|.  Both hold
    for every SPD A, nonzero v and p >= 2.
    """
    if p < 2:
        raise ParameterError(f"matrix power bound needs p >= 2, got {p}")
    A = np.asarray(A, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) == 0:
        raise ParameterError("v must be nonzero")
    if not np.allclose(A, A.T, atol=1e-10):
        raise ParameterError("matrix must be symmetric")
    w, V = np.linalg.eigh(A)
    if w.min() <= 0:
        raise ParameterError("matrix must be positive definite")
    w = np.maximum(w, 1e-14)
    c = V.T @ v
    nv = np.linalg.norm(v)
    lhs = float((w ** (2.0 / p) @ c**2)) ** (p / 2.0)
    rhs = nv ** (p - 2.0) * float(w @ c**2)
    first = lhs <= rhs * (1.0 + 1e-10) + 1e-300
    root_p = float(np.sqrt(w ** (2.0 / p) @ c**2))
    second = nv <= w.min() ** (-1.0 / p) * root_p * (1.0 + 1e-10)
    return bool(first and second)


# ---------------------------------------------------------------------------
# randomized suites (vectorized)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SuiteResult:
    trials: int
    failures: int
    worst_margin: float   # most negative scaled slack observed (>= 0 is clean)

    @property
    def passed(self) -> bool:
        return self.failures == 0


def laplacian_suite(trials: int = 10**5, dims=(2, 3, 4, 5, 6), seed: int = 0) -> SuiteResult:
    """Random symmetric matrices: scaled slack of (tr H)^2 <= n ||H||^2."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    failures = 0
    per = trials // len(dims)
    for n in dims:
        A = rng.standard_normal((per, n, n))
        H = 0.5 * (A + np.swapaxes(A, 1, 2))
        H = np.vstack([H, np.eye(n)[None], np.zeros((1, n, n))])
        tr = np.trace(H, axis1=1, axis2=2)
        hs2 = (H**2).sum(axis=(1, 2))
        slack = (n * hs2 - tr**2) / (1.0 + n * hs2)
        worst = min(worst, float(slack.min()))
        failures += int((slack < -1e-12).sum())
    return SuiteResult(trials, failures, worst)


def mixed_suite(trials: int = 10**5, dims=(2, 3), betas=(4.0, 6.0, 10.0), seed: int = 0) -> SuiteResult:
    """Random (H, v, beta): scaled slack of the mixed Hessian term bound."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    failures = 0
    per = trials // (len(dims) * len(betas))
    for n in dims:
        for beta in betas:
            A = rng.standard_normal((per, n, n))
            H = 0.5 * (A + np.swapaxes(A, 1, 2))
            v = rng.standard_normal((per, n))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            quad = np.einsum("mi,mij,mj->m", v, H, v)
            tr = np.trace(H, axis1=1, axis2=2)
            lhs = np.abs(4.0 * (beta - 1.0) * quad - tr) / (beta - 2.0)
            rhs = (math.sqrt((4.0 * beta - 5.0) ** 2 + n - 1.0) / (beta - 2.0)
                   * np.sqrt((H**2).sum(axis=(1, 2))))
            slack = (rhs - lhs) / (1.0 + rhs)
            worst = min(worst, float(slack.min()))
            failures += int((slack < -1e-12).sum())
    return SuiteResult(trials, failures, worst)


def power_suite(trials: int = 10**5, dims=(2, 3, 5), p_range=(2.0, 40.0), seed: int = 0) -> SuiteResult:
    """Random SPD (A, v, p): scaled slack of the fractional power bound."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    failures = 0
    per = trials // len(dims)
    for n in dims:
        G = rng.standard_normal((per, n, n))
        A = G @ np.swapaxes(G, 1, 2) + 0.05 * np.eye(n)
        w, V = np.linalg.eigh(A)
        v = rng.standard_normal((per, n))
        p = rng.uniform(p_range[0], p_range[1], per)
        c2 = np.einsum("mij,mi->mj", V, v) ** 2
        nv2 = c2.sum(axis=1)
        lhs = (np.sum(w ** (2.0 / p[:, None]) * c2, axis=1)) ** (p / 2.0)
        rhs = nv2 ** ((p - 2.0) / 2.0) * np.sum(w * c2, axis=1)
        slack = (rhs - lhs) / (1.0 + np.abs(rhs))
        floor_slack = (w[:, 0] ** (-1.0 / p)
                       * np.sqrt(np.sum(w ** (2.0 / p[:, None]) * c2, axis=1))
                       - np.sqrt(nv2)) / (1.0 + np.sqrt(nv2))
        worst = min(worst, float(slack.min()), float(floor_slack.min()))
        failures += int((slack < -1e-10).sum()) + int((floor_slack < -1e-10).sum())
    return SuiteResult(trials, failures, worst)


# ---------------------------------------------------------------------------
# carre du champ calculus (finite differences, Richardson extrapolated)
# ---------------------------------------------------------------------------

def _fd_grad_scalar(func, x: np.ndarray, h: float) -> np.ndarray:
    n = x.size
    out = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        d1 = (func(x + e) - func(x - e)) / (2.0 * h)
        d2 = (func(x + 2.0 * e) - func(x - 2.0 * e)) / (4.0 * h)
        out[i] = (4.0 * d1 - d2) / 3.0
    return out


def _fd_laplacian_scalar(func, x: np.ndarray, h: float) -> float:
    n = x.size
    f0 = func(x)
    total = 0.0
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        s1 = (func(x + e) - 2.0 * f0 + func(x - e)) / h**2
        s2 = (func(x + 2.0 * e) - 2.0 * f0 + func(x - 2.0 * e)) / (4.0 * h**2)
        total += (4.0 * s1 - s2) / 3.0
    return total


def _scalar_eval(field, x: np.ndarray) -> float:
    return float(np.asarray(field.value(x[None, :]), dtype=float)[0])


def _apply_L_fd(m, func, x: np.ndarray, h: float) -> float:
    """L func at x with phi analytic and func differentiated numerically."""
    pot = m.potential
    phi = float(np.asarray(pot.value(x[None, :]))[0])
    gphi = np.asarray(pot.gradient(x[None, :]), dtype=float)[0]
    lap = _fd_laplacian_scalar(func, x, h)
    grad = _fd_grad_scalar(func, x, h)
    return phi * lap - (m.beta - 1.0) * float(gphi @ grad)


def carre_du_champ(m, f, g, x) -> float:
    """Gamma(f, g)(x) = (L(fg) - f Lg - g Lf)/2, differentiated numerically.

    For the weighted generator this equals ``phi(x) <grad f, grad g>``; the
    finite-difference route keeps the check independent of that identity.
    """
    x = np.asarray(x, dtype=float).ravel()
    h = 1e-3 * (1.0 + float(np.linalg.norm(x)))
    fv = lambda y: _scalar_eval(f, y)
    gv = lambda y: _scalar_eval(g, y)
    prod = lambda y: fv(y) * gv(y)
    Lfg = _apply_L_fd(m, prod, x, h)
    Lf = _apply_L_fd(m, fv, x, h)
    Lg = _apply_L_fd(m, gv, x, h)
    return 0.5 * (Lfg - fv(x) * Lg - gv(x) * Lf)


def _apply_L_psi(psi, func, x: np.ndarray, h: float) -> float:
    gpsi = np.asarray(psi.gradient(x[None, :]), dtype=float)[0]
    return _fd_laplacian_scalar(func, x, h) - float(gpsi @ _fd_grad_scalar(func, x, h))


def gamma2_logconcave(psi, f, x) -> float:
    """Definitional Gamma_2 of f at x for L = Laplacian - <grad psi, grad .>.

    Computed as ``(L Gamma(f) - 2 <grad f, grad(Lf)>)/2`` with the inner
    objects (``Gamma(f) = |grad f|^2`` and ``Lf``) evaluated from the
    field's analytic derivatives and the outer derivatives by finite
    differences; compare with :func:`gamma2_bochner`.
    """
    x = np.asarray(x, dtype=float).ravel()
    h = 1e-3 * (1.0 + float(np.linalg.norm(x)))

    def grad_f(y):
        return np.asarray(f.gradient(y[None, :]), dtype=float)[0]

    def gamma_f(y):
        gf = grad_f(y)
        return float(gf @ gf)

    def lap_f(y):
        if f.hessian is not None:
            return float(np.trace(np.asarray(f.hessian(y[None, :]), dtype=float)[0]))
        return _fd_laplacian_scalar(lambda z: _scalar_eval(f, z), y, h)

    def Lf(y):
        gpsi = np.asarray(psi.gradient(y[None, :]), dtype=float)[0]
        return lap_f(y) - float(gpsi @ grad_f(y))

    term1 = _apply_L_psi(psi, gamma_f, x, h)
    term2 = float(grad_f(x) @ _fd_grad_scalar(Lf, x, h))
    return 0.5 * term1 - term2


def gamma2_bochner(psi, f, x) -> float:
    """Bochner form of Gamma_2: ||D^2 f||_HS^2 + <D^2 psi grad f, grad f>."""
    x = np.asarray(x, dtype=float).ravel()[None, :]
    if f.hessian is not None:
        Hf = np.asarray(f.hessian(x), dtype=float)[0]
    else:
        from .potentials import _fd_hessian

        Hf = _fd_hessian(f.value, x.shape[1])(x)[0]
    gf = np.asarray(f.gradient(x), dtype=float)[0]
    Hpsi = np.asarray(psi.hessian(x), dtype=float)[0]
    return float((Hf**2).sum() + gf @ Hpsi @ gf)


def commutation_residual(m, g, x) -> np.ndarray:
    """Residual of the gradient/generator commutation identity at a point.

    Returns the vector ``grad(Lg) - L(grad g) - grad(phi) Lap(g)
    + (beta-1) D^2(phi) grad(g)``, which vanishes identically for the
    weighted generator; evaluated with outer derivatives by finite
    differences so the identity is actually tested.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    pot = m.potential
    h = 1e-3 * (1.0 + float(np.linalg.norm(x)))

    def grad_g(y):
        return np.asarray(g.gradient(y[None, :]), dtype=float)[0]

    def hess_g(y):
        return np.asarray(g.hessian(y[None, :]), dtype=float)[0]

    def Lg(y):
        phi = float(np.asarray(pot.value(y[None, :]))[0])
        gphi = np.asarray(pot.gradient(y[None, :]), dtype=float)[0]
        return phi * float(np.trace(hess_g(y))) - (m.beta - 1.0) * float(gphi @ grad_g(y))

    grad_Lg = _fd_grad_scalar(Lg, x, h)

    phi = float(np.asarray(pot.value(x[None, :]))[0])
    gphi = np.asarray(pot.gradient(x[None, :]), dtype=float)[0]
    Hphi = np.asarray(pot.hessian(x[None, :]), dtype=float)[0]
    Hg = hess_g(x)
    lap_g = float(np.trace(Hg))

    L_grad_g = np.empty(n)
    for i in range(n):
        lap_di = _fd_laplacian_scalar(lambda y, i=i: grad_g(y)[i], x, h)
        L_grad_g[i] = phi * lap_di - (m.beta - 1.0) * float(gphi @ Hg[i])

    return grad_Lg - L_grad_g - gphi * lap_g + (m.beta - 1.0) * (Hphi @ grad_g(x))
