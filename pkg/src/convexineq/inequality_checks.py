"""Full inequality verdicts: entropy, Beckner, covariance and limit runs.

Every check produces an :class:`InequalityReport` carrying both sides with
error estimates and a four-way verdict:

* ``violated``            only when lhs exceeds rhs by more than three times
  the combined error - numerical noise must never masquerade as a
  counterexample to a theorem;
* ``holds_with_equality`` when the two sides agree within that band (the
  saturation cases: linear coordinate functions on Cauchy measures);
* ``inconclusive``        when the error band swamps ten percent of the
  magnitudes (and for degenerate 0/0 probes in the limit experiments);
* ``holds``               otherwise.

The checked statements, for a measure with potential ``phi``, exponent
``beta`` and uniform convexity constant ``c``:

* entropy:     Ent(f) <= E[Phi''(f) |grad f|^2 phi] / (2 c (beta-1)),
  for admissible Phi and beta > n + 1;
* Beckner:     E[f^2] - E[f^p]^(2/p) <= (2-p)/(c (beta-1)) E[|grad f|^2 phi]
  for 1 <= p <= p_beta (p = 1 is the weighted Poincare inequality, and the
  constant is sharp: the sharpness probe drives f = 1 + eps*g to the
  saturating ratio 1);
* covariance:  |cov(g, h)| bounded by the mismatched L^q/L^p norms of
  Hessian-power weighted gradients with prefactor 1/(beta-1), for
  2 <= p <= p_beta_n;
* limits:      along phi_beta = 1 + psi/beta the Beckner check at p_beta
  rescales to the log-Sobolev inequality of exp(-psi), and the covariance
  check converges to the log-concave asymmetric estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import functionals as fn
from . import integrate
from .errors import DomainViolationError, ParameterError, PreconditionError
from .functionals import ScalarField
from .phi_functions import PhiFunction, is_admissible, p_beta, p_beta_n, phi_square
from .potentials import ConvexPotential, logconcave_radius, make_limit_family

__all__ = [
    "InequalityReport",
    "classify_verdict",
    "check_phi_entropy",
    "check_beckner",
    "SharpnessProbe",
    "sharpness_probe_beckner",
    "check_covariance",
    "limit_experiment_lsi",
    "limit_experiment_ccl",
    "gaussian_lsi_reference",
    "logconcave_ccl_reference",
    "normalized_psi",
]

#: covariance exponent cap; the p = infinity endpoint is approached, not hit
P_CAP = 64.0


@dataclass(frozen=True)
class InequalityReport:
    """One inequality instance: sides, errors, ratio, verdict, provenance."""

    inequality_id: str
    lhs: float
    lhs_err: float
    rhs: float
    rhs_err: float
    ratio: float
    verdict: str
    method: str
    seed: int | None = None
    config_hash: str | None = None
    timestamp: str | None = None
    detail: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        """Fixed wire schema; non-finite ratios serialize as null."""
        return {
            "inequality_id": self.inequality_id,
            "lhs": self.lhs,
            "lhs_err": self.lhs_err,
            "rhs": self.rhs,
            "rhs_err": self.rhs_err,
            "ratio": self.ratio if math.isfinite(self.ratio) else None,
            "verdict": self.verdict,
            "config_hash": self.config_hash,
            "seed": self.seed,
        }


def classify_verdict(lhs, lhs_err, rhs, rhs_err, degenerate_inconclusive=False) -> str:
    combined = 3.0 * (lhs_err + rhs_err)
    if not all(map(math.isfinite, (lhs, lhs_err, rhs, rhs_err))):
        return "inconclusive"
    scale = max(abs(lhs), abs(rhs))
    if degenerate_inconclusive and scale <= 1e-12:
        return "inconclusive"
    if lhs > rhs + combined:
        return "violated"
    if combined > 0.1 * scale and scale > 0.0:
        return "inconclusive"
    if abs(lhs - rhs) <= combined:
        return "holds_with_equality"
    return "holds"


def _ratio(lhs: float, rhs: float) -> float:
    if rhs == 0.0:
        return math.nan if lhs == 0.0 else math.inf * np.sign(lhs)
    return lhs / rhs


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _make_report(inequality_id, lhs, lhs_err, rhs, rhs_err, method, seed,
                 config_hash, detail, degenerate_inconclusive=False) -> InequalityReport:
    verdict = classify_verdict(lhs, lhs_err, rhs, rhs_err, degenerate_inconclusive)
    return InequalityReport(
        inequality_id, float(lhs), float(lhs_err), float(rhs), float(rhs_err),
        _ratio(lhs, rhs), verdict, method, seed, config_hash, _now(), detail,
    )


# ---------------------------------------------------------------------------
# Theorem-level entropy and Beckner checks
# ---------------------------------------------------------------------------

def _require_entropy_range(m) -> None:
    if m.beta <= m.dim + 1:
        raise PreconditionError(
            f"entropy inequalities need beta > n+1 = {m.dim + 1}, got beta = {m.beta}",
            limit=m.dim + 1,
        )
    if m.potential.convexity_constant_c <= 0:
        raise PreconditionError("the potential must be uniformly convex (c > 0)")


def _admissibility_samples(phi: PhiFunction, f: ScalarField) -> np.ndarray:
    lo = max(phi.interval[0], f.range_interval[0])
    hi = min(phi.interval[1], f.range_interval[1])
    if not (lo < hi):
        raise PreconditionError(
            f"range of field {f.label or '<anon>'} misses the interval of {phi.label}"
        )
    lo_f = lo if math.isfinite(lo) else -10.0
    hi_f = hi if math.isfinite(hi) else max(10.0, lo_f + 20.0)
    if lo_f > 0:
        return np.geomspace(lo_f * (1 + 1e-12), hi_f, 512)
    pad = 1e-9 * (hi_f - lo_f)
    return np.linspace(lo_f + pad, hi_f - pad, 512)


def check_phi_entropy(m, phi: PhiFunction, f: ScalarField, method: str = "grid",
                      budget: int | None = None, seed: int = 0,
                      config_hash: str | None = None) -> InequalityReport:
    """Entropy inequality report; requires admissible Phi and beta > n + 1."""
    _require_entropy_range(m)
    adm = is_admissible(phi, m.beta, m.dim, _admissibility_samples(phi, f))
    if not adm.admissible:
        raise PreconditionError(
            f"{phi.label} is not admissible at (beta={m.beta:g}, n={m.dim}); "
            f"witness t = {adm.witness:g}"
        )
    batch = None
    if method == "mc":
        batch = integrate.default_batch(m, budget or 10**5, seed)
    lhs, lhs_err = fn.phi_entropy(m, phi, f, method, budget, seed, batch)
    energy, energy_err = fn.phi_weighted_energy(m, phi, f, method, budget, seed, batch)
    pref = 1.0 / (2.0 * m.potential.convexity_constant_c * (m.beta - 1.0))
    return _make_report(
        "phi_entropy", lhs, lhs_err, pref * energy, pref * energy_err,
        method, seed, config_hash,
        {"beta": m.beta, "n": m.dim, "phi": phi.label, "field": f.label},
    )


def _beckner_sides(m, p: float, f: ScalarField, method: str, budget, seed):
    """(lhs, lhs_err, energy, energy_err) of the Beckner inequality at p.

    lhs = E[f^2] - E[f^p]^(2/p); energy = E[|grad f|^2 phi].  The MC route
    uses one sample batch for all terms and a joint delta method for the
    lhs, so the near-cancellation of the two moments does not inflate the
    error estimate.
    """
    fv = f.checked_values
    phi_w = m.potential.value

    def energy_vals(X):
        return f.grad_sq(X) * np.asarray(phi_w(X), dtype=float)

    if method == "mc":
        batch = integrate.default_batch(m, budget or 10**5, seed)
        vals = fv(batch.points)
        u = vals**2
        w = vals**p
        A, B = float(u.mean()), float(w.mean())
        lhs = A - B ** (2.0 / p)
        slope = (2.0 / p) * B ** (2.0 / p - 1.0)
        _, lhs_err = integrate.mc_mean_err(u - slope * w, batch)
        energy, energy_err = integrate.mc_mean_err(energy_vals(batch.points), batch)
        return lhs, lhs_err, energy, energy_err

    (f2, fp, energy), (f2_err, fp_err, energy_err), _ = integrate.expectation_bundle(
        m, [lambda X: fv(X) ** 2, lambda X: fv(X) ** p, energy_vals],
        method, budget, seed,
    )
    lhs = f2 - fp ** (2.0 / p)
    lhs_err = f2_err + (2.0 / p) * fp ** (2.0 / p - 1.0) * fp_err
    return lhs, lhs_err, energy, energy_err


def check_beckner(m, p: float, f: ScalarField, method: str = "grid",
                  budget: int | None = None, seed: int = 0,
                  config_hash: str | None = None) -> InequalityReport:
    """Beckner report at exponent p in [1, p_beta]; p = 1 is weighted Poincare."""
    _require_entropy_range(m)
    pb = p_beta(m.beta, m.dim)
    if not (1.0 <= p <= pb + 1e-12):
        raise PreconditionError(
            f"Beckner exponent must lie in [1, p_beta = {pb:.12g}], got p = {p}",
            limit=pb,
        )
    if p > 1.0 and not f.is_positive():
        raise PreconditionError(
            f"field {f.label or '<anon>'} must be positive (declared range > 0) for p > 1"
        )
    lhs, lhs_err, energy, energy_err = _beckner_sides(m, p, f, method, budget, seed)
    c = m.potential.convexity_constant_c
    pref = (2.0 - p) / (c * (m.beta - 1.0))
    return _make_report(
        "poincare" if p == 1.0 else "beckner",
        lhs, lhs_err, pref * energy, pref * energy_err, method, seed, config_hash,
        {"beta": m.beta, "n": m.dim, "p": p, "field": f.label},
    )


@dataclass(frozen=True)
class SharpnessProbe:
    """Ratio trace of the Beckner check along f = 1 + eps * g."""

    epsilons: tuple
    ratios: tuple
    verdicts: tuple
    convergence_rate: float    # fitted order of |1 - ratio| in eps


def sharpness_probe_beckner(m, p: float, g: ScalarField, epsilons,
                            method: str = "grid", budget: int | None = None,
                            seed: int = 0) -> SharpnessProbe:
    """Drive f = 1 + eps*g through the Beckner check and record lhs/rhs.

    For g a coordinate function on a Cauchy measure the ratios increase to
    1 as eps decreases: the constant is saturated in the small-perturbation
    limit, which is exactly the sharpness mechanism.  Requires zero-mean g
    and 1 + eps*g positive on the working domain.
    """
    _require_entropy_range(m)
    pb = p_beta(m.beta, m.dim)
    if not (1.0 <= p <= pb + 1e-12):
        raise PreconditionError(f"need p in [1, p_beta = {pb:.12g}]", limit=pb)
    mean_g, mean_err = integrate.expectation(m, g.checked_values, "grid")
    if abs(mean_g) > 3.0 * mean_err + 1e-8:
        raise PreconditionError(f"probe field must have zero mean, got {mean_g:.3e}")

    lo_g, hi_g = g.range_interval
    ratios, verdicts = [], []
    for eps in epsilons:
        if eps == 0.0:
            ratios.append(math.nan)
            verdicts.append("inconclusive")
            continue
        lo_f = 1.0 + min(eps * lo_g, eps * hi_g)
        hi_f = 1.0 + max(eps * lo_g, eps * hi_g)
        if lo_f <= 0.0:
            raise DomainViolationError(
                f"1 + eps*g leaves (0, inf) at eps = {eps:g} (range low {lo_f:g})"
            )
        f_eps = ScalarField(
            dim=m.dim,
            value=lambda X, e=eps: 1.0 + e * np.asarray(g.value(X), dtype=float),
            gradient=lambda X, e=eps: e * np.asarray(g.gradient(X), dtype=float),
            range_interval=(lo_f - 1e-12, hi_f + 1e-12),
            label=f"1+{eps:g}*{g.label}",
        )
        rep = check_beckner(m, p, f_eps, method, budget, seed)
        ratios.append(rep.ratio)
        verdicts.append(rep.verdict)

    pos = [(e, r) for e, r in zip(epsilons, ratios)
           if e > 0 and math.isfinite(r) and 0 < abs(1.0 - r) < 1.0]
    if len(pos) >= 2:
        le = np.log([e for e, _ in pos])
        lr = np.log([abs(1.0 - r) for _, r in pos])
        rate = float(np.polyfit(le, lr, 1)[0])
    else:
        rate = math.nan
    return SharpnessProbe(tuple(epsilons), tuple(ratios), tuple(verdicts), rate)


# ---------------------------------------------------------------------------
# covariance check
# ---------------------------------------------------------------------------

def _constant_hessian(pot: ConvexPotential) -> np.ndarray | None:
    probe = np.vstack([np.zeros((1, pot.dim)),
                       np.random.default_rng(7).uniform(-1.0, 1.0, (2, pot.dim))])
    H = np.asarray(pot.hessian(probe), dtype=float)
    if np.max(np.abs(H - H[0])) <= 1e-12 * (1.0 + np.max(np.abs(H[0]))):
        return H[0]
    return None


def _hess_power_tools(pot: ConvexPotential):
    """Callables (apply_power(X, G, s), lambda_min(X)) for Hessian powers."""
    H0 = _constant_hessian(pot)
    if H0 is not None:
        w0, V0 = np.linalg.eigh(H0)
        if w0.min() <= 0:
            raise ParameterError("covariance check needs a positive definite Hessian")

        def apply_power(X, G, s):
            P = (V0 * w0[None, :] ** s) @ V0.T
            return G @ P.T

        def lam_min(X):
            return np.full(np.asarray(X).shape[0], w0.min())

        return apply_power, lam_min

    def apply_power(X, G, s):
        w, V = np.linalg.eigh(np.asarray(pot.hessian(X), dtype=float))
        if w.min() <= 0:
            raise ParameterError("covariance check needs a positive definite Hessian")
        w = np.maximum(w, 1e-14)
        coeff = np.einsum("mij,mi->mj", V, G)
        return np.einsum("mij,mj->mi", V, coeff * w**s)

    def lam_min(X):
        w = np.linalg.eigvalsh(np.asarray(pot.hessian(X), dtype=float))
        return np.maximum(w[:, 0], 1e-14)

    return apply_power, lam_min


def check_covariance(m, g: ScalarField, h: ScalarField, p: float,
                     method: str = "grid", budget: int | None = None, seed: int = 0,
                     config_hash: str | None = None) -> InequalityReport:
    """Asymmetric covariance report at Hoelder exponent p in [2, p_beta_n].

    rhs = (E[|(D2phi)^(-1/p) grad g|^q phi])^(1/q)
          * (E[lam_min^(2-p) |(D2phi)^(-1/p) grad h|^p phi])^(1/p) / (beta-1)

    with q = p/(p-1) and matrix powers taken pointwise by symmetric
    eigendecomposition.  p is capped at 64: the p = infinity endpoint of
    the one-dimensional theory is approached, never evaluated.
    """
    n, beta = m.dim, m.beta
    if beta < n + 1:
        raise PreconditionError(
            f"covariance estimate needs beta >= n+1 = {n + 1}, got beta = {beta}",
            limit=n + 1,
        )
    pbn = p_beta_n(beta, n)
    if not (2.0 <= p <= pbn + 1e-12):
        raise PreconditionError(
            f"Hoelder exponent must lie in [2, p_beta_n = {pbn:.12g}], got p = {p}",
            limit=pbn,
        )
    if p > P_CAP:
        raise PreconditionError(
            f"p capped at {P_CAP:g} for numerical stability of p-th powers", limit=P_CAP
        )
    q = p / (p - 1.0)
    apply_power, lam_min = _hess_power_tools(m.potential)
    phi_w = m.potential.value

    def tg(X):
        W = apply_power(X, np.asarray(g.gradient(X), dtype=float), -1.0 / p)
        return np.linalg.norm(W, axis=-1) ** q * np.asarray(phi_w(X), dtype=float)

    def th(X):
        W = apply_power(X, np.asarray(h.gradient(X), dtype=float), -1.0 / p)
        return (lam_min(X) ** (2.0 - p) * np.linalg.norm(W, axis=-1) ** p
                * np.asarray(phi_w(X), dtype=float))

    batch = integrate.default_batch(m, budget or 10**5, seed) if method == "mc" else None
    cov, cov_err = fn.covariance(m, g, h, method, budget, seed, batch)
    (Tg, Th), (Tg_err, Th_err), _ = integrate.expectation_bundle(
        m, [tg, th], method, budget, seed, batch
    )

    fac_g = Tg ** (1.0 / q) if Tg > 0 else 0.0
    fac_h = Th ** (1.0 / p) if Th > 0 else 0.0
    rhs = fac_g * fac_h / (beta - 1.0)
    fac_g_err = (Tg ** (1.0 / q - 1.0) / q * Tg_err) if Tg > 0 else Tg_err ** (1.0 / q)
    fac_h_err = (Th ** (1.0 / p - 1.0) / p * Th_err) if Th > 0 else Th_err ** (1.0 / p)
    rhs_err = (fac_g_err * fac_h + fac_g * fac_h_err) / (beta - 1.0)
    return _make_report(
        "covariance", abs(cov), cov_err, rhs, rhs_err, method, seed, config_hash,
        {"beta": beta, "n": n, "p": p, "q": q, "g": g.label, "h": h.label},
    )


# ---------------------------------------------------------------------------
# limit experiments: recovering the log-concave inequalities as beta -> inf
# ---------------------------------------------------------------------------

def normalized_psi(psi: ConvexPotential) -> tuple[ConvexPotential, float, int]:
    """Shift psi additively so that exp(-psi) integrates to one.

    Returns the shifted potential together with the truncation radius and
    per-axis resolution used for reference quadrature under exp(-psi).
    """
    if psi.convexity_constant_c <= 0:
        raise PreconditionError("psi must be uniformly convex (rho > 0)")
    R = logconcave_radius(psi)
    N = integrate.default_points_per_dim(psi.dim, R)
    mass = integrate.integrate_box(
        lambda X: np.exp(-np.asarray(psi.value(X), dtype=float)), psi.dim, R, N
    )
    shift = math.log(mass)
    base_value = psi.value
    shifted = ConvexPotential(
        dim=psi.dim,
        value=lambda X: np.asarray(base_value(X), dtype=float) + shift,
        gradient=psi.gradient,
        hessian=psi.hessian,
        convexity_constant_c=psi.convexity_constant_c,
        kind=psi.kind,
        label=psi.label + "+norm",
    )
    return shifted, R, N


def _logconcave_grid(psi: ConvexPotential, R: float, N: int):
    return integrate.density_grid(
        lambda X: np.exp(-np.asarray(psi.value(X), dtype=float)), psi.dim, R, N
    )


def limit_experiment_lsi(psi: ConvexPotential, betas, f: ScalarField,
                         method: str = "grid", budget: int | None = None,
                         seed: int = 0, config_hash: str | None = None) -> list[InequalityReport]:
    """Beckner checks at p_beta along phi_beta = 1 + psi/beta, LSI-rescaled.

    Each report carries lhs = 2/(2-p) * Beckner-lhs (tending to the entropy
    of f^2 under exp(-psi)) and rhs = 2/(c_beta (beta-1)) * weighted energy
    (tending to (2/rho) * E[|grad f|^2]); ratios stay below one and
    approach the Gross ratio of the limit measure.
    """
    psi_n, _, _ = normalized_psi(psi)
    n = psi_n.dim
    reports = []
    for beta in betas:
        if beta <= n + 1:
            raise PreconditionError(f"limit runs need beta > n+1, got beta = {beta}")
        m = make_limit_family(psi_n, float(beta))
        p = p_beta(float(beta), n)
        if not f.is_positive():
            raise PreconditionError("the LSI limit requires a positive field")
        b_lhs, b_lhs_err, energy, energy_err = _beckner_sides(m, p, f, method, budget, seed)
        scale = 2.0 / (2.0 - p)
        lhs = scale * b_lhs
        lhs_err = scale * b_lhs_err
        c_beta = m.potential.convexity_constant_c
        pref = 2.0 / (c_beta * (beta - 1.0))
        reports.append(_make_report(
            "limit_lsi", lhs, lhs_err, pref * energy, pref * energy_err,
            method, seed, config_hash,
            {"beta": float(beta), "n": n, "p": p, "field": f.label},
            degenerate_inconclusive=True,
        ))
    return reports


def gaussian_lsi_reference(psi: ConvexPotential, f: ScalarField) -> tuple[float, float]:
    """Direct evaluation of Ent(f^2) and (2/rho) E[|grad f|^2] under exp(-psi)."""
    psi_n, R, N = normalized_psi(psi)
    grid = _logconcave_grid(psi_n, R, N)
    vals = f.checked_values(grid.nodes)
    f2 = float(grid.weights @ vals**2)
    ent = float(grid.weights @ (vals**2 * np.log(vals**2))) - f2 * math.log(f2)
    dirich = float(grid.weights @ f.grad_sq(grid.nodes))
    return ent, 2.0 / psi_n.convexity_constant_c * dirich


def limit_experiment_ccl(psi: ConvexPotential, betas, g: ScalarField, h: ScalarField,
                         p: float, method: str = "grid", budget: int | None = None,
                         seed: int = 0, config_hash: str | None = None) -> list[InequalityReport]:
    """Covariance checks along phi_beta = 1 + psi/beta at fixed p >= 2.

    The reported sides converge to the log-concave asymmetric covariance
    bound under exp(-psi) (Brascamp-Lieb at p = 2); the threshold
    p_beta_n grows with beta, so any fixed p is eventually admissible.
    """
    psi_n, _, _ = normalized_psi(psi)
    reports = []
    for beta in betas:
        m = make_limit_family(psi_n, float(beta))
        rep = check_covariance(m, g, h, p, method, budget, seed, config_hash)
        detail = dict(rep.detail)
        detail["limit_of"] = "ccl"
        reports.append(InequalityReport(
            rep.inequality_id, rep.lhs, rep.lhs_err, rep.rhs, rep.rhs_err,
            rep.ratio, rep.verdict, rep.method, rep.seed, rep.config_hash,
            rep.timestamp, detail,
        ))
    return reports


def logconcave_ccl_reference(psi: ConvexPotential, g: ScalarField, h: ScalarField,
                             p: float) -> tuple[float, float]:
    """Direct log-concave covariance bound under exp(-psi) at exponent p.

    Uses the same Hessian-power split as the finite-beta theorem (powers
    -1/p on both gradients), whose beta -> infinity limit this is; at
    p = 2 it is the Brascamp-Lieb bound.
    """
    if p < 2:
        raise ParameterError(f"need p >= 2, got {p}")
    q = p / (p - 1.0)
    psi_n, R, N = normalized_psi(psi)
    grid = _logconcave_grid(psi_n, R, N)
    apply_power, lam_min = _hess_power_tools(psi_n)
    gv = g.checked_values(grid.nodes)
    hv = h.checked_values(grid.nodes)
    cov = float(grid.weights @ (gv * hv)) - float(grid.weights @ gv) * float(grid.weights @ hv)
    Wg = apply_power(grid.nodes, np.asarray(g.gradient(grid.nodes), dtype=float), -1.0 / p)
    Wh = apply_power(grid.nodes, np.asarray(h.gradient(grid.nodes), dtype=float), -1.0 / p)
    Tg = float(grid.weights @ np.linalg.norm(Wg, axis=-1) ** q)
    Th = float(grid.weights @ (lam_min(grid.nodes) ** (2.0 - p)
                               * np.linalg.norm(Wh, axis=-1) ** p))
    return abs(cov), Tg ** (1.0 / q) * Th ** (1.0 / p)
