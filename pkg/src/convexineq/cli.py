"""Batch command-line front end.

One JSON config file drives each run; no mathematical parameters live on
the command line (reproducibility flows from the config hash plus the
seed).  Subcommands:

  report   inequality checks (entropy / Beckner / covariance) -> reports.json
  gap      spectral-gap sweep of the discretized generator -> gap.csv
  flow     semigroup diagnostics alpha(t), alpha'(t) -> flow.csv
  claim    pointwise claim verdict with threshold and witness -> claim.json
  cov      covariance checks -> reports.json
  limit    beta -> infinity limit experiments -> reports.json
  sample   draw and store samples -> samples.csv

Every command writes a ``manifest.json`` recording the config hash, the
seed, the command and the produced files; re-running a manifest's config
reproduces the report files byte for byte.  Output files are written to a
temporary name and renamed, so failed runs leave no partial outputs.

Exit codes: 0 success (including an expected falsification above the claim
threshold), 1 violated verdicts, 2 malformed config, 3 precondition
violations.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import functionals as fn
from . import generator as gen
from . import inequality_checks as ic
from . import integrate
from . import pointwise_calculus as pc
from . import potentials as pot
from .errors import (
    ConfigError,
    DomainViolationError,
    ParameterError,
    PreconditionError,
)
from .phi_functions import p_beta, p_beta_n, phi_from_config

EXIT_OK = 0
EXIT_VIOLATED = 1
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_manifest(out: Path, command: str, cfg: dict, seed: int, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "artifact_version": __version__,
        "outputs": sorted(outputs),
    }
    _write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _reports_json(reports) -> str:
    return json.dumps([r.to_json_dict() for r in reports], indent=2) + "\n"


def _reports_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["inequality_id", "beta", "n", "p", "field", "method",
                     "lhs", "lhs_err", "rhs", "rhs_err", "ratio", "verdict"])
    for r in reports:
        d = r.detail
        field = d.get("field") or (f"{d.get('g')},{d.get('h')}" if "g" in d else "")
        writer.writerow([
            r.inequality_id, d.get("beta"), d.get("n"), d.get("p"), field, r.method,
            repr(r.lhs), repr(r.lhs_err), repr(r.rhs), repr(r.rhs_err),
            repr(r.ratio) if math.isfinite(r.ratio) else "", r.verdict,
        ])
    return buf.getvalue()


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON in {path} at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc


def _common(cfg: dict, args) -> tuple[Path, int, str, int | None]:
    out = Path(args.out or cfg.get("out", "out"))
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    method = args.method or cfg.get("method", "grid")
    if method not in ("grid", "mc"):
        raise ConfigError(f"method must be 'grid' or 'mc', got {method!r}")
    integration = cfg.get("integration", {})
    if method == "grid":
        budget = integration.get("grid", {}).get("points_per_dim")
    else:
        budget = integration.get("mc", {}).get("samples", 10**5)
    return out, seed, method, budget


def _resolve_p(spec, m) -> float:
    if spec == "p_beta":
        return p_beta(m.beta, m.dim)
    if spec == "p_beta_n":
        return min(p_beta_n(m.beta, m.dim), ic.P_CAP)
    return float(spec)


def _run_checks(cfg: dict, args, check_specs) -> int:
    out, seed, method, budget = _common(cfg, args)
    m = pot.measure_from_config(cfg["measure"])
    chash = config_hash(cfg)
    reports = []
    for i, spec in enumerate(check_specs):
        kind = spec.get("type", "beckner")
        check_seed = seed + i
        if kind == "phi_entropy":
            phi = phi_from_config(spec.get("phi", "square"))
            f = fn.field_from_config(spec["field"], m.dim)
            reports.append(ic.check_phi_entropy(m, phi, f, method, budget, check_seed, chash))
        elif kind == "beckner":
            f = fn.field_from_config(spec["field"], m.dim)
            p = _resolve_p(spec.get("p", 1.0), m)
            reports.append(ic.check_beckner(m, p, f, method, budget, check_seed, chash))
        elif kind == "covariance":
            g = fn.field_from_config(spec["g"], m.dim)
            h = fn.field_from_config(spec["h"], m.dim)
            p = _resolve_p(spec.get("p", 2.0), m)
            reports.append(ic.check_covariance(m, g, h, p, method, budget, check_seed, chash))
        else:
            raise ConfigError(f"unknown check type {kind!r}")
    _write_atomic(out / "reports.json", _reports_json(reports))
    _write_atomic(out / "reports.csv", _reports_csv(reports))
    _write_manifest(out, "report", cfg, seed, ["reports.json", "reports.csv"])
    for r in reports:
        print(f"{r.inequality_id:12s} {r.verdict:20s} lhs={r.lhs:.6g} rhs={r.rhs:.6g}")
    if any(r.verdict == "violated" for r in reports):
        return EXIT_VIOLATED
    return EXIT_OK


def cmd_report(cfg: dict, args) -> int:
    checks = cfg.get("checks")
    if not checks:
        raise ConfigError("report config needs a nonempty 'checks' list")
    return _run_checks(cfg, args, checks)


def cmd_cov(cfg: dict, args) -> int:
    pairs = cfg.get("pairs")
    if not pairs:
        raise ConfigError("cov config needs a nonempty 'pairs' list")
    specs = [dict(p, type="covariance") for p in pairs]
    return _run_checks(cfg, args, specs)


def cmd_gap(cfg: dict, args) -> int:
    out, seed, _, _ = _common(cfg, args)
    betas = cfg.get("betas") or cfg.get("measure", {}).get("beta_sweep")
    if not betas:
        raise ConfigError("gap config needs a nonempty 'betas' list")
    grid_cfg = cfg.get("grid", {})
    N = int(grid_cfg.get("N", 2000))
    R = grid_cfg.get("R", "auto")
    base = dict(cfg["measure"])
    rows = []
    outputs = []
    for beta in betas:
        mcfg = dict(base)
        mcfg["beta"] = beta
        mcfg.pop("beta_sweep", None)
        m = pot.measure_from_config(mcfg)
        dg = gen.assemble(m, points=N, radius=None if R == "auto" else float(R))
        gap = gen.spectral_gap(dg)
        bound = m.potential.convexity_constant_c * (m.beta - 1.0)
        rows.append((beta, gap, bound))
        _, vecs = gen.eigensystem(dg, k=2)
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["x" + str(i + 1) for i in range(dg.dim)] + ["eigvec"])
        for node, val in zip(dg.nodes, vecs[:, 1]):
            w.writerow([repr(v) for v in node] + [repr(val)])
        name = f"eigenfunction_beta{beta:g}.csv"
        _write_atomic(out / name, buf.getvalue())
        outputs.append(name)
        print(f"beta={beta:g}: gap={gap:.6f} bound={bound:.6f}")
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["beta", "gap", "bound"])
    for row in rows:
        w.writerow([repr(v) for v in row])
    _write_atomic(out / "gap.csv", buf.getvalue())
    _write_manifest(out, "gap", cfg, seed, ["gap.csv"] + outputs)
    return EXIT_OK


def cmd_flow(cfg: dict, args) -> int:
    out, seed, _, _ = _common(cfg, args)
    m = pot.measure_from_config(cfg["measure"])
    grid_cfg = cfg.get("grid", {})
    N = int(grid_cfg.get("N", 2000))
    R = grid_cfg.get("R", "auto")
    dg = gen.assemble(m, points=N, radius=None if R == "auto" else float(R))
    phi = phi_from_config(cfg.get("phi", "square"))
    f0_field = fn.field_from_config(cfg["f0"], m.dim)
    f0 = np.asarray(f0_field.value(dg.nodes), dtype=float)
    times = cfg.get("times")
    if not times:
        raise ConfigError("flow config needs a nonempty 'times' list")
    trace = gen.alpha_trace(dg, phi, f0, times)
    buf = io.StringIO()
    trace.to_csv(buf)
    _write_atomic(out / "flow.csv", buf.getvalue())
    summary = {
        "decay_fit_rate": trace.decay_fit_rate,
        "rate_bound": trace.rate_bound,
        "bound_satisfied": trace.bound_satisfied(),
        "config_hash": config_hash(cfg),
        "seed": seed,
    }
    _write_atomic(out / "flow_summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "flow", cfg, seed, ["flow.csv", "flow_summary.json"])
    print(f"fitted decay rate {trace.decay_fit_rate:.4f} (bound {trace.rate_bound:g})")
    return EXIT_OK


def cmd_claim(cfg: dict, args) -> int:
    out, seed, _, _ = _common(cfg, args)
    n = int(cfg["n"])
    beta = float(cfg["beta"])
    p = float(cfg["p"])
    trials = int(cfg.get("trials", 10**5))
    verdict = pc.claim_holds(n, beta, p, trials=trials, seed=seed)
    if verdict.holds:
        label = "holds" if p <= verdict.threshold + 1e-9 else "holds-above-threshold"
    else:
        label = "violated-above-threshold" if p > verdict.threshold else "violated"
    witness = None
    if verdict.witness is not None:
        witness = {
            "lambdas": list(verdict.witness.lambdas),
            "a": list(verdict.witness.a),
            "F": pc.claim_F(verdict.witness),
        }
    payload = {
        "n": n,
        "beta": beta,
        "p": p,
        "threshold": verdict.threshold if math.isfinite(verdict.threshold) else None,
        "verdict": label,
        "min_F": verdict.min_scaled,
        "witness": witness,
        "config_hash": config_hash(cfg),
        "seed": seed,
    }
    _write_atomic(out / "claim.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "claim", cfg, seed, ["claim.json"])
    print(f"claim at (n={n}, beta={beta:g}, p={p:g}): {label}")
    return EXIT_OK


def cmd_limit(cfg: dict, args) -> int:
    out, seed, method, budget = _common(cfg, args)
    experiment = cfg.get("experiment", "lsi")
    psi_spec = cfg.get("psi", "standard_gaussian")
    n = int(cfg.get("n", 1))
    if psi_spec == "standard_gaussian":
        psi = pot.standard_gaussian_psi(n)
    elif isinstance(psi_spec, dict) and "matrix" in psi_spec:
        psi = pot.quadratic_psi(psi_spec["matrix"], psi_spec.get("const", 0.0))
    else:
        raise ConfigError(f"unknown psi specification {psi_spec!r}")
    betas = cfg.get("betas")
    if not betas:
        raise ConfigError("limit config needs a nonempty 'betas' list")
    chash = config_hash(cfg)
    if experiment == "lsi":
        f = fn.field_from_config(cfg["field"], n)
        reports = ic.limit_experiment_lsi(psi, betas, f, method, budget, seed, chash)
    elif experiment == "ccl":
        g = fn.field_from_config(cfg["g"], n)
        h = fn.field_from_config(cfg["h"], n)
        p = float(cfg.get("p", 2.0))
        reports = ic.limit_experiment_ccl(psi, betas, g, h, p, method, budget, seed, chash)
    else:
        raise ConfigError(f"unknown limit experiment {experiment!r}")
    _write_atomic(out / "reports.json", _reports_json(reports))
    _write_atomic(out / "reports.csv", _reports_csv(reports))
    _write_manifest(out, "limit", cfg, seed, ["reports.json", "reports.csv"])
    for r, beta in zip(reports, betas):
        print(f"beta={beta:g}: {r.verdict:20s} ratio={r.ratio:.6g}")
    if any(r.verdict == "violated" for r in reports):
        return EXIT_VIOLATED
    return EXIT_OK


def cmd_sample(cfg: dict, args) -> int:
    out, seed, _, _ = _common(cfg, args)
    m = pot.measure_from_config(cfg["measure"])
    sampler = cfg.get("sampler", "exact")
    count = int(cfg.get("count", 10**5))
    if sampler == "exact":
        batch = integrate.sample_cauchy(m, count, seed)
    elif sampler == "metropolis":
        batch = integrate.sample_metropolis(
            m, count,
            burn_in=int(cfg.get("burn_in", 1000)),
            seed=seed,
            stride=int(cfg.get("stride", 1)),
        )
    else:
        raise ConfigError(f"unknown sampler {sampler!r}")
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow([f"x{i + 1}" for i in range(m.dim)])
    for row in batch.points:
        w.writerow([repr(v) for v in row])
    _write_atomic(out / "samples.csv", buf.getvalue())
    info = {
        "method": batch.method,
        "count": int(batch.points.shape[0]),
        "acceptance_rate": batch.acceptance_rate,
        "flagged": batch.flagged,
        "config_hash": config_hash(cfg),
        "seed": seed,
    }
    _write_atomic(out / "sample_info.json", json.dumps(info, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "sample", cfg, seed, ["samples.csv", "sample_info.json"])
    print(f"wrote {batch.points.shape[0]} samples ({batch.method})")
    return EXIT_OK


_COMMANDS = {
    "report": cmd_report,
    "gap": cmd_gap,
    "flow": cmd_flow,
    "claim": cmd_claim,
    "cov": cmd_cov,
    "limit": cmd_limit,
    "sample": cmd_sample,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="convexineq",
        description="verify entropy, Beckner and covariance inequalities of convex measures",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (default from config)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--method", choices=["grid", "mc"], default=None)
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KeyError, TypeError) as exc:
        print(f"config error: missing or malformed entry {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, ParameterError, DomainViolationError) as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
