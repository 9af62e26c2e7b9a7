"""Command-line front end: ``delaybound {dominate,region,certify} SCENARIO``.

Exit codes: 0 check passed, 1 check failed, 2 usage or scenario error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .auxiliary import StabilityVerdict, build_linearized, chi_tilde_max, closed_form_criterion
from .comparison import verify_domination
from .dde_core import ToleranceConfig, integrate
from .errors import BlowUp, DelayBoundError, IntegrationError, InvalidParameters, ScenarioError
from .nonlinearity import linearize_L
from .region import BlowUpDetector, disks_csv, embedded_disk_radius, estimate_boundary_polar, verify_disk_in_region
from .scenarios import ScalarCriterionScenario, Section6Scenario, instantiate, load_scenario

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class _UsageError(Exception):
    pass


def _tol(args) -> ToleranceConfig:
    if args.tol is None:
        return ToleranceConfig()
    if not args.tol > 0:
        raise _UsageError("--tol must be positive")
    return ToleranceConfig(rtol=args.tol, atol=args.tol * 1e-3)


def _section6(path) -> Section6Scenario:
    cfg = load_scenario(path)
    if not isinstance(cfg, Section6Scenario):
        raise _UsageError(f"{path} is not a section6 scenario")
    return cfg


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def run_dominate(scenario_path, t_end: float | None, out_dir, tol: ToleranceConfig | None = None, swap: bool = False) -> int:
    """Integrate the vector system and both scalar bounds; write
    ``domination.csv`` and ``report.json``.  Returns the exit code."""
    cfg = _section6(scenario_path)
    if t_end is not None:
        cfg = cfg.with_(t_end=float(t_end))
    tol = tol or ToleranceConfig()
    inst = instantiate(cfg)
    trajs = [integrate(s, cfg.t_end, tol) for s in inst]
    chain = [trajs[2], trajs[1]] if swap else [trajs[1], trajs[2]]
    rep = verify_domination(trajs[0], chain, tols=[tol] * 3)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "domination.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x_norm", "y", "y_hat"])
        for row in zip(rep.grid, rep.lhs_norm, rep.levels[0], rep.levels[1]):
            w.writerow([_fmt(v) for v in row])
    summary = rep.summary()
    summary.update({
        "columns": ["x_norm", "y", "y_hat"] if not swap else ["x_norm", "y_hat", "y"],
        "swap_self_test": swap,
        "t_end": cfg.t_end,
        "rtol": tol.rtol,
        "atol": tol.atol,
    })
    _write_json(out / "report.json", summary)
    print(f"domination {'PASS' if rep.passed else 'FAIL'}: max_violation={rep.max_violation:.3e}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def run_region(
    scenario_path,
    angle_step: float,
    T: float,
    out_dir,
    seed_radius: float = 0.05,
    tol: ToleranceConfig | None = None,
    search_tol: float = 5e-3,
    r_cap: float = 1e3,
) -> int:
    """Boundary of the vector system plus disks from both scalar equations;
    writes ``boundary.csv`` and ``disks.csv``."""
    cfg = _section6(scenario_path)
    inst = instantiate(cfg, horizon=T)
    detector = BlowUpDetector()
    boundary = estimate_boundary_polar(
        inst.vector, angle_step, seed_radius, T, detector, search_tol, r_cap, tol
    )
    disks = [
        ("aux_62", embedded_disk_radius(inst.aux, T, detector, search_tol, seed_radius, r_cap, tol)),
        ("majorant_63", embedded_disk_radius(inst.majorant, T, detector, search_tol, seed_radius, r_cap, tol)),
    ]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    boundary.to_csv(out / "boundary.csv")
    disks_csv(disks, out / "disks.csv")
    ok = all(verify_disk_in_region(boundary, d) for _, d in disks)
    print(f"min boundary radius {boundary.min_radius:.6g}; " + ", ".join(f"{n}={d.radius:.6g}" for n, d in disks))
    print(f"region {'PASS' if ok else 'FAIL'}")
    return EXIT_PASS if ok else EXIT_FAIL


def certify(cfg, horizon: float = 40.0, tol: ToleranceConfig | None = None) -> StabilityVerdict:
    """Closed-form certificate when it applies, finite-horizon evidence otherwise."""
    if isinstance(cfg, ScalarCriterionScenario):
        return closed_form_criterion(cfg.p_hat, cfg.c_hat, cfg.profile)
    inst = instantiate(cfg, horizon=horizon)
    maj = inst.majorant
    verdict = closed_form_criterion(maj.p, maj.c, maj.L)
    if verdict.conclusive:
        return StabilityVerdict(verdict.kind, verdict.certified_radius, verdict.horizon,
                                {**verdict.evidence, "source": "closed-form"})
    # finite-horizon evidence from the linearized and nonlinear scalar runs
    aux = inst.aux.with_forcing_amplitude(0.0)
    chi_max = chi_tilde_max(aux, horizon, tol=tol)
    level = float(np.hypot(*cfg.x0))
    evidence = {**verdict.evidence, "source": "finite-horizon", "chi_tilde_max": chi_max, "history_level": level}
    if chi_max <= level:
        return StabilityVerdict("inconclusive", 0.0, horizon, evidence)
    chi = chi_max
    lin = build_linearized(aux, linearize_L(aux.L, chi), chi)
    t_end = aux.t0 + horizon
    try:
        y = integrate(aux, t_end, tol)
        u = integrate(lin, t_end, tol)
    except BlowUp:
        return StabilityVerdict("inconclusive", 0.0, horizon, {**evidence, "reason": "blow-up"})
    grid = np.linspace(aux.t0, t_end, 2000)
    y_sup = float(np.max(y.sample(grid)))
    u_sup = float(np.max(u.sample(grid)))
    evidence.update({"y_sup": y_sup, "u_sup": u_sup})
    if y_sup < chi and u_sup < chi:
        return StabilityVerdict("stable", level, horizon, evidence)
    return StabilityVerdict("inconclusive", 0.0, horizon, evidence)


def run_certify(scenario_path, horizon: float = 40.0, tol: ToleranceConfig | None = None, out_dir=None) -> int:
    cfg = load_scenario(scenario_path)
    verdict = certify(cfg, horizon, tol)
    text = json.dumps(verdict.to_dict(), indent=2, sort_keys=True)
    print(text)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verdict.json").write_text(text + "\n")
    return EXIT_PASS if verdict.conclusive else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delaybound", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario YAML file")
        p.add_argument("--tol", type=float, default=None, help="relative tolerance (absolute = tol * 1e-3)")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("dominate", help="domination chain |x| <= y <= y_hat")
    common(p)
    p.add_argument("--horizon", type=float, default=None, help="end time (default: scenario t_end)")
    p.add_argument("--swap-self-test", action="store_true", help="swap y and y_hat to force a failure")

    p = sub.add_parser("region", help="boundary of the bounded-history region and embedded disks")
    common(p)
    p.add_argument("--horizon", type=float, default=40.0)
    p.add_argument("--angle-step", type=float, default=math.pi / 100)
    p.add_argument("--seed-radius", type=float, default=0.05)
    p.add_argument("--search-tol", type=float, default=5e-3)
    p.add_argument("--radius-cap", type=float, default=1e3)

    p = sub.add_parser("certify", help="closed-form or finite-horizon stability verdict")
    common(p)
    p.add_argument("--horizon", type=float, default=40.0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        tol = _tol(args)
        if args.command == "dominate":
            return run_dominate(args.scenario, args.horizon, args.out, tol, args.swap_self_test)
        if args.command == "region":
            if not args.angle_step > 0 or not args.horizon > 0 or not args.seed_radius > 0:
                raise _UsageError("--angle-step, --horizon and --seed-radius must be positive")
            return run_region(args.scenario, args.angle_step, args.horizon, args.out, args.seed_radius, tol,
                              args.search_tol, args.radius_cap)
        return run_certify(args.scenario, args.horizon, tol, args.out)
    except (_UsageError, ScenarioError, InvalidParameters) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, DelayBoundError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
