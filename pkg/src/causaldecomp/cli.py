"""
Command-line interface.

    causaldecomp decompose --data d.csv --exposure R --outcome Y --mediator M:continuous \\
        --confounders S --covariates C1 --estimator product-of-coeffs --boot 1000 --seed 11
    causaldecomp simulate --scenarios grid.json --out results/
    causaldecomp report --metrics results/metrics.csv --out results/

Exit codes: 0 success, 1 data or I/O error, 2 estimator unavailable for the
data or model plan, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bootstrap import BootstrapConfig, bootstrap_ci
from .dataset import DataError, ReferencePoint, RoleSpec, load_csv
from .estimators import (AvailabilityError, EstimatorId, ModelPlan, check_availability,
                         default_plan, estimate)
from .glm import EstimationError
from .reporting import METRICS, TARGETS, decomposition_table, metric_panels_svg, metrics_markdown
from .simulation import (CalibrationError, ScenarioConfig, calibrate_scenario, compute_ratio,
                         published_grid, read_metrics_csv, run_simulation, write_metrics_csv)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_DATA, EXIT_AVAILABILITY, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("causaldecomp")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _clean(obj):
    """Replace non-finite floats by ``None`` so the document is valid JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dump_json(obj, path) -> None:
    text = json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _provenance(seed, digest) -> dict:
    return {"schema_version": SCHEMA_VERSION, "tool": "causaldecomp", "version": __version__,
            "seed": seed, "input_sha256": digest}


# ------------------------------------------------------------------- decompose


def _reference(items, spec: RoleSpec) -> ReferencePoint | None:
    if not items:
        return None
    values = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--reference expects NAME=VALUE, got {item!r}")
        values[name.strip()] = float(value)
    names = {v.name for v in spec.baseline_covariates}
    if set(values) != names:
        raise ValueError(f"--reference must give a value for each covariate {sorted(names)}")
    return ReferencePoint(values)


def _plan(args, spec, est) -> ModelPlan:
    if not (args.interaction or args.mediator_interaction or args.confounder_interaction):
        return default_plan(spec, est)
    return ModelPlan(args.interaction or (), args.mediator_interaction or (),
                     args.confounder_interaction or ())


def cmd_decompose(args) -> int:
    spec = RoleSpec(args.exposure, args.outcome, args.mediator, args.confounders or (),
                    args.covariates or ())
    data = load_csv(args.data, spec)
    ref = _reference(args.reference, spec)
    digest = sha256_file(args.data)

    if args.estimator:
        wanted = [EstimatorId.parse(e) for e in args.estimator]
    else:
        wanted = list(EstimatorId)
    runnable = []
    failures = []
    for est in wanted:
        plan = _plan(args, spec, est)
        status = check_availability(spec, plan)[est]
        if status.available:
            runnable.append((est, plan))
        else:
            failures.append(f"{est.number} {est.value}: unavailable ({', '.join(status.reasons)})")
    for line in failures:
        print(line, file=sys.stderr)
    if args.estimator and failures or not runnable:
        return EXIT_AVAILABILITY

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    boot = BootstrapConfig(args.boot, args.seed, not args.unstratified, args.level) \
        if args.boot else None
    results = []
    for est, plan in runnable:
        kwargs = {}
        if est is EstimatorId.PRODUCT_OF_COEFFS and args.remaining_variant:
            kwargs["remaining_variant"] = args.remaining_variant
        if boot is None:
            doc = estimate(est, data, spec, ref, plan, **kwargs).to_dict()
        else:
            ie = bootstrap_ci(data, spec, est, ref, plan, boot, n_jobs=args.jobs, **kwargs)
            doc = ie.to_dict()
            if ie.unreliable:
                print(f"warning: {est.value}: {ie.n_failed_replicates} of {boot.replicates} "
                      f"bootstrap replicates failed; intervals are unreliable", file=sys.stderr)
        for w in doc.get("warnings", []):
            print(f"warning: {est.value}: {w}", file=sys.stderr)
        doc.update(_provenance(args.seed, digest))
        doc["plan"] = plan.to_dict()
        doc["reference_source"] = "data" if ref is None else "user"
        doc["B"] = 0 if boot is None else boot.replicates
        dump_json(doc, out / f"decompose_{est.value}.json")
        results.append(doc)
    table = decomposition_table(results)
    footer = (f"# causaldecomp {__version__}; seed={args.seed}; "
              f"B={0 if boot is None else boot.replicates}; input_sha256={digest}\n")
    (out / "decompose_table.txt").write_text(table + footer, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


# -------------------------------------------------------------------- simulate


def load_scenarios(path) -> tuple[list[ScenarioConfig], dict]:
    """Scenario configs and run options from a scenario JSON file.

    The document is either a list of scenario objects or an object with
    ``"scenarios"`` (list) or ``"grid"`` (``mediator_kinds``,
    ``sample_sizes``, ``ratios``) plus optional run options ``M``, ``B``,
    ``seed``, ``ci_level``, ``estimators``, ``calibrate`` and ``oracle_n``.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, list):
        doc = {"scenarios": doc}
    options = {k: v for k, v in doc.items() if k not in ("scenarios", "grid")}
    if "grid" in doc:
        grid = dict(doc["grid"])
        configs = published_grid(**grid)
    elif "scenarios" in doc:
        configs = [ScenarioConfig.from_dict(d) for d in doc["scenarios"]]
    else:
        raise ValueError("scenario file needs 'scenarios' or 'grid'")
    return configs, options


def cmd_simulate(args) -> int:
    if args.scenarios:
        configs, options = load_scenarios(args.scenarios)
        digest = sha256_file(args.scenarios)
    else:
        configs, options = published_grid(), {}
        digest = hashlib.sha256(b"published-grid").hexdigest()
    M = args.M if args.M is not None else int(options.get("M", 200))
    B = args.B if args.B is not None else int(options.get("B", 500))
    seed = args.seed if args.seed is not None else int(options.get("seed", 0))
    level = float(options.get("ci_level", 0.95))
    oracle_n = options.get("oracle_n")
    calibrate = bool(options.get("calibrate", True))
    estimators = options.get("estimators")
    boot = BootstrapConfig(B, seed, True, level) if B > 0 else None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports, audit, warnings = [], [], 0
    for cfg in configs:
        cfg = replace(cfg, seed=seed)
        if oracle_n is not None:
            cfg = replace(cfg, oracle_n=int(oracle_n))
        label = f"{cfg.mediator_kind} n={cfg.n} r={cfg.target_ratio:g}"
        try:
            if calibrate:
                cfg = calibrate_scenario(cfg)
            rep = run_simulation(cfg, estimators, M, boot, n_jobs=args.jobs)
        except CalibrationError as exc:
            warnings += 1
            log.warning("scenario %s skipped: %s", label, exc)
            audit.append({"scenario": label, "skipped": str(exc), "config": cfg.to_dict()})
            continue
        for name, reason in rep.skipped.items():
            log.info("scenario %s: %s skipped (%s)", label, name, reason)
        reports.append(rep)
        audit.append({"scenario": label, "config": cfg.to_dict(), "truth": rep.truth.to_dict(),
                      "realized_ratio": compute_ratio(cfg), "skipped_estimators": rep.skipped})
        log.info("scenario %s done", label)

    prov = _provenance(seed, digest)
    prov_text = "\n".join(f"{k}={prov[k]}" for k in sorted(prov))
    write_metrics_csv(reports, out / "metrics.csv", prov_text)
    dump_json(dict(prov, M=M, B=B, scenarios=[r.to_dict() for r in reports]),
              out / "metrics.json")
    dump_json(dict(prov, scenarios=audit), out / "scenarios.json")
    print(f"{len(reports)} scenarios written to {out}"
          + (f" ({warnings} skipped, see log)" if warnings else ""))
    return EXIT_OK


# ---------------------------------------------------------------------- report


def _csv_provenance(path) -> dict:
    prov = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            prov[key] = value
    return prov


def cmd_report(args) -> int:
    rows = read_metrics_csv(args.metrics)
    if not rows:
        print(f"error: {args.metrics} has no metric rows", file=sys.stderr)
        return EXIT_DATA
    prov = _csv_provenance(args.metrics)
    text = (f"causaldecomp {__version__}; seed={prov.get('seed', 'unknown')}; "
            f"metrics_sha256={sha256_file(args.metrics)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for metric in METRICS:
        for target in TARGETS:
            svg = metric_panels_svg(rows, metric, target, provenance=text)
            (out / f"{metric}_{target}.svg").write_text(svg, encoding="utf-8")
    (out / "summary.md").write_text(metrics_markdown(rows, text), encoding="utf-8")
    print(f"wrote {len(METRICS) * len(TARGETS)} panels and summary.md to {out}")
    return EXIT_OK


# ------------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causaldecomp",
                                     description="Causal decomposition of group disparities.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="estimate disparity reduction and remaining from a CSV")
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--exposure", required=True, help="binary group column (1 = comparison)")
    p.add_argument("--outcome", required=True, help="outcome column, NAME or NAME:binary")
    p.add_argument("--mediator", required=True, action="append",
                   help="mediator as NAME:continuous or NAME:binary (repeatable)")
    p.add_argument("--confounders", nargs="*", help="intermediate confounders, NAME[:kind]")
    p.add_argument("--covariates", nargs="*", help="baseline covariates, NAME[:kind]")
    p.add_argument("--reference", nargs="*", metavar="NAME=VALUE",
                   help="covariate reference values (default: means / modal levels)")
    p.add_argument("--estimator", action="append",
                   help="estimator name or number 1-5 (repeatable; default: all available)")
    p.add_argument("--interaction", action="append", metavar="A:B",
                   help="outcome-model interaction term (repeatable)")
    p.add_argument("--mediator-interaction", action="append", metavar="A:B")
    p.add_argument("--confounder-interaction", action="append", metavar="A:B")
    p.add_argument("--remaining-variant", choices=("original", "alternative"))
    p.add_argument("--boot", type=int, default=1000, help="bootstrap replicates (0: none)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--unstratified", action="store_true",
                   help="resample without stratifying by exposure")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (-1: all CPUs)")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("simulate", help="run the simulation study")
    p.add_argument("--scenarios", help="scenario JSON (default: the published grid)")
    p.add_argument("--M", type=int, default=None, help="simulated datasets per scenario")
    p.add_argument("--B", type=int, default=None, help="bootstrap replicates (0: no coverage)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="plot metric panels from a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except AvailabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_AVAILABILITY
    except EstimationError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
