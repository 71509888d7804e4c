"""Command-line entry point: ``scopeguard <subcommand> ...``.

Exit codes: 0 success / all in scope, 1 input error, 2 statistical
infeasibility, 3 out-of-scope batch detected.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .calibrate import (
    CalibrationArtifact,
    CalibrationConfig,
    apply_thresholds,
    fit,
    sweep,
    write_sweep_csv,
)
from .dataio import read_dataset_csv, write_dataset_csv
from .distances import ALL_MEASURES, distance_report, parse_measures
from .ecdf import DEFAULT_TSS_SIZE
from .exceptions import (
    MissingPredictions,
    NoFeasibleThreshold,
    SchemaMismatch,
    ScopeGuardError,
    StatisticalInfeasibility,
)
from .monitor import MonitorConfig, ScopeMonitor, VerdictKind
from .power import PowerSpec, plan_sample_size
from .refmodel import knn_fit
from .synth import ScenarioSpec, generate, separable_scenario

logger = logging.getLogger("scopeguard")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_OUT_OF_SCOPE = 0, 1, 2, 3
SEED_ENV = "SCOPEGUARD_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ScopeGuardError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _with_predictions(data, args, role):
    """Attach kNN predictions when ``--model knn`` is given."""
    if args.model == "knn":
        if args.train is None:
            raise ScopeGuardError("--model knn needs --train")
        model = knn_fit(read_dataset_csv(args.train), args.k)
        return data.with_predictions(model.predict(data.features))
    if data.predictions is None:
        raise MissingPredictions(
            f"{role} has no 'prediction' column; add one or pass --model knn"
        )
    return data


# ---------------------------------------------------------------------------
# subcommands


def cmd_power(args) -> int:
    train = read_dataset_csv(args.train)
    test = read_dataset_csv(args.test)
    spec = PowerSpec(alpha=args.alpha, power=args.power, safety_factor=args.safety,
                     d_floor=args.d_floor, batch_multiple=args.batch_multiple)
    plan = plan_sample_size(train, test, spec)
    if args.format == "csv":
        lines = ["class,feature,d,n_required"]
        lines += [f"{c},{f},{v['d']!r},{v['n_required']}" for (c, f), v in plan.cells.items()]
        lines += [f"# n_max={plan.n_max}", f"# n_final={plan.n_final}"]
        _emit(args, "\n".join(lines) + "\n")
    else:
        _emit(args, _dumps(plan.to_dict()))
    return EXIT_OK


def cmd_fit(args) -> int:
    if args.train is None:
        raise ScopeGuardError("fit needs --train (the training CSV for the scope set)")
    train = read_dataset_csv(args.train)
    test = _with_predictions(read_dataset_csv(args.test), args, "test set")
    config = CalibrationConfig(
        r_batches=args.r_batches,
        seed=_seed(args),
        per_class_size=args.tss_size,
        measures=parse_measures(args.measures.split(",")) if args.measures else None,
        aggregation=args.aggregation,
        primary_measure=args.primary,
    )
    artifact = fit(train, test, args.batch_size, config)
    artifact.save(args.out)
    stats = {m.value: {"mu": t.mu, "sigma": t.sigma} for m, t in artifact.thresholds.items()}
    if args.format == "json":
        _emit(args, _dumps(stats))
    elif args.format == "csv":
        _emit(args, "measure,mu,sigma\n" + "".join(
            f"{m},{v['mu']!r},{v['sigma']!r}\n" for m, v in stats.items()))
    else:
        rows = [f"{'measure':<8}{'mu':>16}{'sigma':>16}"]
        rows += [f"{m:<8}{v['mu']:>16.6g}{v['sigma']:>16.6g}" for m, v in stats.items()]
        _emit(args, "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    artifact = CalibrationArtifact.load(args.artifact)
    test = _with_predictions(read_dataset_csv(args.test), args, "test set")
    config = CalibrationConfig(
        r_batches=args.r_batches,
        neg_accuracy=args.neg_accuracy,
        pos_accuracy=args.pos_accuracy,
        k_max=args.k_max,
        fpr_target=args.fpr_target,
        k_gap=args.k_gap,
        seed=_seed(args),
        measures=artifact.measures,
        aggregation=artifact.aggregation,
        primary_measure=artifact.primary_measure,
    )
    rows = sweep(artifact, test, config)
    write_sweep_csv(rows, args.out)
    try:
        updated = apply_thresholds(artifact, rows, args.fpr_target, args.k_gap)
    except NoFeasibleThreshold as exc:
        best = {m.value: min(r.fpr(m) for r in rows) for m in artifact.measures}
        print(f"scopeguard sweep: {exc}", file=sys.stderr)
        print("best achievable fpr per measure: " + json.dumps(best), file=sys.stderr)
        return EXIT_INFEASIBLE
    out = args.artifact_out or str(Path(args.artifact).with_suffix("")) + ".calibrated.json"
    updated.save(out)
    summary = {
        m.value: {"k_low": t.k_low, "k_high": t.k_high, "t_low": t.t_low,
                  "t_high": t.t_high, "feasible": t.feasible}
        for m, t in updated.thresholds.items()
    }
    _emit(args, _dumps({"artifact": out, "thresholds": summary}))
    return EXIT_OK


def cmd_distance(args) -> int:
    a = read_dataset_csv(args.a, require_label=False)
    b = read_dataset_csv(args.b, require_label=False)
    if a.n_features != b.n_features or a.feature_names != b.feature_names:
        raise SchemaMismatch(
            f"feature columns differ: {list(a.feature_names)} vs {list(b.feature_names)}"
        )
    measures = parse_measures(args.measures.split(",")) if args.measures else ALL_MEASURES
    seed = _seed(args)
    per_feature = {}
    for j, name in enumerate(a.feature_names):
        rep = distance_report(a.features[:, j], b.features[:, j], measures, B=args.bootstrap,
                              seed=[seed, j])
        per_feature[name] = rep.to_dict()
    aggregate = {m.value: sum(per_feature[f][m.value] for f in per_feature) / len(per_feature)
                 for m in measures}
    aggregate.update(n=a.n_samples, m=b.n_samples)
    if args.format == "csv":
        lines = ["feature,measure,value,p_value"]
        for f, rep in per_feature.items():
            for m in measures:
                p = rep.get(f"p_{m.value}", "")
                lines.append(f"{f},{m.value},{rep[m.value]!r},{p!r}" if p != "" else f"{f},{m.value},{rep[m.value]!r},")
        _emit(args, "\n".join(lines) + "\n")
    else:
        _emit(args, _dumps({"features": per_feature, "aggregate": aggregate}))
    return EXIT_OK


def cmd_monitor(args) -> int:
    artifact = CalibrationArtifact.load(args.artifact)
    stream = _with_predictions(read_dataset_csv(args.stream, require_label=False), args, "stream")
    if stream.feature_names != artifact.tss.feature_names:
        raise SchemaMismatch(
            f"stream columns {list(stream.feature_names)} do not match the artifact's "
            f"{list(artifact.tss.feature_names)}"
        )
    monitor = ScopeMonitor(artifact, MonitorConfig.from_artifact(artifact, max_extensions=args.max_extensions))
    counts = Counter()
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for v in monitor.run(stream):
            counts[v.kind.value] += 1
            out.write(json.dumps(v.to_dict()) + "\n")
    finally:
        if args.out:
            out.close()
    dropped = monitor.finish()
    if not counts:
        logger.warning("stream of %d rows is shorter than one batch of %d; no verdicts",
                       stream.n_samples, artifact.batch_size)
    summary = {k.value: counts.get(k.value, 0) for k in VerdictKind}
    print(json.dumps({"summary": summary, "dropped_rows": dropped}), file=sys.stderr)
    return EXIT_OUT_OF_SCOPE if counts[VerdictKind.OUT_OF_SCOPE.value] else EXIT_OK


def cmd_synth(args) -> int:
    if args.spec:
        try:
            spec = ScenarioSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScopeGuardError(f"{args.spec}: cannot read scenario spec ({exc})") from exc
        if args.seed is not None or SEED_ENV in os.environ:
            spec = ScenarioSpec(**{**spec.__dict__, "seed": _seed(args)})
    else:
        spec = separable_scenario(seed=_seed(args), batch_size=args.batch_size)
    train, test, stream = generate(spec)
    out = Path(args.out_dir)
    write_dataset_csv(train, out / "train.csv")
    write_dataset_csv(test, out / "test.csv")
    write_dataset_csv(stream, out / "stream.csv")
    _emit(args, _dumps({"train": str(out / "train.csv"), "test": str(out / "test.csv"),
                        "stream": str(out / "stream.csv"), "spec": spec.to_dict()}))
    return EXIT_OK


def cmd_predict(args) -> int:
    data = read_dataset_csv(args.data, require_label=False)
    model = knn_fit(read_dataset_csv(args.train), args.k)
    data = data.with_predictions(model.predict(data.features))
    if args.output:
        write_dataset_csv(data, args.output)
    else:
        write_dataset_csv(data, sys.stdout)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"RNG seed (falls back to ${SEED_ENV}, then 0)")
    common.add_argument("--output", help="write the command's report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default=None)

    model = _Parser(add_help=False)
    model.add_argument("--model", choices=("knn",), help="predict with the built-in kNN")
    model.add_argument("--train", help="training CSV for --model")
    model.add_argument("--k", type=int, default=5, help="neighbors for --model knn")

    parser = _Parser(prog="scopeguard", description="Runtime scope-compliance monitoring.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("power", parents=[common], help="batch size from power analysis")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--power", type=float, default=0.8)
    p.add_argument("--safety", type=float, default=1.3)
    p.add_argument("--d-floor", type=float, default=0.2)
    p.add_argument("--batch-multiple", type=int, default=None)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("fit", parents=[common, model], help="build the TSS and threshold statistics")
    p.add_argument("--test", required=True)
    p.add_argument("--batch-size", type=int, required=True)
    p.add_argument("--tss-size", type=int, default=DEFAULT_TSS_SIZE)
    p.add_argument("--r-batches", type=int, default=200)
    p.add_argument("--measures", help="comma-separated subset of cvm,ad,ks,ws")
    p.add_argument("--aggregation", choices=("mean", "max"), default="mean")
    p.add_argument("--primary", default="cvm", help="measure that drives verdicts")
    p.add_argument("--out", required=True, help="artifact JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", parents=[common, model], help="TPR/FPR sweep and threshold selection")
    p.add_argument("--artifact", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--k-max", type=float, default=3.0)
    p.add_argument("--fpr-target", type=float, default=0.05)
    p.add_argument("--k-gap", type=float, default=1.0)
    p.add_argument("--r-batches", type=int, default=200)
    p.add_argument("--neg-accuracy", type=float, default=0.8)
    p.add_argument("--pos-accuracy", type=float, default=0.0)
    p.add_argument("--out", required=True, help="sweep CSV path")
    p.add_argument("--artifact-out", help="calibrated artifact path (default: <artifact>.calibrated.json)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("distance", parents=[common], help="two-sample distances between two CSVs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--measures", help="comma-separated subset of cvm,ad,ks,ws")
    p.add_argument("--bootstrap", type=int, default=0, metavar="B",
                   help="permutation re-splits for p-values (0 = none)")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("monitor", parents=[common, model], help="score a stream batch by batch")
    p.add_argument("--artifact", required=True)
    p.add_argument("--stream", required=True, help="stream CSV, or - for stdin")
    p.add_argument("--max-extensions", type=int, default=2)
    p.add_argument("--out", help="verdict JSONL path (default stdout)")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("synth", parents=[common], help="write synthetic train/test/stream CSVs")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="scenario spec JSON")
    src.add_argument("--preset", choices=("separable",))
    p.add_argument("--batch-size", type=int, default=120, help="stream segment unit for the preset")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("predict", parents=[common], help="append kNN predictions to a CSV")
    p.add_argument("--train", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StatisticalInfeasibility as exc:
        print(f"scopeguard {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScopeGuardError, OSError) as exc:
        print(f"scopeguard {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
