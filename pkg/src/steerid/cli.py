"""Command-line entry point: ``steerid <subcommand> ...``.

Results go to files under ``--out``; progress goes to stderr. Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import reporting
from .errors import SteerIdError
from .evaluation import check_disjoint
from .experiments import (Protocol, default_windows, evaluate_model, run_baseline, run_protocol,
                          select_drivers, sweep_argmax, window_sweep)
from .forest import save_forest
from .gru import load_checkpoint, save_checkpoint
from .ingest import IngestStats, load_fleet, write_manifest, write_trip_csv
from .stationarity import WINDOW_MAX_S, WINDOW_MIN_S, analyze_trip, stationarity_report
from .synth import PRESETS, SynthConfig, gen_fleet
from .train import TrainConfig

log = logging.getLogger("steerid")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: usage: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _window(value: str) -> float:
    try:
        w = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}") from None
    if not WINDOW_MIN_S - 1e-9 <= w <= WINDOW_MAX_S + 1e-9 or abs(w * 10 - round(w * 10)) > 1e-6:
        raise argparse.ArgumentTypeError(
            f"window must be a multiple of 0.1 s in [{WINDOW_MIN_S}, {WINDOW_MAX_S}], got {value}")
    return round(w, 1)


def _windows(value: str) -> list[float]:
    if ":" in value:
        lo, hi, step = (float(v) for v in value.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return [_window(f"{lo + k * step:.1f}") for k in range(n)]
    return [_window(v) for v in value.split(",") if v]


def _add_protocol(p):
    p.add_argument("--train-min", type=float, default=240.0, help="minimum training minutes per driver")
    p.add_argument("--test-min", type=float, default=30.0, help="test minutes per driver")
    p.add_argument("--segment-min", type=float, default=15.0, help="segment length in minutes")
    p.add_argument("--drivers", type=int, default=None, help="random subset of this many drivers")


def _add_model(p):
    p.add_argument("--candidate-activation", choices=("sigmoid", "tanh"), default="sigmoid")
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--keep-prob", type=float, default=0.7)
    p.add_argument("--l2", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--eval-every", type=int, default=25)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--val-segments", type=int, default=0,
                   help="training segments per driver held out for early stopping")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="steerid", description="Driver identification from steering-wheel signals.")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for parallel stages")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic fleet")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--drivers", type=int, default=5)
    p.add_argument("--minutes", type=float, default=275.0, help="generated minutes per driver")
    p.add_argument("--preset", choices=sorted(PRESETS), default="separable")
    p.add_argument("--jitter-ms", type=float, default=10.0)
    p.add_argument("--missing-rate", type=float, default=0.002)
    p.add_argument("--gps-outage-rate", type=float, default=0.002)
    p.add_argument("--config", help="key=value file overriding the flags above")

    p = sub.add_parser("ingest", help="clean and resample trips to 10 Hz")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("stationarity", help="unit-root tests, correlated lags, window recommendation")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the GRU vote model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--window-s", type=_window, default=None,
                   help="window length; default is the stationarity recommendation")
    _add_protocol(p)
    _add_model(p)

    p = sub.add_parser("evaluate", help="score a trained model on its test split")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="output directory of a train run")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="accuracy against window length")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--windows", type=_windows, default=None, help="lo:hi:step or comma list")
    p.add_argument("--reps", type=int, default=7)
    _add_protocol(p)
    _add_model(p)

    p = sub.add_parser("baseline", help="decision-forest baseline on window statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--window-s", type=_window, default=None)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=12)
    _add_protocol(p)
    return parser


# ---------------------------------------------------------------- helpers

def _out_dir(args) -> Path:
    out = Path(args.out)
    for attr in ("data", "model"):
        src = getattr(args, attr, None)
        if src is not None and out.resolve() == Path(src).resolve():
            raise UsageError(f"--out must differ from --{attr}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _protocol(args) -> Protocol:
    return Protocol(train_min=args.train_min, test_min=args.test_min, segment_s=args.segment_min * 60,
                    val_segments=getattr(args, "val_segments", 0))


def _train_config(args) -> TrainConfig:
    return TrainConfig(hidden=args.hidden, candidate=args.candidate_activation, lr=args.lr,
                       keep_prob=args.keep_prob, l2_lambda=args.l2, steps=args.steps,
                       batch_size=args.batch_size, eval_every=args.eval_every, patience=args.patience)


def _config(args) -> dict:
    # the manifest lives in --out, so recording it would only break byte equality across reruns
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}


def _load(args):
    fleet = load_fleet(args.data)
    log.info("loaded %d drivers, %d trips", len(fleet), sum(len(v) for v in fleet.values()))
    return fleet


def _analyze(fleet, jobs: int):
    items = [(t.steering, t.trip_id, d) for d in sorted(fleet) for t in fleet[d]]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(analyze_trip, *zip(*items)))
    return [analyze_trip(*it) for it in items]


def _recommended_window(fleet, jobs: int) -> float:
    report = stationarity_report(_analyze(fleet, jobs))
    w = report["fleet"]["recommended_window_s"]
    if w is None:
        raise SteerIdError("no stationary trip with a correlated lag; pass --window-s")
    log.info("recommended window %.1f s (lag mode %.1f s)", w, report["fleet"]["mode_s"])
    return w


def _read_kv(path: str) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}: expected key=value, got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> None:
    out = _out_dir(args)
    fields = dict(n_drivers=args.drivers, minutes_per_driver=args.minutes, preset=args.preset,
                  jitter_ms=args.jitter_ms, missing_rate=args.missing_rate,
                  gps_outage_rate=args.gps_outage_rate, seed=args.seed)
    if args.config:
        casts = {"n_drivers": int, "seed": int, "preset": str, "trips_per_driver": int}
        for k, v in _read_kv(args.config).items():
            if k not in SynthConfig.__dataclass_fields__ or k == "extra":
                raise UsageError(f"unknown synth config key {k!r}")
            if k == "trip_minutes":
                fields[k] = tuple(float(x) for x in v.split(","))
            else:
                fields[k] = casts.get(k, float)(v)
    config = SynthConfig(**fields)
    gen_fleet(config, out)
    reporting.write_manifest(out, "synth", {**_config(args), "synth_config": asdict(config)}, args.seed,
                             ["manifest.csv", "profiles.json", "trips/"])


def cmd_ingest(args) -> None:
    out = _out_dir(args)
    stats = IngestStats()
    fleet = load_fleet(args.data, stats)
    (out / "trips").mkdir(exist_ok=True)
    entries = []
    for d in sorted(fleet):
        for trip in fleet[d]:
            rel = f"trips/{trip.trip_id.replace('#', '_p')}.csv"
            write_trip_csv(trip, out / rel)
            entries.append((d, rel))
    write_manifest(entries, out / "manifest.csv")
    report = {"stats": asdict(stats),
              "drivers": {d: {"trips": len(fleet[d]),
                              "minutes": sum(len(t) for t in fleet[d]) / 600} for d in sorted(fleet)}}
    reporting.write_json(report, out / "ingest_report.json")
    reporting.write_manifest(out, "ingest", _config(args), None,
                             ["manifest.csv", "trips/", "ingest_report.json"])


def cmd_stationarity(args) -> None:
    out = _out_dir(args)
    fleet = _load(args)
    report = stationarity_report(_analyze(fleet, args.jobs))
    reporting.write_json(report, out / "stationarity.json")
    reporting.write_csv(report["trips"], ["trip_id", "driver_id", "adf_statistic", "reject", "h_cor_s"],
                        out / "stationarity.csv")
    reporting.write_manifest(out, "stationarity", _config(args), None,
                             ["stationarity.json", "stationarity.csv"])


def cmd_train(args) -> None:
    out = _out_dir(args)
    fleet = _load(args)
    pick_seq, run_seq = np.random.SeedSequence(args.seed).spawn(2)
    fleet = select_drivers(fleet, args.drivers, np.random.default_rng(pick_seq))
    window_s = args.window_s if args.window_s is not None else _recommended_window(fleet, args.jobs)
    run_seed = int(run_seq.generate_state(1)[0])
    config = _train_config(args)
    protocol = _protocol(args)
    res = run_protocol(fleet, window_s, config, run_seed, protocol)
    save_checkpoint(res.train.params, res.train.state, out / "model.bin")
    reporting.write_json(res.plan.to_dict(), out / "split.json")
    train_cfg = {"window_s": window_s, "run_seed": run_seed, "protocol": asdict(protocol),
                 "train": config.to_dict(), "classes": res.plan.drivers}
    reporting.write_json(train_cfg, out / "train_config.json")
    metrics = {
        "window_s": window_s,
        "classes": res.plan.drivers,
        "train_segments_per_driver": len(res.plan.train[res.plan.drivers[0]]),
        "test_segments_per_driver": len(res.plan.test[res.plan.drivers[0]]),
        "split_disjoint": check_disjoint(res.plan),
        "history": res.train.history,
        "best_step": res.train.best_step,
        "stopped_early": res.train.stopped_early,
        "test": {"final_vote_accuracy": res.curve.final,
                 "mean_accuracy_over_votes": res.curve.mean_over_votes,
                 "votes_per_segment": len(res.curve.accuracy)},
    }
    reporting.write_json(metrics, out / "metrics.json")
    reporting.write_manifest(out, "train", _config(args), args.seed,
                             ["model.bin", "model.bin.json", "split.json", "train_config.json",
                              "metrics.json"])


def _write_eval(out: Path, curve, cm) -> list[str]:
    reporting.write_json(curve.to_dict(), out / "accuracy_curve.json")
    reporting.write_csv(curve.to_dict()["curve"], ["k", "acc"], out / "accuracy_curve.csv")
    reporting.write_json(cm.to_dict(), out / "confusion.json")
    rows = [{"true": t, "predicted": p, "count": int(cm.counts[i, j]),
             "normalized": float(cm.normalized[i, j])}
            for i, t in enumerate(cm.classes) for j, p in enumerate(cm.classes)]
    reporting.write_csv(rows, ["true", "predicted", "count", "normalized"], out / "confusion.csv")
    return ["accuracy_curve.json", "accuracy_curve.csv", "confusion.json", "confusion.csv"]


def cmd_evaluate(args) -> None:
    out = _out_dir(args)
    model_dir = Path(args.model)
    import json
    cfg = json.loads((model_dir / "train_config.json").read_text(encoding="utf-8"))
    params, _ = load_checkpoint(model_dir / "model.bin")
    fleet = _load(args)
    protocol = Protocol(**cfg["protocol"])
    plan, curve, cm = evaluate_model(params, fleet, cfg["run_seed"], protocol, cfg["window_s"])
    outputs = _write_eval(out, curve, cm)
    metrics = {"final_vote_accuracy": curve.final, "mean_accuracy_over_votes": curve.mean_over_votes,
               "confusion_trace_over_total": cm.accuracy, "n_test_segments": curve.n_segments,
               "votes_per_segment": len(curve.accuracy), "window_s": cfg["window_s"]}
    reporting.write_json(metrics, out / "metrics.json")
    reporting.write_manifest(out, "evaluate", _config(args), cfg["run_seed"], outputs + ["metrics.json"])


def cmd_sweep(args) -> None:
    out = _out_dir(args)
    fleet = _load(args)
    windows = args.windows or default_windows()
    rows = window_sweep(fleet, windows, args.reps, _train_config(args), args.seed,
                        n_drivers=args.drivers, protocol=_protocol(args), jobs=args.jobs)
    table = [r.to_dict() for r in rows]
    reporting.write_json({"rows": table, "argmax_window_s": sweep_argmax(rows), "repetitions": args.reps},
                         out / "sweep.json")
    reporting.write_csv(table, ["window_s", "mean_acc", "std_acc"], out / "sweep.csv")
    reporting.write_manifest(out, "sweep", _config(args), args.seed, ["sweep.json", "sweep.csv"])


def cmd_baseline(args) -> None:
    out = _out_dir(args)
    fleet = _load(args)
    pick_seq, split_seq, forest_seq = np.random.SeedSequence(args.seed).spawn(3)
    fleet = select_drivers(fleet, args.drivers, np.random.default_rng(pick_seq))
    window_s = args.window_s if args.window_s is not None else _recommended_window(fleet, args.jobs)
    from .evaluation import make_split
    p = _protocol(args)
    plan = make_split(fleet, int(split_seq.generate_state(1)[0]), p.train_min, p.test_min, p.segment_s)
    res = run_baseline(plan, window_s, int(forest_seq.generate_state(1)[0]), n_trees=args.trees,
                       max_depth=args.max_depth)
    save_forest(res.forest, out / "forest.bin")
    reporting.write_json(res.confusion.to_dict(), out / "confusion.json")
    reporting.write_json({"window_s": window_s, "segment_accuracy": res.accuracy,
                          "oob_window_accuracy": res.forest.oob_accuracy,
                          "n_test_segments": int(res.confusion.counts.sum())}, out / "metrics.json")
    reporting.write_manifest(out, "baseline", _config(args), args.seed,
                             ["forest.bin", "confusion.json", "metrics.json"])


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "stationarity": cmd_stationarity,
            "train": cmd_train, "evaluate": cmd_evaluate, "sweep": cmd_sweep, "baseline": cmd_baseline}


def _setup_logging():
    level = os.environ.get("STEERID_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.jobs < 1:
        print("error: usage: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SteerIdError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())
