"""Command-line front end.  Each subcommand reads and writes files, prints a
one-line JSON summary on stdout and sends diagnostics to stderr.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import os
import sys

import numpy as np

from . import detector, evaluation, preprocess, synthgen, tuning
from .clustering import dbscan, hdbscan, k_distance
from .errors import DataError, UnwritablePath
from .flowmetrics import SegmentMeta, SegmenterConfig, extract_pcap, read_features_csv, write_features_csv

log = logging.getLogger("flowguard")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

RESULT_COLUMNS = ("src", "sport", "dst", "dport", "proto", "start_us", "end_us", "n_pkts",
                  "verdict", "distance", "nearest_cluster", "threshold")

# defaults applied after the config overlay, so a config value beats a default
# and an explicit flag beats both
DEFAULTS = {
    "gen": {"seed": 7, "tls": False, "duration": 600.0, "n_rtus": 4},
    "extract": {"mode": "slotted", "timespan": 60.0, "idle_timeout": 120.0, "stride": 1},
    "kdist": {"k": 4},
    "tune": {"algo": "dbscan", "score": "silhouette", "max_parallel": 1},
    "train": {"algo": "dbscan", "min_samples": 4, "min_cluster_size": 5, "alpha": 0.1},
    "classify": {},
    "evaluate": {"effect_positive": False},
}
REQUIRED = {
    "gen": ("scenario", "out_pcap"),
    "extract": ("pcap", "out"),
    "kdist": ("features", "out"),
    "tune": ("features", "out"),
    "train": ("features", "out"),
    "classify": ("model", "features", "out"),
    "evaluate": ("results", "labels"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {s}")
    return v


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flowguard", description="Flow-metadata anomaly detection pipeline.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    def cmd(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="key = value overlay file; explicit flags take precedence")
        return s

    s = cmd("gen", "generate a synthetic capture and its labels")
    s.add_argument("--scenario")
    s.add_argument("--seed", type=int)
    s.add_argument("--tls", action="store_true", default=None)
    s.add_argument("--duration", type=_positive_float, help="seconds of traffic")
    s.add_argument("--n-rtus", type=_positive_int)
    s.add_argument("--out-pcap")
    s.add_argument("--out-labels")
    s.add_argument("--out-summary")

    s = cmd("extract", "segment a capture and write the feature CSV")
    s.add_argument("--pcap")
    s.add_argument("--mode", choices=("slotted", "windowed"))
    s.add_argument("--timespan", type=_positive_float)
    s.add_argument("--idle-timeout", type=_positive_float)
    s.add_argument("--stride", type=_positive_int)
    s.add_argument("--out")

    s = cmd("kdist", "k-distance curve of the scaled features")
    s.add_argument("--features")
    s.add_argument("--k", type=_positive_int)
    s.add_argument("--out")

    s = cmd("tune", "grid-search clustering parameters")
    s.add_argument("--features")
    s.add_argument("--algo", choices=("dbscan", "hdbscan"))
    s.add_argument("--score", choices=("silhouette", "dbcv"))
    s.add_argument("--grid", help="JSON grid; omitted means a grid derived from the data")
    s.add_argument("--max-parallel", type=_positive_int)
    s.add_argument("--out")
    s.add_argument("--out-csv")

    s = cmd("train", "cluster benign features and write a detection model")
    s.add_argument("--features")
    s.add_argument("--algo", choices=("dbscan", "hdbscan"))
    s.add_argument("--eps", type=_positive_float, help="omitted: alpha * mean pairwise distance")
    s.add_argument("--alpha", type=_positive_float)
    s.add_argument("--min-samples", type=_positive_int)
    s.add_argument("--min-cluster-size", type=_positive_int)
    s.add_argument("--timespan", type=_positive_float, help="recorded in the model metadata")
    s.add_argument("--out")

    s = cmd("classify", "classify feature rows against a model")
    s.add_argument("--model")
    s.add_argument("--features")
    s.add_argument("--out")

    s = cmd("evaluate", "score classification results against labels")
    s.add_argument("--results")
    s.add_argument("--labels")
    s.add_argument("--effect-positive", action="store_true", default=None)
    s.add_argument("--out")
    return p


# -- config overlay ------------------------------------------------------------

def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines.  Values may be quoted strings, numbers or
    true/false; ``#`` starts a comment; ``[section]`` headers are ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        out[key.replace("-", "_")] = value
    return out


def _coerce(action: argparse.Action, key: str, value: str):
    if isinstance(action, argparse._StoreTrueAction):
        low = value.lower()
        if low not in ("true", "false"):
            raise UsageError(f"config key {key}: expected true or false, got {value!r}")
        return low == "true"
    try:
        v = action.type(value) if action.type else value
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise UsageError(f"config key {key}: {exc}") from None
    if action.choices and v not in action.choices:
        raise UsageError(f"config key {key}: {v!r} not in {list(action.choices)}")
    return v


def resolve(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                overlay = parse_config(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = sorted(set(overlay) - set(actions))
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {unknown}")
        for key, value in overlay.items():
            if getattr(args, key) is None:
                setattr(args, key, _coerce(actions[key], key, value))
    for key, value in DEFAULTS[args.command].items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required "
                         + ", ".join("--" + k.replace("_", "-") for k in missing))
    return args


# -- subcommands ---------------------------------------------------------------

def _cmd_gen(a) -> dict:
    cfg = synthgen.ScenarioConfig(a.scenario, a.seed, a.duration, a.n_rtus, tls=a.tls)
    summary = synthgen.generate(cfg, a.out_pcap, a.out_labels)
    if a.out_summary:
        synthgen.write_summary(summary, a.out_summary)
    return {"scenario": cfg.scenario, "seed": cfg.seed, "packet_count": summary.packet_count,
            "flow_count": summary.flow_count, "anomaly_intervals": len(summary.anomaly_intervals)}


def _cmd_extract(a) -> dict:
    cfg = SegmenterConfig(a.mode, a.timespan, max(a.idle_timeout, a.timespan), a.stride)
    vectors, stats = extract_pcap(a.pcap, cfg)
    write_features_csv(a.out, vectors)
    return {"segments": len(vectors), **stats.as_dict()}


def _cmd_kdist(a) -> dict:
    _, X = read_features_csv(a.features)
    _, scaled = preprocess.fit_transform(X)
    curve = k_distance(scaled, a.k)
    curve.to_csv(a.out)
    summary = {"k": a.k, "points": len(curve.distances)}
    if len(curve.distances) >= 3:
        lo, hi = tuning.suggest_eps_range(curve)
        summary.update(eps_low=lo, eps_high=hi)
    return summary


def _cmd_tune(a) -> dict:
    from .experiments import default_grid
    _, X = read_features_csv(a.features)
    _, scaled = preprocess.fit_transform(X)
    if a.grid:
        try:
            with open(a.grid, encoding="utf-8") as fh:
                grid = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"grid {a.grid}: invalid JSON ({exc})") from None
        grid = {**grid, "algo": a.algo, "score": a.score, "max_parallel": a.max_parallel}
        spec = tuning.GridSpec.from_dict(grid)
    else:
        spec = default_grid(scaled, a.algo, a.score, a.max_parallel)
    report = tuning.grid_search(scaled, spec)
    report.to_json(a.out)
    if a.out_csv:
        report.to_csv(a.out_csv)
    return {"algo": a.algo, "score": a.score, "candidates": len(report.rows),
            "failed": sum(r.failed for r in report.rows), "best": report.best.params,
            "best_score": report.best.score}


def _cmd_train(a) -> dict:
    _, X = read_features_csv(a.features)
    scaler, scaled = preprocess.fit_transform(X)
    if a.algo == "dbscan":
        if a.eps is None:
            eps, ms = tuning.mpd_params(scaled, a.min_samples, a.alpha)
        else:
            eps, ms = a.eps, a.min_samples
        params = {"eps": eps, "min_samples": ms}
        assignment = dbscan(scaled, eps, ms)
    else:
        params = {"min_cluster_size": a.min_cluster_size, "min_samples": a.min_samples}
        assignment = hdbscan(scaled, a.min_cluster_size, a.min_samples)
    meta = {"algo": a.algo, "params": params, "timespan": a.timespan}
    created = _created()
    if created:
        meta["created"] = created
    model = detector.build_model(scaled, assignment, scaler, meta)
    detector.save_model(model, a.out)
    return {"algo": a.algo, **params, "n_points": len(X), "n_clusters": assignment.n_clusters,
            "n_noise": assignment.n_noise}


def _created() -> str | None:
    # a wall-clock stamp would make identical runs produce different files, so
    # only the reproducible-builds epoch is honoured
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if not epoch:
        return None
    stamp = datetime.datetime.fromtimestamp(int(epoch), datetime.timezone.utc)
    return stamp.isoformat(timespec="seconds")


def _cmd_classify(a) -> dict:
    model = detector.load_model(a.model)
    metas, X = read_features_csv(a.features)
    results = detector.classify_batch(model, X)
    with open(a.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for m, r in zip(metas, results):
            w.writerow([m.src, m.sport, m.dst, m.dport, m.proto, m.start_us, m.end_us, m.n_pkts,
                        r.verdict, repr(float(r.distance)), r.nearest_cluster, repr(float(r.threshold))])
    n_anom = sum(r.is_anomaly for r in results)
    return {"rows": len(results), "anomaly": n_anom, "benign": len(results) - n_anom}


def read_results_csv(path) -> tuple[list[SegmentMeta], list[str]]:
    metas, verdicts = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing result columns {sorted(missing)}")
        for rec in reader:
            try:
                metas.append(SegmentMeta(rec["src"], int(rec["sport"]), rec["dst"], int(rec["dport"]),
                                         int(rec["proto"]), int(rec["start_us"]), int(rec["end_us"]),
                                         int(rec["n_pkts"])))
            except ValueError as exc:
                raise DataError(f"{path}:{reader.line_num}: {exc}") from None
            verdicts.append(rec["verdict"])
    return metas, verdicts


def _cmd_evaluate(a) -> dict:
    metas, verdicts = read_results_csv(a.results)
    try:
        spec = evaluation.LabelSpec.from_csv(a.labels)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    report = evaluation.evaluate(verdicts, evaluation.label_all(metas, spec), a.effect_positive)
    if a.out:
        report.to_json(a.out)
    print(report.table(), file=sys.stderr)
    return report.to_dict()


COMMANDS = {"gen": _cmd_gen, "extract": _cmd_extract, "kdist": _cmd_kdist, "tune": _cmd_tune,
            "train": _cmd_train, "classify": _cmd_classify, "evaluate": _cmd_evaluate}


def _setup_logging():
    level = os.environ.get("FLOWGUARD_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = resolve(parser, argv)
        summary = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except (ValueError, argparse.ArgumentTypeError) as exc:
        # config dataclasses reject out-of-range combinations
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {UnwritablePath.__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(json.dumps(summary, sort_keys=True, default=_jsonable))
    return EXIT_OK


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
