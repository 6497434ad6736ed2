"""Train on benign AN1 traffic and classify every synthetic scenario.

    python3 scripts/run_detection.py --timespan 60 --algo dbscan --score dbcv
"""
import argparse
import json
import logging

from flowguard.experiments import ExperimentConfig, run_detection


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--mode", default="slotted", choices=("slotted", "windowed"))
    ap.add_argument("--timespan", type=float, default=60.0)
    ap.add_argument("--algo", default="dbscan", choices=("dbscan", "hdbscan"))
    ap.add_argument("--score", default="dbcv", choices=("silhouette", "dbcv"))
    ap.add_argument("--train-seed", type=int, default=1)
    ap.add_argument("--test-seed", type=int, default=11)
    ap.add_argument("--tls", action="store_true")
    ap.add_argument("--json", help="also write per-scenario reports here")
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = ExperimentConfig(mode=a.mode, timespan_s=a.timespan, algo=a.algo, score=a.score,
                           train_seed=a.train_seed, test_seed=a.test_seed, tls=a.tls)
    run = run_detection(cfg)
    print(f"selected {run.params}  ({run.seconds:.1f}s)")
    print(f"{'scenario':<8} {'segs':>5} {'f1':>6} {'fp':>4}")
    for name, rep in run.reports.items():
        print(f"{name:<8} {run.segments[name]:>5} {rep.f1(name):>6.3f} {rep.overall.fp:>4}")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump({"params": run.params, "seconds": run.seconds,
                       "reports": {k: v.to_dict() for k, v in run.reports.items()}}, fh, indent=2)


if __name__ == "__main__":
    main()
