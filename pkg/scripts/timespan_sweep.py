"""Compare 10/30/60 s slots (or windows) across all scenarios.

    python3 scripts/timespan_sweep.py --out sweep.csv
"""
import argparse
import csv
import logging

from flowguard.experiments import ExperimentConfig, format_sweep, peak_rss_mb, timespan_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--timespans", type=float, nargs="+", default=[10.0, 30.0, 60.0])
    ap.add_argument("--mode", default="slotted", choices=("slotted", "windowed"))
    ap.add_argument("--algo", default="dbscan", choices=("dbscan", "hdbscan"))
    ap.add_argument("--out", help="CSV report path")
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rows = timespan_sweep(a.timespans, ExperimentConfig(mode=a.mode, algo=a.algo))
    print(format_sweep(rows))
    print(f"peak rss {peak_rss_mb():.0f} MB")
    if a.out:
        with open(a.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
