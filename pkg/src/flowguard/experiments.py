"""End-to-end desk experiments on synthetic captures: train on benign traffic,
classify every scenario, and sweep the segmentation timespan."""
from __future__ import annotations

import logging
import resource
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import detector, evaluation, preprocess, tuning
from .clustering import dbscan, hdbscan, k_distance, mean_pairwise_distance
from .flowmetrics import SegmenterConfig, extract_pcap
from .synthgen import SCENARIOS, ScenarioConfig, generate

log = logging.getLogger(__name__)

MPD_FRACTIONS = (0.1, 0.2, 0.3, 0.5)


@dataclass
class ExperimentConfig:
    mode: str = "slotted"
    timespan_s: float = 60.0
    algo: str = "dbscan"
    score: str = "dbcv"
    train_seed: int = 1
    test_seed: int = 11
    train_duration_s: float = 1800.0
    test_duration_s: float = 600.0
    n_rtus: int = 4
    tls: bool = False
    max_parallel: int = 1
    scenarios: tuple[str, ...] = tuple(SCENARIOS)


def default_grid(scaled: np.ndarray, algo: str, score: str, max_parallel: int = 1) -> tuning.GridSpec:
    """Candidate grid seeded from the data: the k-distance knee range plus
    fixed fractions of the mean pairwise distance."""
    if algo == "hdbscan":
        return tuning.GridSpec("hdbscan", min_cluster_sizes=[3, 4, 5, 8],
                               min_samples_values=[1, 3, 5], score=score, max_parallel=max_parallel)
    k = min(3, len(scaled) - 1)
    lo, hi = tuning.suggest_eps_range(k_distance(scaled, k))
    mpd = mean_pairwise_distance(scaled)
    eps = sorted({round(float(e), 6) for e in np.linspace(lo, hi, 5)}
                 | {round(f * mpd, 6) for f in MPD_FRACTIONS})
    eps = [e for e in eps if e > 0]
    return tuning.GridSpec("dbscan", eps_values=eps, min_samples_values=[3, 4, 5],
                           score=score, max_parallel=max_parallel)


def train(raw: np.ndarray, algo: str = "dbscan", score: str = "dbcv", max_parallel: int = 1,
          meta: dict | None = None) -> tuple[detector.DetectionModel, tuning.TuningReport]:
    scaler, scaled = preprocess.fit_transform(raw)
    report = tuning.grid_search(scaled, default_grid(scaled, algo, score, max_parallel))
    p = report.best.params
    if algo == "dbscan":
        assignment = dbscan(scaled, p["eps"], p["min_samples"])
    else:
        assignment = hdbscan(scaled, p["min_cluster_size"], p["min_samples"])
    meta = {"algo": algo, "params": p, "score": score, **(meta or {})}
    return detector.build_model(scaled, assignment, scaler, meta), report


@dataclass
class DetectionRun:
    config: ExperimentConfig
    reports: dict[str, evaluation.EvalReport] = field(default_factory=dict)
    segments: dict[str, int] = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seconds: float = 0.0

    def f1(self, scenario: str) -> float:
        return self.reports[scenario].f1(scenario)


def run_detection(cfg: ExperimentConfig, workdir: str | Path | None = None) -> DetectionRun:
    seg = SegmenterConfig(cfg.mode, cfg.timespan_s, max(120.0, cfg.timespan_s))
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(workdir or tmp)
        train_pcap = work / "train_AN1.pcap"
        generate(ScenarioConfig("AN1", cfg.train_seed, cfg.train_duration_s, cfg.n_rtus, tls=cfg.tls),
                 train_pcap)
        vecs, _ = extract_pcap(train_pcap, seg)
        model, report = train(np.array([v.values for v in vecs]), cfg.algo, cfg.score, cfg.max_parallel,
                              {"timespan": cfg.timespan_s})
        run = DetectionRun(cfg, params=report.best.params)
        for scenario in cfg.scenarios:
            pcap, labels = work / f"{scenario}.pcap", work / f"{scenario}.labels.csv"
            generate(ScenarioConfig(scenario, cfg.test_seed, cfg.test_duration_s, cfg.n_rtus, tls=cfg.tls),
                     pcap, labels)
            vecs, _ = extract_pcap(pcap, seg)
            results = detector.classify_batch(model, [v.values for v in vecs])
            truth = evaluation.label_all([v.meta for v in vecs], evaluation.LabelSpec.from_csv(labels))
            run.reports[scenario] = evaluation.evaluate(results, truth)
            run.segments[scenario] = len(vecs)
    run.seconds = time.perf_counter() - t0
    return run


def peak_rss_mb() -> float:
    # ru_maxrss is KiB on Linux
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def timespan_sweep(timespans=(10.0, 30.0, 60.0), base: ExperimentConfig | None = None) -> list[dict]:
    """One row per (timespan, scenario) with F1/precision/recall, segment
    count, runtime and peak memory so far."""
    base = base or ExperimentConfig()
    rows = []
    for ts in timespans:
        cfg = ExperimentConfig(**{**base.__dict__, "timespan_s": float(ts)})
        run = run_detection(cfg)
        for scenario, rep in run.reports.items():
            scope = rep.overall if scenario == "AN1" else rep.scenarios.get(scenario, rep.overall)
            rows.append({"timespan_s": ts, "scenario": scenario, "segments": run.segments[scenario],
                         "f1": scope.f1, "precision": scope.precision, "recall": scope.recall,
                         "fp": rep.overall.fp, "run_seconds": run.seconds,
                         "peak_rss_mb": peak_rss_mb(), "params": run.params})
        log.info("timespan %ss done in %.1fs", ts, run.seconds)
    return rows


def format_sweep(rows: list[dict]) -> str:
    lines = [f"{'span':>5} {'scenario':<7} {'segs':>5} {'f1':>6} {'prec':>6} {'rec':>6} {'fp':>4}"]
    for r in rows:
        lines.append(f"{r['timespan_s']:>5.0f} {r['scenario']:<7} {r['segments']:>5} {r['f1']:>6.3f} "
                     f"{r['precision']:>6.3f} {r['recall']:>6.3f} {r['fp']:>4}")
    return "\n".join(lines)
