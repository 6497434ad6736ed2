"""Hyperparameter selection for the clusterers."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .clustering import dbcv, dbscan, hdbscan, mean_pairwise_distance, silhouette
from .clustering.neighbors import KDistanceCurve, as_matrix
from .errors import AllCandidatesFailed, CurveTooShort, DataError, TooFewPoints

log = logging.getLogger(__name__)

MAX_NOISE_FRACTION = 0.5


@dataclass
class GridSpec:
    algo: str = "dbscan"
    eps_values: list[float] = field(default_factory=list)
    min_cluster_sizes: list[int] = field(default_factory=list)
    min_samples_values: list[int] = field(default_factory=lambda: [4])
    score: str = "silhouette"
    max_parallel: int = 1
    memory_limit_mb: int | None = None

    def __post_init__(self):
        if self.algo not in ("dbscan", "hdbscan"):
            raise ValueError(f"unknown algo {self.algo!r}")
        if self.score not in ("silhouette", "dbcv"):
            raise ValueError(f"unknown score {self.score!r}")
        primary = self.eps_values if self.algo == "dbscan" else self.min_cluster_sizes
        if not primary or not self.min_samples_values:
            raise ValueError("candidate lists must be non-empty")
        if any(v <= 0 for v in list(primary) + list(self.min_samples_values)):
            raise ValueError("candidate values must be positive")
        if self.algo == "hdbscan" and any(v < 2 for v in self.min_cluster_sizes):
            raise ValueError("min_cluster_size must be >= 2")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        known = {"algo", "eps_values", "min_cluster_sizes", "min_samples_values", "score",
                 "max_parallel", "memory_limit_mb"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        return cls(**d)

    def candidates(self) -> list[dict]:
        if self.algo == "dbscan":
            return [{"eps": float(e), "min_samples": int(m)}
                    for e in self.eps_values for m in self.min_samples_values]
        return [{"min_cluster_size": int(c), "min_samples": int(m)}
                for c in self.min_cluster_sizes for m in self.min_samples_values]


@dataclass
class CandidateResult:
    params: dict
    score: float
    n_clusters: int
    n_noise: int
    failed: bool = False
    reason: str = ""
    wall_time: float = field(default=0.0, compare=False)

    def as_dict(self) -> dict:
        return {**self.params, "score": None if self.failed else self.score,
                "n_clusters": self.n_clusters, "n_noise": self.n_noise,
                "failed": self.failed, "reason": self.reason, "wall_time": self.wall_time}


@dataclass
class TuningReport:
    algo: str
    score: str
    rows: list[CandidateResult]
    best: CandidateResult

    def to_dict(self) -> dict:
        return {"algo": self.algo, "score": self.score,
                "best": self.best.as_dict(), "rows": [r.as_dict() for r in self.rows]}

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, path):
        rows = [r.as_dict() for r in self.rows]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


def _limit_memory(limit_mb):
    if limit_mb:
        import resource
        cap = int(limit_mb) * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (cap, cap))


def _run_candidate(points: np.ndarray, algo: str, score: str, params: dict) -> CandidateResult:
    t0 = time.perf_counter()
    try:
        if algo == "dbscan":
            asg = dbscan(points, params["eps"], params["min_samples"])
        else:
            asg = hdbscan(points, params["min_cluster_size"], params["min_samples"])
    except MemoryError:
        return CandidateResult(params, -math.inf, 0, 0, True, "memory", time.perf_counter() - t0)
    except DataError as exc:
        return CandidateResult(params, -math.inf, 0, 0, True, str(exc), time.perf_counter() - t0)
    n_clusters, n_noise = asg.n_clusters, asg.n_noise

    def failed(reason):
        return CandidateResult(params, -math.inf, n_clusters, n_noise, True, reason,
                               time.perf_counter() - t0)

    if n_clusters < 2:
        return failed("single cluster" if n_clusters == 1 else "all noise")
    if n_noise > MAX_NOISE_FRACTION * len(points):
        return failed("more than half noise")
    try:
        value = silhouette(points, asg.labels) if score == "silhouette" else dbcv(points, asg.labels)
    except MemoryError:
        return failed("memory")
    except DataError as exc:
        return failed(str(exc))
    if not math.isfinite(value):
        return failed("non-finite score")
    return CandidateResult(params, value, n_clusters, n_noise, wall_time=time.perf_counter() - t0)


def _rank_key(row: CandidateResult):
    p = row.params
    first = p.get("eps", p.get("min_cluster_size"))
    return (-row.score, first, p["min_samples"])


def grid_search(points, spec: GridSpec) -> TuningReport:
    """Cluster and score every candidate; best = highest score with ties going
    to the smaller eps (or min_cluster_size), then smaller min_samples.

    Degenerate clusterings (fewer than two clusters, or more than half noise)
    are kept as failed rows with score -inf.
    """
    X = as_matrix(points)
    cands = spec.candidates()
    if spec.max_parallel == 1 or len(cands) == 1:
        rows = [_run_candidate(X, spec.algo, spec.score, p) for p in cands]
    else:
        with ProcessPoolExecutor(max_workers=min(spec.max_parallel, len(cands)),
                                 initializer=_limit_memory,
                                 initargs=(spec.memory_limit_mb,)) as pool:
            rows = list(pool.map(_run_candidate, [X] * len(cands), [spec.algo] * len(cands),
                                 [spec.score] * len(cands), cands))
    ok = [r for r in rows if not r.failed]
    if not ok:
        raise AllCandidatesFailed(f"all {len(rows)} candidates were degenerate")
    best = min(ok, key=_rank_key)
    for r in rows:
        log.debug("candidate %s -> %s", r.params, "failed: " + r.reason if r.failed else r.score)
    return TuningReport(spec.algo, spec.score, rows, best)


def mpd_params(points, min_samples_default: int = 4, alpha: float = 0.1) -> tuple[float, int]:
    """eps = alpha * mean pairwise distance of the training points."""
    mpd = mean_pairwise_distance(points)
    eps = alpha * mpd
    if not eps > 0:
        raise TooFewPoints("all training points coincide; mean pairwise distance is 0")
    return eps, int(min_samples_default)


def knee_index(values) -> int:
    """Index of maximum perpendicular distance from the chord joining the
    first and last curve points; the middle index for a straight line."""
    y = np.asarray(values, dtype=float)
    n = len(y)
    x = np.arange(n, dtype=float)
    dx, dy = x[-1] - x[0], y[-1] - y[0]
    dist = np.abs(dy * (x - x[0]) - dx * (y - y[0])) / math.hypot(dx, dy)
    if not dist.max() > 1e-12 * max(1.0, float(np.abs(y).max())):
        return (n - 1) // 2
    return int(np.argmax(dist))


def suggest_eps_range(curve: KDistanceCurve | np.ndarray) -> tuple[float, float]:
    values = np.asarray(getattr(curve, "distances", curve), dtype=float)
    if len(values) < 3:
        raise CurveTooShort(f"need at least 3 points, got {len(values)}")
    knee = float(values[knee_index(values)])
    return 0.5 * knee, 1.5 * knee
