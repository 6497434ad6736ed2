"""Nearest-cluster anomaly detector.

Each benign training cluster gets a threshold equal to its maximum pairwise
distance.  A query is Benign when its distance to the nearest retained
training point does not exceed the threshold of that point's cluster.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import preprocess
from .clustering import ClusterAssignment, KDIndex, max_pairwise_distance
from .errors import AllNoise, CorruptFile, DimensionMismatch, NonFiniteInput, VersionMismatch
from .preprocess import ScalerParams

FORMAT_VERSION = 1

BENIGN = "Benign"
ANOMALY = "Anomaly"


@dataclass(frozen=True)
class DetectionResult:
    verdict: str
    distance: float
    nearest_cluster: int
    threshold: float

    @property
    def is_anomaly(self) -> bool:
        return self.verdict == ANOMALY


@dataclass
class DetectionModel:
    train_points: np.ndarray
    train_labels: np.ndarray
    mpdi: dict[int, float]
    scaler: ScalerParams
    meta: dict = field(default_factory=dict)
    index: KDIndex = field(init=False, repr=False)

    def __post_init__(self):
        self.index = KDIndex(self.train_points)

    @property
    def dims(self) -> int:
        return self.train_points.shape[1]


def build_model(scaled_points, assignment: ClusterAssignment | np.ndarray, scaler: ScalerParams,
                meta: dict | None = None) -> DetectionModel:
    X = np.asarray(scaled_points, dtype=float)
    labels = np.asarray(getattr(assignment, "labels", assignment))
    if len(labels) != len(X):
        raise DimensionMismatch(f"{len(labels)} labels for {len(X)} points")
    keep = labels != -1
    if not keep.any():
        raise AllNoise("every training point is noise; no benign cluster to model")
    X, labels = X[keep], labels[keep]
    mpdi = {int(c): max_pairwise_distance(X[labels == c]) for c in np.unique(labels)}
    return DetectionModel(X, labels.astype(np.intp), mpdi, scaler, dict(meta or {}))


def _check(model: DetectionModel, raw_vec) -> np.ndarray:
    vec = np.asarray(raw_vec, dtype=float)
    if vec.ndim != 1 or vec.shape[0] != model.scaler.dims:
        raise DimensionMismatch(f"expected {model.scaler.dims} values, got {vec.shape[-1] if vec.ndim else 0}")
    if not np.all(np.isfinite(vec)):
        raise NonFiniteInput("query vector contains NaN or inf")
    return vec


def classify_scaled(model: DetectionModel, vec: np.ndarray) -> DetectionResult:
    idx, d = model.index.nearest(vec)
    cluster = int(model.train_labels[idx])
    threshold = model.mpdi[cluster]
    verdict = BENIGN if d <= threshold else ANOMALY
    return DetectionResult(verdict, d, cluster, threshold)


def classify(model: DetectionModel, raw_vec) -> DetectionResult:
    vec = preprocess.transform(model.scaler, _check(model, raw_vec))
    return classify_scaled(model, vec)


def classify_batch(model: DetectionModel, rows) -> list[DetectionResult]:
    out = []
    for i, row in enumerate(rows):
        try:
            out.append(classify(model, row))
        except DimensionMismatch as exc:
            raise DimensionMismatch(str(exc), row=i) from None
    return out


# -- persistence ---------------------------------------------------------------

def _canonical(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_model(model: DetectionModel, path):
    body = {
        "format_version": FORMAT_VERSION,
        "meta": model.meta,
        "scaler": model.scaler.to_dict(),
        "points": [[float(x) for x in row] for row in model.train_points],
        "labels": [int(x) for x in model.train_labels],
        "mpdi": {str(k): float(v) for k, v in sorted(model.mpdi.items())},
    }
    body["checksum"] = hashlib.sha256(_canonical(body)).hexdigest()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh)


def load_model(path) -> DetectionModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        body = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(body, dict) or "checksum" not in body:
        raise CorruptFile(f"{path}: missing checksum")
    if body.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format_version {body.get('format_version')!r}, "
                              f"this build reads {FORMAT_VERSION}")
    stored = body.pop("checksum")
    if hashlib.sha256(_canonical(body)).hexdigest() != stored:
        raise CorruptFile(f"{path}: checksum mismatch")
    try:
        scaler = ScalerParams.from_dict(body["scaler"])
        points = np.asarray(body["points"], dtype=float).reshape(len(body["points"]), -1)
        labels = np.asarray(body["labels"], dtype=np.intp)
        mpdi = {int(k): float(v) for k, v in body["mpdi"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"{path}: malformed body ({exc})") from None
    return DetectionModel(points, labels, mpdi, scaler, body.get("meta", {}))
