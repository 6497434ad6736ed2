"""Ground-truth labeling of flow segments and detection metrics."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import LengthMismatch

LABELS = ("benign", "attack", "attack_vector", "effect")
POSITIVE = frozenset({"attack", "attack_vector"})
LABEL_COLUMNS = ("src_ip", "dst_ip", "dst_port", "start_us", "end_us", "label", "scenario")


@dataclass(frozen=True)
class LabelRule:
    start_us: int
    end_us: int
    label: str
    scenario: str
    src_ip: str | None = None
    dst_ip: str | None = None
    dst_port: int | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label {self.label!r} not in {LABELS}")
        if self.start_us > self.end_us:
            raise ValueError("rule start_us > end_us")

    def _oriented(self, src, dst, dport) -> bool:
        return ((self.src_ip is None or self.src_ip == src)
                and (self.dst_ip is None or self.dst_ip == dst)
                and (self.dst_port is None or self.dst_port == dport))

    def matches(self, meta) -> bool:
        if meta.start_us > self.end_us or self.start_us > meta.end_us:
            return False
        # a flow's sender may be either side of the labelled connection
        return (self._oriented(meta.src, meta.dst, meta.dport)
                or self._oriented(meta.dst, meta.src, meta.sport))


@dataclass
class LabelSpec:
    rules: list[LabelRule] = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LABEL_COLUMNS)
            for r in self.rules:
                w.writerow(["" if r.src_ip is None else r.src_ip,
                            "" if r.dst_ip is None else r.dst_ip,
                            "" if r.dst_port is None else r.dst_port,
                            r.start_us, r.end_us, r.label, r.scenario])

    @classmethod
    def from_csv(cls, path) -> "LabelSpec":
        rules = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(LABEL_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing label columns {sorted(missing)}")
            for rec in reader:
                rules.append(LabelRule(
                    start_us=int(rec["start_us"]), end_us=int(rec["end_us"]),
                    label=rec["label"], scenario=rec["scenario"],
                    src_ip=rec["src_ip"] or None, dst_ip=rec["dst_ip"] or None,
                    dst_port=int(rec["dst_port"]) if rec["dst_port"] else None))
        return cls(rules)


def label_of(meta, spec: LabelSpec) -> tuple[str, str]:
    """(label, scenario) of the first rule overlapping the segment; benign otherwise."""
    for rule in spec.rules:
        if rule.matches(meta):
            return rule.label, rule.scenario
    return "benign", ""


@dataclass
class ScopeMetrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def add(self, truth: bool, pred: bool):
        if truth and pred:
            self.tp += 1
        elif pred:
            self.fp += 1
        elif truth:
            self.fn += 1
        else:
            self.tn += 1

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class EvalReport:
    overall: ScopeMetrics
    scenarios: dict[str, ScopeMetrics]
    ignored_count: int

    def f1(self, scenario: str | None = None) -> float:
        if scenario is None:
            return self.overall.f1
        return self.scenarios[scenario].f1 if scenario in self.scenarios else 0.0

    def to_dict(self) -> dict:
        return {"overall": self.overall.as_dict(),
                "scenarios": {k: v.as_dict() for k, v in sorted(self.scenarios.items())},
                "ignored_count": self.ignored_count}

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def table(self) -> str:
        lines = [f"{'scope':<10} {'tp':>6} {'fp':>6} {'fn':>6} {'tn':>6} "
                 f"{'prec':>7} {'recall':>7} {'f1':>7}"]
        scopes = [("overall", self.overall)] + sorted(self.scenarios.items())
        for name, m in scopes:
            lines.append(f"{name:<10} {m.tp:>6} {m.fp:>6} {m.fn:>6} {m.tn:>6} "
                         f"{m.precision:>7.3f} {m.recall:>7.3f} {m.f1:>7.3f}")
        lines.append(f"ignored (effect): {self.ignored_count}")
        return "\n".join(lines)


def _predicted_anomaly(r) -> bool:
    if isinstance(r, bool):
        return r
    if isinstance(r, str):
        return r.lower() == "anomaly"
    return bool(r.is_anomaly)


def evaluate(results: Sequence, labels: Sequence[tuple[str, str]],
             effect_positive: bool = False) -> EvalReport:
    """Positive class = anomaly.  attack and attack_vector are positives;
    effect segments are excluded unless ``effect_positive`` is set.

    Each scenario scope holds the segments labelled with that scenario plus
    every benign segment.
    """
    if len(results) != len(labels):
        raise LengthMismatch(f"{len(results)} results vs {len(labels)} labels")
    positive = POSITIVE | {"effect"} if effect_positive else POSITIVE
    overall = ScopeMetrics()
    per: dict[str, ScopeMetrics] = {}
    benign_preds: list[bool] = []
    ignored = 0
    for r, (label, scenario) in zip(results, labels):
        pred = _predicted_anomaly(r)
        if label == "effect" and not effect_positive:
            ignored += 1
            continue
        truth = label in positive
        overall.add(truth, pred)
        if label == "benign":
            benign_preds.append(pred)
        else:
            per.setdefault(scenario, ScopeMetrics()).add(truth, pred)
    for m in per.values():
        for pred in benign_preds:
            m.add(False, pred)
    return EvalReport(overall, per, ignored)


def label_all(metas: Iterable, spec: LabelSpec) -> list[tuple[str, str]]:
    return [label_of(m, spec) for m in metas]
