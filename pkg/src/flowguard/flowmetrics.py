"""Flow grouping, slotted/windowed segmentation and per-segment statistics.

Packets are grouped under a canonical (unordered) endpoint pair.  Each key owns
a :class:`FlowCollection` whose most recent :class:`Flow` receives packets
until it is terminated by FIN/RST or by the idle timeout, after which the next
packet on the key starts a new flow.

Every emitted segment is summarised by 17 statistics per direction:

    ipt_{mean,max,min}, size_{mean,max,min}, ttl_{mean,max,min},
    win_{mean,max,min}, {syn,ack,psh,rst,fin}_pct

forward (from the flow's sender) first, then backward: 34 values in total.
"""
from __future__ import annotations

import bisect
import csv
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptySegment
from .ingest import PacketRecord, PcapReader, TcpFlags

log = logging.getLogger(__name__)

STAT_NAMES = (
    "ipt_mean", "ipt_max", "ipt_min",
    "size_mean", "size_max", "size_min",
    "ttl_mean", "ttl_max", "ttl_min",
    "win_mean", "win_max", "win_min",
    "syn_pct", "ack_pct", "psh_pct", "rst_pct", "fin_pct",
)
FEATURE_NAMES = tuple(f"fwd_{s}" for s in STAT_NAMES) + tuple(f"bwd_{s}" for s in STAT_NAMES)
N_FEATURES = len(FEATURE_NAMES)  # 34
META_COLUMNS = ("src", "sport", "dst", "dport", "proto", "start_us", "end_us", "n_pkts")

_FLAG_ORDER = (TcpFlags.SYN, TcpFlags.ACK, TcpFlags.PSH, TcpFlags.RST, TcpFlags.FIN)
_TERMINATING = TcpFlags.FIN | TcpFlags.RST

Endpoint = tuple  # (ip, port)


class FlowKey(NamedTuple):
    a: Endpoint
    b: Endpoint
    proto: int


def flow_key(pkt: PacketRecord) -> FlowKey:
    src = (pkt.src_ip, pkt.src_port)
    dst = (pkt.dst_ip, pkt.dst_port)
    if src <= dst:
        return FlowKey(src, dst, pkt.protocol)
    return FlowKey(dst, src, pkt.protocol)


@dataclass
class SegmenterConfig:
    mode: str = "slotted"
    timespan_s: float = 60.0
    idle_timeout_s: float = 120.0
    windowed_stride: int = 1

    def __post_init__(self):
        if self.mode not in ("slotted", "windowed"):
            raise ValueError(f"mode must be 'slotted' or 'windowed', got {self.mode!r}")
        if not self.timespan_s > 0:
            raise ValueError("timespan_s must be > 0")
        if self.idle_timeout_s < self.timespan_s:
            raise ValueError("idle_timeout_s must be >= timespan_s")
        if self.windowed_stride < 1:
            raise ValueError("windowed_stride must be >= 1")

    @property
    def timespan_us(self) -> int:
        return int(round(self.timespan_s * 1_000_000))

    @property
    def idle_timeout_us(self) -> int:
        return int(round(self.idle_timeout_s * 1_000_000))


@dataclass
class Segment:
    """A completed slot or window: packets plus their direction tags."""

    key: FlowKey
    sender: Endpoint
    packets: list[PacketRecord]
    forward: list[bool]

    @property
    def receiver(self) -> Endpoint:
        return self.key.b if self.sender == self.key.a else self.key.a

    @property
    def start_us(self) -> int:
        return min(p.ts_us for p in self.packets)

    @property
    def end_us(self) -> int:
        return max(p.ts_us for p in self.packets)


@dataclass(frozen=True)
class SegmentMeta:
    src: str
    sport: int
    dst: str
    dport: int
    proto: int
    start_us: int
    end_us: int
    n_pkts: int


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    meta: SegmentMeta


@dataclass
class Flow:
    key: FlowKey
    sender: Endpoint
    packets: list = field(default_factory=list)  # [(PacketRecord, forward)]
    terminated: bool = False
    first_ts: int = 0
    last_ts: int = 0
    seq: int = 0  # creation order, for deterministic flush ordering
    n_seen: int = 0
    emitted_at: int = 0  # n_seen at the last windowed emission

    def add(self, pkt: PacketRecord):
        entry = (pkt, (pkt.src_ip, pkt.src_port) == self.sender)
        if self.packets and pkt.ts_us < self.packets[-1][0].ts_us:
            # out-of-order capture: keep ts order, ties after existing
            ts = [p.ts_us for p, _ in self.packets]
            self.packets.insert(bisect.bisect_right(ts, pkt.ts_us), entry)
        else:
            self.packets.append(entry)
        if self.n_seen == 0:
            self.first_ts = pkt.ts_us
        self.first_ts = min(self.first_ts, pkt.ts_us)
        self.last_ts = max(self.last_ts, pkt.ts_us)
        self.n_seen += 1


@dataclass
class FlowCollection:
    key: FlowKey
    flows: list[Flow] = field(default_factory=list)

    @property
    def current(self) -> Flow | None:
        if self.flows and not self.flows[-1].terminated:
            return self.flows[-1]
        return None


def _initial_sender(pkt: PacketRecord) -> Endpoint:
    # a SYN|ACK seen first means the initiator is its destination
    if pkt.flags & (TcpFlags.SYN | TcpFlags.ACK) == (TcpFlags.SYN | TcpFlags.ACK):
        return (pkt.dst_ip, pkt.dst_port)
    return (pkt.src_ip, pkt.src_port)


def window(packets: Sequence[PacketRecord], p: PacketRecord, t_s: float) -> list[PacketRecord]:
    """Packets x of the flow with 0 <= p.ts - x.ts <= t (timestamps in seconds)."""
    t_us = t_s * 1_000_000
    return [x for x in packets if 0 <= p.ts_us - x.ts_us <= t_us]


class FlowTable:
    """Live flow state.  Single writer; feed packets in capture order."""

    def __init__(self, cfg: SegmenterConfig | None = None):
        self.cfg = cfg or SegmenterConfig()
        self.collections: dict[FlowKey, FlowCollection] = {}
        self._live: OrderedDict[FlowKey, Flow] = OrderedDict()  # by last activity
        self._seq = 0

    def __len__(self):
        return len(self._live)

    def ingest(self, pkt: PacketRecord) -> list[Segment]:
        out: list[Segment] = []
        self._expire(pkt.ts_us, out)
        key = flow_key(pkt)
        coll = self.collections.get(key)
        if coll is None:
            coll = self.collections[key] = FlowCollection(key)
        flow = coll.current
        if flow is None:
            flow = Flow(key, _initial_sender(pkt), seq=self._seq)
            self._seq += 1
            coll.flows.append(flow)
        self._live[key] = flow
        self._live.move_to_end(key)

        if self.cfg.mode == "slotted":
            self._ingest_slotted(flow, pkt, out)
        else:
            self._ingest_windowed(flow, pkt, out)

        if pkt.flags & _TERMINATING:
            self._terminate(flow, out)
        return out

    def flush(self) -> list[Segment]:
        """Emit every open segment (ordered by first packet time) and clear state."""
        out: list[Segment] = []
        flows = sorted(self._live.values(), key=lambda f: (self._open_start(f), f.seq))
        for flow in flows:
            self._close(flow, out)
        self._live.clear()
        self.collections.clear()
        return out

    # -- internals ---------------------------------------------------------

    def _open_start(self, flow: Flow) -> int:
        return flow.packets[0][0].ts_us if flow.packets else flow.first_ts

    def _expire(self, now_us: int, out: list[Segment]):
        timeout = self.cfg.idle_timeout_us
        while self._live:
            key, flow = next(iter(self._live.items()))
            if now_us - flow.last_ts <= timeout:
                break
            self._terminate(flow, out)

    def _ingest_slotted(self, flow: Flow, pkt: PacketRecord, out: list[Segment]):
        if flow.packets and pkt.ts_us - flow.packets[0][0].ts_us > self.cfg.timespan_us:
            out.append(self._segment(flow, flow.packets))
            flow.packets = []
        flow.add(pkt)

    def _ingest_windowed(self, flow: Flow, pkt: PacketRecord, out: list[Segment]):
        flow.add(pkt)
        t_us = self.cfg.timespan_us
        newest = flow.packets[-1][0].ts_us
        # drop packets that can no longer fall inside any future window
        if newest - flow.packets[0][0].ts_us > t_us:
            self._compact(flow, newest - t_us)
        if flow.n_seen % self.cfg.windowed_stride == 0:
            self._emit_window(flow, pkt, out)

    @staticmethod
    def _compact(flow: Flow, cutoff: int):
        ts = [p.ts_us for p, _ in flow.packets]
        flow.packets = flow.packets[bisect.bisect_left(ts, cutoff):]

    def _emit_window(self, flow: Flow, p: PacketRecord, out: list[Segment]):
        t_us = self.cfg.timespan_us
        sel = [(x, fwd) for x, fwd in flow.packets if 0 <= p.ts_us - x.ts_us <= t_us]
        out.append(self._segment(flow, sel))
        flow.emitted_at = flow.n_seen

    def _close(self, flow: Flow, out: list[Segment]):
        if self.cfg.mode == "slotted":
            if flow.packets:
                out.append(self._segment(flow, flow.packets))
        elif flow.packets and flow.emitted_at != flow.n_seen:
            last = max(flow.packets, key=lambda e: e[0].ts_us)[0]
            self._emit_window(flow, last, out)
        flow.packets = []

    def _terminate(self, flow: Flow, out: list[Segment]):
        self._close(flow, out)
        flow.terminated = True
        self._live.pop(flow.key, None)

    @staticmethod
    def _segment(flow: Flow, entries) -> Segment:
        return Segment(flow.key, flow.sender, [p for p, _ in entries], [f for _, f in entries])


# module-level API mirroring the table methods
def ingest(pkt: PacketRecord, state: FlowTable) -> list[Segment]:
    return state.ingest(pkt)


def flush(state: FlowTable) -> list[Segment]:
    return state.flush()


def _direction_stats(pkts: list[PacketRecord]) -> list[float]:
    n = len(pkts)
    if n == 0:
        return [0.0] * 17
    out: list[float] = []
    if n >= 2:
        gaps = [b.ts_us - a.ts_us for a, b in zip(pkts, pkts[1:])]
        out += [sum(gaps) / (len(gaps) * 1_000_000), max(gaps) / 1_000_000, min(gaps) / 1_000_000]
    else:
        out += [0.0, 0.0, 0.0]
    for attr in ("total_len", "ttl", "window"):
        vals = [getattr(p, attr) for p in pkts]
        # int/int true division is correctly rounded, so min <= mean <= max holds
        out += [sum(vals) / n, float(max(vals)), float(min(vals))]
    for flag in _FLAG_ORDER:
        out.append(sum(1 for p in pkts if p.flags & flag) / n)
    return out


def compute_features(segment: Segment) -> FeatureVector:
    if not segment.packets:
        raise EmptySegment("segment has no packets")
    fwd = [p for p, f in zip(segment.packets, segment.forward) if f]
    bwd = [p for p, f in zip(segment.packets, segment.forward) if not f]
    values = tuple(_direction_stats(fwd) + _direction_stats(bwd))
    src, sport = segment.sender
    dst, dport = segment.receiver
    meta = SegmentMeta(src, sport, dst, dport, segment.key.proto,
                       segment.start_us, segment.end_us, len(segment.packets))
    return FeatureVector(values, meta)


def extract(packets: Iterable[PacketRecord], cfg: SegmenterConfig | None = None) -> list[FeatureVector]:
    table = FlowTable(cfg)
    out: list[FeatureVector] = []
    for pkt in packets:
        for seg in table.ingest(pkt):
            out.append(compute_features(seg))
    out.extend(compute_features(seg) for seg in table.flush())
    return out


def extract_pcap(path, cfg: SegmenterConfig | None = None):
    """Returns (feature vectors, ingest stats) for one capture file."""
    reader = PcapReader(path)
    vectors = extract(reader, cfg)
    return vectors, reader.stats


# -- CSV ---------------------------------------------------------------------

def write_features_csv(path, vectors: Iterable[FeatureVector]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(META_COLUMNS + FEATURE_NAMES)
        for v in vectors:
            m = v.meta
            w.writerow([m.src, m.sport, m.dst, m.dport, m.proto, m.start_us, m.end_us, m.n_pkts]
                       + [repr(float(x)) for x in v.values])


def read_features_csv(path) -> tuple[list[SegmentMeta], np.ndarray]:
    """Read a feature CSV written by :func:`write_features_csv`.

    Raises DimensionMismatch if the feature columns are not exactly the 34
    canonical ones.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DimensionMismatch(f"{path}: empty feature file") from None
        missing = [c for c in META_COLUMNS if c not in header]
        if missing:
            raise DimensionMismatch(f"{path}: missing meta columns {missing}")
        feat_cols = [c for c in header if c not in META_COLUMNS]
        if tuple(feat_cols) != FEATURE_NAMES:
            raise DimensionMismatch(
                f"{path}: expected {N_FEATURES} feature columns {FEATURE_NAMES[:2]}..., "
                f"got {len(feat_cols)}")
        meta_idx = [header.index(c) for c in META_COLUMNS]
        feat_idx = [header.index(c) for c in FEATURE_NAMES]
        metas, rows = [], []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DimensionMismatch(f"{path}:{lineno}: {len(rec)} fields, header has {len(header)}")
            src, sport, dst, dport, proto, start, end, n = (rec[i] for i in meta_idx)
            metas.append(SegmentMeta(src, int(sport), dst, int(dport), int(proto),
                                     int(start), int(end), int(n)))
            rows.append([float(rec[i]) for i in feat_idx])
    X = np.asarray(rows, dtype=float).reshape(len(rows), N_FEATURES)
    return metas, X
