"""Deterministic generator of labelled SCADA-style TCP captures.

The benign baseline is one long-lived TCP session per RTU to port 2404 with a
poll/response/ack cycle every ``poll_interval_s``.  Scenario overlays add the
anomalies of the AN1..AN7.7 catalogue (see :data:`SCENARIOS`).  With
``tls=True`` a 4-packet handshake prologue follows each TCP handshake and every
payload-carrying IEC-104 packet grows by a fixed 29-byte record overhead.

Randomness comes from SplitMix64 (state += 0x9E3779B97F4A7C15; mix with
0xBF58476D1CE4E5B9 and 0x94D049BB133111EB), one independent stream per
concern, so that the timing draws do not depend on payload sizes or the TLS
switch.
"""
from __future__ import annotations

import json
import socket
import struct
import zlib
from dataclasses import dataclass, field

from .errors import InvalidScenario, UnwritablePath
from .evaluation import LabelRule, LabelSpec
from .ingest import (GLOBAL_HEADER_LEN, LINKTYPE_ETHERNET, MAGIC_US, RECORD_HEADER_LEN, PcapReader,
                     TcpFlags)

MASK64 = (1 << 64) - 1

SCENARIOS = {
    "AN1": "Standard Operation (Benign Data)",
    "AN2": "2-hop Targeted Manipulation 1",
    "AN3": "2-hop Targeted Manipulation 2",
    "AN4": "2-hop vRTU Slowdown",
    "AN5": "2-hop vRTU Shutdown",
    "AN6": "Telnet Data Exfiltration",
    "AN7.1": "Reconnaissance - Default Options",
    "AN7.2": "Reconnaissance - No ARP or ND",
    "AN7.3": "Reconnaissance - TCP Connect",
    "AN7.4": "Reconnaissance - TCP SYN Scan",
    "AN7.5": "Reconnaissance - TCP NULL Scan",
    "AN7.6": "Reconnaissance - TCP FIN Scan",
    "AN7.7": "Reconnaissance - Xmas Scan",
}

EPOCH_S = 1_700_000_000
MASTER_IP = "10.0.0.1"
ATTACKER_IP = "10.0.0.66"
IEC104_PORT = 2404
MASTER_WINDOW = 64240
RTU_WINDOW = 29200
DEFAULT_TTL = 64
TLS_OVERHEAD = 29
SCAN_TARGETS = 256

# probe ports; all closed on the simulated hosts (only 2404 listens)
SCAN_PORTS = (21, 22, 23, 25, 53, 80, 102, 110, 111, 135, 139, 143, 161, 389, 443, 445,
              502, 993, 995, 1433, 1723, 1883, 3306, 3389, 4840, 5432, 5900, 8080, 8443,
              20000, 44818, 47808)
ABSENT_HOSTS = ("10.0.1.200", "10.0.1.201", "10.0.1.202", "10.0.1.203")

F = TcpFlags
PSH_ACK = int(F.PSH | F.ACK)
SYN_ACK = int(F.SYN | F.ACK)
RST_ACK = int(F.RST | F.ACK)
FIN_ACK = int(F.FIN | F.ACK)


class SplitMix64:
    GAMMA = 0x9E3779B97F4A7C15
    MIX1 = 0xBF58476D1CE4E5B9
    MIX2 = 0x94D049BB133111EB

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * self.MIX1) & MASK64
        z = ((z ^ (z >> 27)) * self.MIX2) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform in [0, 1) with 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, a: float, b: float) -> float:
        return a + (b - a) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Inclusive; modulo reduction (bias is negligible for small spans)."""
        return lo + self.next_u64() % (hi - lo + 1)

    def randbytes(self, n: int) -> bytes:
        words = (n + 7) // 8
        return b"".join(self.next_u64().to_bytes(8, "little") for _ in range(words))[:n]

    @classmethod
    def stream(cls, seed: int, name: str) -> "SplitMix64":
        """Independent stream keyed by name, independent of call order."""
        mixer = cls((seed ^ (zlib.crc32(name.encode()) << 32)) & MASK64)
        return cls(mixer.next_u64())


@dataclass
class ScenarioConfig:
    scenario: str = "AN1"
    seed: int = 7
    duration_s: float = 600.0
    n_rtus: int = 4
    poll_interval_s: float = 1.0
    tls: bool = False
    jitter_frac: float = 0.1
    scan_targets: int = SCAN_TARGETS

    def __post_init__(self):
        self.scenario = normalize_scenario(self.scenario)
        if not self.duration_s > 0:
            raise ValueError("duration_s must be > 0")
        if self.n_rtus < 1:
            raise ValueError("n_rtus must be >= 1")
        if not 0 <= self.jitter_frac < 1:
            raise ValueError("jitter_frac must be in [0, 1)")
        if not self.poll_interval_s > 0:
            raise ValueError("poll_interval_s must be > 0")


def normalize_scenario(name: str) -> str:
    key = str(name).strip().upper()
    if not key.startswith("AN"):
        key = "AN" + key
    if key not in SCENARIOS:
        raise InvalidScenario(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}")
    return key


def rtu_ip(i: int) -> str:
    return f"10.0.1.{i + 1}"


def _mac(ip: str) -> bytes:
    return b"\x02\x00" + socket.inet_aton(ip)


# -- frame encoding ------------------------------------------------------------

def _ip_checksum(header: bytes) -> int:
    s = sum(struct.unpack("!10H", header))
    s = (s & 0xFFFF) + (s >> 16)
    s = (s & 0xFFFF) + (s >> 16)
    return ~s & 0xFFFF


def encode_frame(src_ip: str, dst_ip: str, src_port: int, dst_port: int, flags: int,
                 payload: bytes = b"", ttl: int = DEFAULT_TTL, window: int = 0,
                 seq: int = 0, ack: int = 0, ip_id: int = 0,
                 ip_options: bytes = b"", tcp_options: bytes = b"") -> bytes:
    """Ethernet II + IPv4 + TCP frame.  The TCP checksum is left zero."""
    if len(ip_options) % 4 or len(tcp_options) % 4:
        raise ValueError("options must be padded to 32-bit words")
    ihl = 5 + len(ip_options) // 4
    doff = 5 + len(tcp_options) // 4
    total = ihl * 4 + doff * 4 + len(payload)
    ip = struct.pack("!BBHHHBBH4s4s", (4 << 4) | ihl, 0, total, ip_id & 0xFFFF, 0x4000,
                     ttl, 6, 0, socket.inet_aton(src_ip), socket.inet_aton(dst_ip))
    ip = ip[:10] + struct.pack("!H", _ip_checksum(ip)) + ip[12:] + ip_options
    tcp = struct.pack("!HHIIBBHHH", src_port, dst_port, seq & 0xFFFFFFFF, ack & 0xFFFFFFFF,
                      doff << 4, flags & 0xFF, window, 0, 0) + tcp_options
    eth = _mac(dst_ip) + _mac(src_ip) + b"\x08\x00"
    return eth + ip + tcp + payload


def pcap_global_header(link_type: int = LINKTYPE_ETHERNET, snaplen: int = 65535) -> bytes:
    return struct.pack("<IHHiIII", MAGIC_US, 2, 4, 0, 0, snaplen, link_type)


def pcap_record(ts_us: int, frame: bytes, orig_len: int | None = None) -> bytes:
    orig = len(frame) if orig_len is None else orig_len
    return struct.pack("<IIII", ts_us // 1_000_000, ts_us % 1_000_000, len(frame), orig) + frame


# -- simulation ----------------------------------------------------------------

@dataclass
class _Pkt:
    ts_us: int
    order: int
    src: str
    sport: int
    dst: str
    dport: int
    flags: int
    payload_len: int
    ttl: int
    window: int
    seq: int
    ack: int
    kind: str  # payload family: "iec", "tls", "telnet", ""


class _Conn:
    """TCP connection bookkeeping for sequence/ack numbers."""

    def __init__(self, sim: "_Sim", client: tuple, server: tuple, client_win: int, server_win: int,
                 isn_rng: SplitMix64):
        self.sim = sim
        self.client, self.server = client, server
        self.win = {client: client_win, server: server_win}
        self.nxt = {client: isn_rng.next_u64() & 0xFFFFFFFF, server: isn_rng.next_u64() & 0xFFFFFFFF}

    def send(self, t_s: float, from_client: bool, flags: int, payload_len: int = 0,
             ttl: int = DEFAULT_TTL, kind: str = ""):
        a, b = (self.client, self.server) if from_client else (self.server, self.client)
        seq = self.nxt[a]
        ack = self.nxt[b] if flags & F.ACK else 0
        self.sim.emit(t_s, a, b, flags, payload_len, ttl, self.win[a], seq, ack, kind)
        self.nxt[a] = (seq + payload_len + (1 if flags & (F.SYN | F.FIN) else 0)) & 0xFFFFFFFF


class _Sim:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.packets: list[_Pkt] = []
        self.rules: list[LabelRule] = []
        self.connections = 0
        self.end_s = cfg.duration_s

    def emit(self, t_s, a, b, flags, payload_len, ttl, window, seq, ack, kind):
        if t_s < 0 or t_s >= self.end_s:
            return
        self.packets.append(_Pkt(us(t_s), len(self.packets), a[0], a[1], b[0], b[1], int(flags),
                                 payload_len, ttl, window, seq, ack, kind))

    def conn(self, client, server, client_win, server_win, rng) -> _Conn:
        self.connections += 1
        return _Conn(self, client, server, client_win, server_win, rng)

    def label(self, start_s, end_s, label, scenario, src_ip=None, dst_ip=None, dst_port=None):
        self.rules.append(LabelRule(us(start_s), us(end_s), label, scenario, src_ip, dst_ip, dst_port))


def us(t_s: float) -> int:
    return EPOCH_S * 1_000_000 + int(round(t_s * 1_000_000))


def _jit(rng: SplitMix64, base: float, frac: float) -> float:
    return base * (1.0 + frac * rng.uniform(-1.0, 1.0))


def _attack_window(cfg: ScenarioConfig) -> tuple[float, float]:
    return 0.4 * cfg.duration_s, 0.7 * cfg.duration_s


def _target_rtu(cfg: ScenarioConfig) -> int:
    # AN3 manipulates a different station than AN2 when one exists
    if cfg.scenario == "AN3" and cfg.n_rtus > 1:
        return 1
    return 0


def _rtu_session(sim: _Sim, i: int):
    cfg = sim.cfg
    rng = SplitMix64.stream(cfg.seed, f"rtu{i}.timing")
    sizes = SplitMix64.stream(cfg.seed, f"rtu{i}.sizes")
    jf = cfg.jitter_frac
    master = (MASTER_IP, 40000 + i)
    rtu = (rtu_ip(i), IEC104_PORT)
    c = sim.conn(master, rtu, MASTER_WINDOW, RTU_WINDOW, SplitMix64.stream(cfg.seed, f"rtu{i}.isn"))
    overhead = TLS_OVERHEAD if cfg.tls else 0
    kind = "tls" if cfg.tls else "iec"

    target = _target_rtu(cfg) == i
    a0, a1 = _attack_window(cfg)
    relay = cfg.scenario in ("AN2", "AN3") and target
    slowdown = cfg.scenario == "AN4" and target
    shutdown_at = 0.5 * cfg.duration_s if cfg.scenario == "AN5" and target else None

    def rtu_ttl(t):
        return DEFAULT_TTL - 1 if relay and a0 <= t < a1 else DEFAULT_TTL

    t = 0.05 + 0.1 * i + rng.uniform(0.0, 0.05)
    rtt = _jit(rng, 0.0004, jf)
    c.send(t, True, F.SYN)
    c.send(t + rtt, False, SYN_ACK, ttl=rtu_ttl(t))
    c.send(t + 2 * rtt, True, F.ACK)
    if cfg.tls:
        # ClientHello, ServerHello..Done, client Finished, server Finished
        hs = 2 * rtt + 0.001
        for k, (fwd, size) in enumerate(((True, 240), (False, 1180), (True, 126), (False, 51))):
            c.send(t + hs + 0.002 * k, fwd, PSH_ACK, size, ttl=DEFAULT_TTL if fwd else rtu_ttl(t),
                   kind="tls")

    k = 0
    while True:
        tp = t + 0.5 + k * cfg.poll_interval_s + cfg.poll_interval_s * jf * rng.uniform(-1.0, 1.0)
        latency = _jit(rng, 0.008, jf)
        ack_delay = _jit(rng, 0.040, jf)
        resp_len = 14 + 12 * sizes.randint(1, 8)
        k += 1
        if tp >= cfg.duration_s:
            break
        if shutdown_at is not None and tp >= shutdown_at:
            break
        if slowdown and a0 <= tp < a1:
            latency *= 5
        if relay and a0 <= tp < a1:
            latency += 2 * 0.0015  # request and response each cross the relay
        c.send(tp, True, PSH_ACK, 16 + overhead, kind=kind)
        c.send(tp + latency, False, PSH_ACK, resp_len + overhead, ttl=rtu_ttl(tp + latency), kind=kind)
        c.send(tp + latency + ack_delay, True, F.ACK)

    if shutdown_at is not None:
        c.send(shutdown_at, False, RST_ACK)
        sim.label(shutdown_at - 1.0, shutdown_at, "attack", cfg.scenario,
                  MASTER_IP, rtu[0], IEC104_PORT)
        sim.label(shutdown_at, cfg.duration_s, "effect", cfg.scenario, MASTER_IP, rtu[0], None)
        # master keeps trying to reconnect; nobody answers
        attempt = 0
        ta = shutdown_at + 5.0
        while ta < cfg.duration_s:
            r = sim.conn((MASTER_IP, 41000 + attempt), rtu, MASTER_WINDOW, RTU_WINDOW,
                         SplitMix64.stream(cfg.seed, f"reconnect{attempt}"))
            for back in (0.0, 1.0, 3.0):
                sim.emit(ta + back, r.client, r.server, F.SYN, 0, DEFAULT_TTL, MASTER_WINDOW,
                         r.nxt[r.client], 0, "")
            attempt += 1
            ta += 10.0
    if (relay or slowdown) and a0 < cfg.duration_s:
        sim.label(a0, min(a1, cfg.duration_s), "attack", cfg.scenario, MASTER_IP, rtu[0], IEC104_PORT)


def _exfiltration(sim: _Sim):
    cfg = sim.cfg
    rng = SplitMix64.stream(cfg.seed, "exfil")
    victim = (rtu_ip(0), 23)
    attacker = (ATTACKER_IP, 50000 + rng.randint(0, 9999))
    t0 = 0.4 * cfg.duration_s
    c = sim.conn(attacker, victim, MASTER_WINDOW, RTU_WINDOW, rng)
    rtt = 0.0004
    c.send(t0, True, F.SYN)
    c.send(t0 + rtt, False, SYN_ACK)
    c.send(t0 + 2 * rtt, True, F.ACK)
    t = t0 + 0.05
    # telnet negotiation and login
    for _ in range(6):
        c.send(t, False, PSH_ACK, rng.randint(12, 60), kind="telnet")
        t += rng.uniform(0.2, 0.6)
        c.send(t, True, PSH_ACK, rng.randint(3, 24), kind="telnet")
        t += rng.uniform(0.05, 0.2)
    login_end = t
    # bulk transfer out of the station
    t_end = min(login_end + 30.0, cfg.duration_s - 1.0)
    n = 0
    while t < t_end:
        c.send(t, False, PSH_ACK, 1448, kind="telnet")
        n += 1
        if n % 2 == 0:
            c.send(t + 0.0003, True, F.ACK)
        t += rng.uniform(0.008, 0.012)
    c.send(t, True, FIN_ACK)
    c.send(t + rtt, False, FIN_ACK)
    c.send(t + 2 * rtt, True, F.ACK)
    sim.label(t0, login_end, "attack_vector", cfg.scenario, ATTACKER_IP, victim[0], 23)
    sim.label(login_end, t + 1.0, "attack", cfg.scenario, ATTACKER_IP, victim[0], 23)


_SCAN_STYLE = {
    # scenario: (probe flags, probes per second, raw packets, host discovery first)
    "AN7.1": (int(F.SYN), 200.0, True, True),
    "AN7.2": (int(F.SYN), 100.0, True, False),
    "AN7.3": (int(F.SYN), 50.0, False, False),
    "AN7.4": (int(F.SYN), 200.0, True, False),
    "AN7.5": (0, 200.0, True, False),
    "AN7.6": (int(F.FIN), 200.0, True, False),
    "AN7.7": (int(F.FIN | F.PSH | F.URG), 200.0, True, False),
}


def _scan(sim: _Sim):
    cfg = sim.cfg
    rng = SplitMix64.stream(cfg.seed, "scan")
    probe_flags, rate, raw, discovery = _SCAN_STYLE[cfg.scenario]
    live = [MASTER_IP] + [rtu_ip(i) for i in range(cfg.n_rtus)]
    hosts = live + list(ABSENT_HOSTS)
    targets = [(h, p) for h in hosts for p in SCAN_PORTS]
    for j in range(len(targets) - 1, 0, -1):  # Fisher-Yates
        k = rng.randint(0, j)
        targets[j], targets[k] = targets[k], targets[j]
    targets = targets[:cfg.scan_targets]

    t = 0.4 * cfg.duration_s
    start = t
    raw_sport = 40000 + rng.randint(0, 20000)
    conn_sport = 45000 + rng.randint(0, 10000)
    scan_win = 1024 if raw else MASTER_WINDOW

    def probe(t, host, port, flags, sport):
        ttl = rng.randint(37, 59) if raw else DEFAULT_TTL
        sim.connections += 1
        seq = rng.next_u64() & 0xFFFFFFFF
        sim.emit(t, (ATTACKER_IP, sport), (host, port), flags, 0, ttl, scan_win, seq, 0, "")
        if host in live:
            reply = int(F.RST) if flags == int(F.ACK) else RST_ACK
            ack = 0 if reply == int(F.RST) else (seq + (1 if flags & (F.SYN | F.FIN) else 0)) & 0xFFFFFFFF
            sim.emit(t + 0.0002, (host, port), (ATTACKER_IP, sport), reply, 0, DEFAULT_TTL, 0,
                     0, ack, "")

    if discovery:
        for h in hosts:
            probe(t, h, 443, int(F.SYN), raw_sport)
            probe(t + 0.0005, h, 80, int(F.ACK), raw_sport)
            t += 0.01
        t += 0.2
    for n, (h, p) in enumerate(targets):
        sport = raw_sport if raw else conn_sport + n
        probe(t, h, p, probe_flags, sport)
        t += 1.0 / rate
    sim.label(start, t + 1.0, "attack_vector", cfg.scenario, ATTACKER_IP, None, None)


@dataclass
class GenerationSummary:
    packet_count: int
    flow_count: int
    anomaly_intervals: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"packet_count": self.packet_count, "flow_count": self.flow_count,
                "anomaly_intervals": self.anomaly_intervals}


def simulate(cfg: ScenarioConfig) -> tuple[list[_Pkt], LabelSpec, int]:
    sim = _Sim(cfg)
    for i in range(cfg.n_rtus):
        _rtu_session(sim, i)
    if cfg.scenario == "AN6":
        _exfiltration(sim)
    elif cfg.scenario.startswith("AN7"):
        _scan(sim)
    packets = sorted(sim.packets, key=lambda p: (p.ts_us, p.order))
    return packets, LabelSpec(sim.rules), sim.connections


def _payload(rng: SplitMix64, kind: str, n: int) -> bytes:
    if n == 0:
        return b""
    body = rng.randbytes(n)
    if kind == "iec" and n >= 2:
        return bytes((0x68, min(n - 2, 253))) + body[2:]
    if kind == "tls" and n >= 5:
        return b"\x17\x03\x03" + struct.pack("!H", n - 5) + body[5:]
    return body


def generate(cfg: ScenarioConfig, out_pcap, out_labels=None) -> GenerationSummary:
    packets, labels, n_conn = simulate(cfg)
    payload_rng = SplitMix64.stream(cfg.seed, "payload")
    ip_ids: dict[str, int] = {}
    try:
        fh = open(out_pcap, "wb")
    except OSError as exc:
        raise UnwritablePath(f"{out_pcap}: {exc}") from None
    with fh:
        fh.write(pcap_global_header())
        for p in packets:
            ip_id = ip_ids.get(p.src, 0)
            ip_ids[p.src] = ip_id + 1
            frame = encode_frame(p.src, p.dst, p.sport, p.dport, p.flags,
                                 _payload(payload_rng, p.kind, p.payload_len),
                                 ttl=p.ttl, window=p.window, seq=p.seq, ack=p.ack, ip_id=ip_id)
            fh.write(pcap_record(p.ts_us, frame))
    if out_labels is not None:
        try:
            labels.to_csv(out_labels)
        except OSError as exc:
            raise UnwritablePath(f"{out_labels}: {exc}") from None
    intervals = [{"label": r.label, "scenario": r.scenario, "start_us": r.start_us,
                  "end_us": r.end_us} for r in labels.rules]
    return GenerationSummary(len(packets), n_conn, intervals)


def write_summary(summary: GenerationSummary, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_dict(), fh, indent=2)


def randomize_payloads(in_pcap, out_pcap, seed: int = 0) -> int:
    """Copy a capture replacing every TCP payload byte with seeded noise.

    Headers, lengths and timing are untouched.  Returns the number of frames
    rewritten.
    """
    reader = PcapReader(in_pcap)  # validates the header
    endian = reader._endian
    rng = SplitMix64.stream(seed, "randomize")
    rewritten = 0
    with open(in_pcap, "rb") as src, open(out_pcap, "wb") as dst:
        dst.write(src.read(GLOBAL_HEADER_LEN))
        while True:
            hdr = src.read(RECORD_HEADER_LEN)
            if len(hdr) < RECORD_HEADER_LEN:
                dst.write(hdr)
                break
            incl = struct.unpack(endian + "IIII", hdr)[2]
            frame = bytearray(src.read(incl))
            if reader.link_type == LINKTYPE_ETHERNET and len(frame) >= 34 and frame[12:14] == b"\x08\x00":
                ihl = (frame[14] & 0x0F) * 4
                ip_total = (frame[16] << 8) | frame[17]
                if frame[23] == 6 and len(frame) >= 14 + ihl + 20:
                    doff = (frame[14 + ihl + 12] >> 4) * 4
                    lo, hi = 14 + ihl + doff, min(14 + ip_total, len(frame))
                    if hi > lo:
                        frame[lo:hi] = rng.randbytes(hi - lo)
                        rewritten += 1
            dst.write(hdr)
            dst.write(bytes(frame))
    return rewritten
