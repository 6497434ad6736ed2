"""Classic pcap reading and Ethernet/IPv4/TCP header decoding.

Only header metadata is extracted; payload bytes are never inspected, only
counted.
"""
from __future__ import annotations

import enum
import logging
import socket
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator

from .errors import BadMagic, TruncatedHeader, TruncatedRecord

log = logging.getLogger(__name__)

MAGIC_US = 0xA1B2C3D4
MAGIC_NS = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
LINKTYPE_LINUX_SLL = 113

ETH_IPV4 = 0x0800
ETH_VLAN = 0x8100
ETH_QINQ = (0x88A8, 0x9100)
PROTO_TCP = 6

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16


class TcpFlags(enum.IntFlag):
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10
    URG = 0x20


@dataclass(frozen=True, slots=True)
class PacketRecord:
    ts_us: int
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: int
    ttl: int
    flags: int
    window: int
    total_len: int
    payload_len: int

    def has(self, flag: TcpFlags) -> bool:
        return bool(self.flags & flag)


@dataclass(frozen=True, slots=True)
class Skip:
    reason: str  # "non-ipv4" | "non-tcp" | "truncated"


@dataclass
class IngestStats:
    decoded: int = 0
    skipped_non_tcp: int = 0
    skipped_non_ipv4: int = 0
    truncated: int = 0

    @property
    def skipped(self) -> int:
        return self.skipped_non_tcp + self.skipped_non_ipv4 + self.truncated

    def as_dict(self) -> dict:
        return {
            "decoded": self.decoded,
            "skipped_non_tcp": self.skipped_non_tcp,
            "skipped_non_ipv4": self.skipped_non_ipv4,
            "truncated": self.truncated,
        }


_NON_IPV4 = Skip("non-ipv4")
_NON_TCP = Skip("non-tcp")
_TRUNCATED = Skip("truncated")


def decode_packet(raw: bytes, link_type: int, ts_us: int = 0,
                  orig_len: int | None = None) -> PacketRecord | Skip:
    """Decode one captured frame.

    ``orig_len`` is the on-wire length from the record header; it defaults to
    ``len(raw)`` for frames that were captured whole.  Malformed frames yield a
    :class:`Skip` rather than an exception.
    """
    if orig_len is None:
        orig_len = len(raw)
    n = len(raw)

    if link_type == LINKTYPE_ETHERNET:
        if n < 14:
            return _TRUNCATED
        ethertype = (raw[12] << 8) | raw[13]
        off = 14
        if ethertype == ETH_VLAN:
            if n < 18:
                return _TRUNCATED
            ethertype = (raw[16] << 8) | raw[17]
            off = 18
            if ethertype == ETH_VLAN or ethertype in ETH_QINQ:
                return _NON_IPV4
        if ethertype != ETH_IPV4:
            return _NON_IPV4
    elif link_type == LINKTYPE_RAW:
        off = 0
    elif link_type == LINKTYPE_LINUX_SLL:
        if n < 16:
            return _TRUNCATED
        if ((raw[14] << 8) | raw[15]) != ETH_IPV4:
            return _NON_IPV4
        off = 16
    else:
        return _NON_IPV4

    if n < off + 20:
        return _TRUNCATED
    vihl = raw[off]
    if vihl >> 4 != 4:
        return _NON_IPV4
    ihl = (vihl & 0x0F) * 4
    if ihl < 20:
        return _TRUNCATED
    ip_total = (raw[off + 2] << 8) | raw[off + 3]
    frag = ((raw[off + 6] << 8) | raw[off + 7]) & 0x1FFF
    ttl = raw[off + 8]
    proto = raw[off + 9]
    if proto != PROTO_TCP or frag != 0:
        return _NON_TCP

    tcp = off + ihl
    if n < tcp + 20:
        return _TRUNCATED
    sport, dport = struct.unpack_from("!HH", raw, tcp)
    doff = (raw[tcp + 12] >> 4) * 4
    flags = raw[tcp + 13] & 0x3F
    window = (raw[tcp + 14] << 8) | raw[tcp + 15]
    if doff < 20 or ip_total < ihl + doff:
        return _TRUNCATED
    if off + ip_total > orig_len:
        return _TRUNCATED
    payload_len = ip_total - ihl - doff

    return PacketRecord(
        ts_us=ts_us,
        src_ip=socket.inet_ntoa(raw[off + 12:off + 16]),
        dst_ip=socket.inet_ntoa(raw[off + 16:off + 20]),
        src_port=sport,
        dst_port=dport,
        protocol=proto,
        ttl=ttl,
        flags=flags,
        window=window,
        total_len=orig_len,
        payload_len=payload_len,
    )


class PcapReader:
    """Iterate the TCP/IPv4 packets of a classic pcap file in capture order.

    A record whose header claims more bytes than remain ends iteration; the
    event is counted in ``stats.truncated`` (or raised with ``strict=True``).
    """

    def __init__(self, path, strict: bool = False):
        self.path = path
        self.strict = strict
        self.stats = IngestStats()
        with open(path, "rb") as fh:
            header = fh.read(GLOBAL_HEADER_LEN)
        if len(header) < 4:
            raise TruncatedHeader(f"{path}: {len(header)} bytes, need 24")
        magic_le = struct.unpack("<I", header[:4])[0]
        magic_be = struct.unpack(">I", header[:4])[0]
        if magic_le in (MAGIC_US, MAGIC_NS):
            self._endian = "<"
            magic = magic_le
        elif magic_be in (MAGIC_US, MAGIC_NS):
            self._endian = ">"
            magic = magic_be
        elif PCAPNG_MAGIC in (magic_le, magic_be):
            raise BadMagic(f"{path}: pcapng is not supported, convert to classic pcap "
                           "(e.g. editcap -F pcap)")
        else:
            raise BadMagic(f"{path}: unrecognized magic 0x{magic_be:08x}")
        if len(header) < GLOBAL_HEADER_LEN:
            raise TruncatedHeader(f"{path}: {len(header)} bytes, need 24")
        self.nanosecond = magic == MAGIC_NS
        (self.version_major, self.version_minor, _zone, _sigfigs,
         self.snaplen, self.link_type) = struct.unpack(self._endian + "HHiIII", header[4:])

    def __iter__(self) -> Iterator[PacketRecord]:
        rec_fmt = struct.Struct(self._endian + "IIII")
        with open(self.path, "rb") as fh:
            fh.seek(GLOBAL_HEADER_LEN)
            yield from self._records(fh, rec_fmt)

    def _records(self, fh: BinaryIO, rec_fmt: struct.Struct) -> Iterator[PacketRecord]:
        stats = self.stats
        link = self.link_type
        while True:
            hdr = fh.read(RECORD_HEADER_LEN)
            if not hdr:
                return
            if len(hdr) < RECORD_HEADER_LEN:
                self._truncated("partial record header")
                return
            ts_sec, ts_frac, incl_len, orig_len = rec_fmt.unpack(hdr)
            raw = fh.read(incl_len)
            if len(raw) < incl_len:
                self._truncated(f"record claims {incl_len} bytes, {len(raw)} remain")
                return
            if self.nanosecond:
                ts_frac //= 1000
            out = decode_packet(raw, link, ts_sec * 1_000_000 + ts_frac, orig_len)
            if isinstance(out, Skip):
                if out.reason == "non-tcp":
                    stats.skipped_non_tcp += 1
                elif out.reason == "non-ipv4":
                    stats.skipped_non_ipv4 += 1
                else:
                    stats.truncated += 1
                continue
            stats.decoded += 1
            yield out

    def _truncated(self, why: str):
        self.stats.truncated += 1
        if self.strict:
            raise TruncatedRecord(f"{self.path}: {why}")
        log.warning("%s: %s; stopping", self.path, why)


def read_pcap(path, strict: bool = False) -> tuple[list[PacketRecord], IngestStats]:
    reader = PcapReader(path, strict=strict)
    records = list(reader)
    return records, reader.stats
