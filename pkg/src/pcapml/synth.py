"""Synthetic traffic generation for tests, fixtures, and benchmarks.

Scalar builders assemble individual frames byte by byte; ``write_flows_pcap``
produces multi-hundred-megabyte traces quickly by building flow header
templates and scattering them with numpy, then framing records through the
active emit kernel.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from ipaddress import IPv4Address
from pathlib import Path

import numpy as np

from . import backend
from .pcapio import PCAP_MAGIC_US, SNAP_CAP

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17

_MAC_SRC = bytes.fromhex("02a1b2c3d401")
_MAC_DST = bytes.fromhex("02a1b2c3d402")


# --- scalar frame builders --------------------------------------------------

def ether(payload: bytes, ethertype: int, vlan: int | None = None) -> bytes:
    head = _MAC_DST + _MAC_SRC
    if vlan is not None:
        head += struct.pack(">HH", 0x8100, vlan & 0x0FFF)
    return head + struct.pack(">H", ethertype) + payload


def ipv4_checksum(header: bytes) -> int:
    total = sum(struct.unpack(f">{len(header) // 2}H", header))
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def ipv4(src: str, dst: str, proto: int, payload: bytes, *,
         frag_offset: int = 0, more_fragments: bool = False,
         ttl: int = 64, options: bytes = b"") -> bytes:
    if len(options) % 4:
        raise ValueError("IPv4 options must be 32-bit aligned")
    ihl = 5 + len(options) // 4
    total = 20 + len(options) + len(payload)
    flags_frag = ((0x2000 if more_fragments else 0) | (frag_offset & 0x1FFF))
    head = struct.pack(
        ">BBHHHBBH4s4s", (4 << 4) | ihl, 0, total, 0x1234, flags_frag,
        ttl, proto, 0, IPv4Address(src).packed, IPv4Address(dst).packed,
    ) + options
    checksum = ipv4_checksum(head)
    return head[:10] + struct.pack(">H", checksum) + head[12:] + payload


def ipv6(src: str, dst: str, next_header: int, payload: bytes, *,
         hop_limit: int = 64) -> bytes:
    from ipaddress import IPv6Address
    return struct.pack(
        ">IHBB16s16s", 6 << 28, len(payload), next_header, hop_limit,
        IPv6Address(src).packed, IPv6Address(dst).packed,
    ) + payload


def tcp(sport: int, dport: int, payload: bytes = b"") -> bytes:
    return struct.pack(">HHIIBBHHH", sport, dport, 0, 0, 5 << 4, 0x10,
                       8192, 0, 0) + payload


def udp(sport: int, dport: int, payload: bytes = b"") -> bytes:
    return struct.pack(">HHHH", sport, dport, 8 + len(payload), 0) + payload


def icmp_echo(payload: bytes = b"", reply: bool = False) -> bytes:
    return struct.pack(">BBHHH", 0 if reply else 8, 0, 0, 1, 1) + payload


# --- bulk trace generation ---------------------------------------------------

@dataclass(frozen=True)
class FlowSpec:
    src: str
    dst: str
    proto: int
    sport: int
    dport: int

    def header_bytes(self) -> bytes:
        if self.proto == PROTO_TCP:
            transport = tcp(self.sport, self.dport)
        elif self.proto == PROTO_UDP:
            transport = udp(self.sport, self.dport)
        else:
            transport = icmp_echo()
        return ether(ipv4(self.src, self.dst, self.proto, transport), 0x0800)


def make_flows(n_flows: int) -> list[FlowSpec]:
    protos = (PROTO_TCP, PROTO_UDP, PROTO_ICMP)
    flows = []
    for i in range(n_flows):
        proto = protos[i % 3]
        flows.append(FlowSpec(
            src=f"10.{(i >> 8) & 0xFF}.{i & 0xFF}.1",
            dst=f"192.168.{(i >> 8) & 0xFF}.{i & 0xFF}",
            proto=proto,
            sport=1024 + i,
            dport=443 if proto == PROTO_TCP else 53,
        ))
    return flows


def _size_scale(target_mean: float, floor: int, cap: int) -> float:
    """Exponential scale whose floor+clip mean lands on target_mean."""
    scale = max(target_mean - floor, 1.0)
    span = cap - floor
    for _ in range(30):
        scale = (target_mean - floor) / (1.0 - math.exp(-span / scale))
    return scale


@dataclass
class TraceSummary:
    path: Path
    n_packets: int
    flows: list[FlowSpec]
    mean_size: float
    total_bytes: int
    first_ts_us: int
    last_ts_us: int


def write_flows_pcap(path, n_packets: int, *, n_flows: int = 64,
                     mean_size: float = 449.0, burst: int = 16,
                     seed: int = 0, start_ts_us: int = 1_700_000_000_000_000,
                     mean_gap_us: float = 100.0,
                     random_payload: bool = True) -> TraceSummary:
    """Write a synthetic IPv4 trace of bursty flows as a plain PCAP."""
    rng = np.random.default_rng(seed)
    flows = make_flows(n_flows)
    templates = [np.frombuffer(f.header_bytes(), np.uint8) for f in flows]
    hdr_lens = np.array([t.size for t in templates], np.int64)
    floor = int(hdr_lens.max()) + 6

    n_bursts = n_packets // burst + 1
    flow_id = np.repeat(rng.integers(0, n_flows, n_bursts), burst)[:n_packets]
    sizes = (floor + rng.exponential(
        _size_scale(mean_size, floor, 1514), n_packets
    )).astype(np.int64)
    np.clip(sizes, floor, 1514, out=sizes)
    gaps = rng.exponential(mean_gap_us, n_packets).astype(np.int64) + 1
    ts = start_ts_us + np.cumsum(gaps)

    off = np.zeros(n_packets, np.int64)
    np.cumsum(sizes[:-1], out=off[1:])
    total = int(sizes.sum())
    if random_payload:
        buf = np.frombuffer(rng.bytes(total), np.uint8).copy()
    else:
        buf = np.zeros(total, np.uint8)

    for f in range(n_flows):
        idx = off[flow_id == f]
        if idx.size == 0:
            continue
        tmpl = templates[f]
        buf[idx[:, None] + np.arange(tmpl.size)] = tmpl

    # per-packet IPv4 total length + checksum (headers differ only there)
    ip_total = sizes - 14
    buf[off + 16] = (ip_total >> 8).astype(np.uint8)
    buf[off + 17] = (ip_total & 0xFF).astype(np.uint8)
    partial = np.zeros(n_flows, np.int64)
    for f in range(n_flows):
        words = templates[f][14:34].reshape(10, 2).astype(np.int64)
        s = int(((words[:, 0] << 8) | words[:, 1]).sum())
        s -= int((words[2, 0] << 8) | words[2, 1])  # total length slot
        s -= int((words[5, 0] << 8) | words[5, 1])  # checksum slot
        partial[f] = s
    csum = partial[flow_id] + ip_total
    csum = (csum & 0xFFFF) + (csum >> 16)
    csum = (csum & 0xFFFF) + (csum >> 16)
    csum = ~csum & 0xFFFF
    buf[off + 24] = (csum >> 8).astype(np.uint8)
    buf[off + 25] = (csum & 0xFF).astype(np.uint8)

    # UDP length field for UDP flows
    is_udp = np.array([f.proto == PROTO_UDP for f in flows], bool)[flow_id]
    if is_udp.any():
        udp_len = sizes[is_udp] - 34
        pos = off[is_udp] + 38
        buf[pos] = (udp_len >> 8).astype(np.uint8)
        buf[pos + 1] = (udp_len & 0xFF).astype(np.uint8)

    kern = backend.kernels()
    body = kern.emit_pcap(buf, off, sizes.astype(np.int32),
                          sizes.astype(np.int32), ts)
    path = Path(path)
    with open(path, "wb") as fp:
        fp.write(struct.pack("<IHHiIII", PCAP_MAGIC_US, 2, 4, 0, 0,
                             SNAP_CAP, 1))
        fp.write(body.tobytes())
    return TraceSummary(
        path=path,
        n_packets=n_packets,
        flows=flows,
        mean_size=float(sizes.mean()),
        total_bytes=path.stat().st_size,
        first_ts_us=int(ts[0]),
        last_ts_us=int(ts[-1]),
    )


# --- small labeled directory datasets ---------------------------------------

_SAMPLE_LABELS = ("discord", "google", "snowflake", "facebook",
                  "ssh", "dns", "video", "voip")


def make_sample_dataset(dir_path, n_samples: int = 4,
                        packets_per_sample: int = 50,
                        seed: int = 7) -> Path:
    """Write one small mixed-protocol PCAP per sample plus a Format-A
    metadata CSV; returns the CSV path."""
    from .pcapio import CaptureMeta, RawPacketRecord, write_pcap

    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = ["# traffic_filter,metadata,group_key"]
    ts = 1_650_000_000_000_000
    for s in range(n_samples):
        label = _SAMPLE_LABELS[s % len(_SAMPLE_LABELS)]
        name = f"capture_{label}_{s}.pcap"
        records = []
        for p in range(packets_per_sample):
            payload = rng.bytes(int(rng.integers(6, 400)))
            kind = (s + p) % 3
            src, dst = f"172.16.{s}.1", f"172.16.{s}.2"
            if kind == 0:
                pkt = ether(ipv4(src, dst, PROTO_TCP,
                                 tcp(40000 + p, 443, payload)), 0x0800)
            elif kind == 1:
                pkt = ether(ipv4(src, dst, PROTO_UDP,
                                 udp(40000 + p, 53, payload)), 0x0800)
            else:
                pkt = ether(ipv4(src, dst, PROTO_ICMP,
                                 icmp_echo(payload, reply=p % 2 == 1)), 0x0800)
            ts += int(rng.integers(1, 5000))
            records.append(RawPacketRecord(ts, len(pkt), len(pkt), pkt))
        write_pcap(dir_path / name, CaptureMeta(link_type=1), records)
        lines.append(f"FILE:{name},{label}_{s},")
    csv_path = dir_path / "metadata.csv"
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return csv_path
