"""Best-effort decoding of the header fields the filter engine inspects.

Ethernet (with one optional VLAN tag), IPv4/IPv6, TCP/UDP ports. Decoding
never raises: truncated or malformed packets yield views with the
undecodable fields absent (None). Nothing past the captured bytes is read.

``decode_headers`` is the scalar reference; ``DecodedFields`` holds the
same information as flat arrays for whole chunks, produced by the active
backend kernel. The two must always agree (fuzz-tested).
"""

from __future__ import annotations

from dataclasses import dataclass
from ipaddress import IPv4Address, IPv6Address

import numpy as np

from . import backend

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD
ETHERTYPE_VLAN = 0x8100

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17

LINKTYPE_ETHERNET = 1


@dataclass(frozen=True, slots=True)
class HeaderView:
    """Decoded header fields; None marks a field the capture didn't show."""

    ether_type: int | None = None
    src_ip: IPv4Address | IPv6Address | None = None
    dst_ip: IPv4Address | IPv6Address | None = None
    ip_proto: int | None = None
    src_port: int | None = None
    dst_port: int | None = None
    is_fragment_continuation: bool = False


_EMPTY_VIEW = HeaderView()


def decode_headers(data: bytes, link_type: int = LINKTYPE_ETHERNET) -> HeaderView:
    """Decode one packet. Non-Ethernet link types yield an all-absent view."""
    if link_type != LINKTYPE_ETHERNET:
        return _EMPTY_VIEW
    ln = len(data)
    if ln < 14:
        return _EMPTY_VIEW
    et = (data[12] << 8) | data[13]
    hl = 14
    if et == ETHERTYPE_VLAN:
        if ln < 18:
            return _EMPTY_VIEW  # inner type unknowable
        et = (data[16] << 8) | data[17]
        hl = 18
    if et == ETHERTYPE_IPV4:
        return _decode_ipv4(data, ln, hl, et)
    if et == ETHERTYPE_IPV6:
        return _decode_ipv6(data, ln, hl, et)
    return HeaderView(ether_type=et)


def _decode_ipv4(data: bytes, ln: int, hl: int, et: int) -> HeaderView:
    if ln < hl + 1:
        return HeaderView(ether_type=et)
    vi = data[hl]
    ihl = vi & 0x0F
    if (vi >> 4) != 4 or ihl < 5:
        return HeaderView(ether_type=et)
    frag_known = ln >= hl + 8
    frag_cont = frag_known and (((data[hl + 6] & 0x1F) << 8) | data[hl + 7]) > 0
    proto = data[hl + 9] if ln >= hl + 10 else None
    src = IPv4Address(data[hl + 12:hl + 16]) if ln >= hl + 16 else None
    dst = IPv4Address(data[hl + 16:hl + 20]) if ln >= hl + 20 else None
    sport = dport = None
    if frag_known and not frag_cont and proto in (PROTO_TCP, PROTO_UDP):
        t = hl + ihl * 4
        if ln >= t + 4:
            sport = (data[t] << 8) | data[t + 1]
            dport = (data[t + 2] << 8) | data[t + 3]
    return HeaderView(et, src, dst, proto, sport, dport, frag_cont)


def _decode_ipv6(data: bytes, ln: int, hl: int, et: int) -> HeaderView:
    if ln < hl + 1 or (data[hl] >> 4) != 6:
        return HeaderView(ether_type=et)
    proto = data[hl + 6] if ln >= hl + 7 else None
    src = IPv6Address(data[hl + 8:hl + 24]) if ln >= hl + 24 else None
    dst = IPv6Address(data[hl + 24:hl + 40]) if ln >= hl + 40 else None
    sport = dport = None
    if proto in (PROTO_TCP, PROTO_UDP) and ln >= hl + 44:
        t = hl + 40
        sport = (data[t] << 8) | data[t + 1]
        dport = (data[t + 2] << 8) | data[t + 3]
    return HeaderView(et, src, dst, proto, sport, dport, False)


@dataclass
class DecodedFields:
    """Per-chunk header fields as flat arrays; -1 marks absent values."""

    ethertype: np.ndarray   # int32
    src4: np.ndarray        # int64, IPv4 address as integer
    dst4: np.ndarray        # int64
    src6: np.ndarray        # (n, 16) uint8
    dst6: np.ndarray        # (n, 16) uint8
    src6ok: np.ndarray      # bool
    dst6ok: np.ndarray      # bool
    proto: np.ndarray       # int16
    sport: np.ndarray       # int32
    dport: np.ndarray       # int32
    frag: np.ndarray        # bool

    @classmethod
    def from_chunk(cls, buf: np.ndarray, off: np.ndarray, cap: np.ndarray,
                   kern=None) -> "DecodedFields":
        kern = kern or backend.kernels()
        return cls(*kern.decode_chunk(buf, off, cap))

    @property
    def n(self) -> int:
        return len(self.ethertype)

    def view(self, i: int) -> HeaderView:
        """Rebuild the scalar HeaderView for packet i (test bridge)."""
        src = dst = None
        if self.src4[i] >= 0:
            src = IPv4Address(int(self.src4[i]))
        elif self.src6ok[i]:
            src = IPv6Address(self.src6[i].tobytes())
        if self.dst4[i] >= 0:
            dst = IPv4Address(int(self.dst4[i]))
        elif self.dst6ok[i]:
            dst = IPv6Address(self.dst6[i].tobytes())
        return HeaderView(
            ether_type=int(self.ethertype[i]) if self.ethertype[i] >= 0 else None,
            src_ip=src,
            dst_ip=dst,
            ip_proto=int(self.proto[i]) if self.proto[i] >= 0 else None,
            src_port=int(self.sport[i]) if self.sport[i] >= 0 else None,
            dst_port=int(self.dport[i]) if self.dport[i] >= 0 else None,
            is_fragment_continuation=bool(self.frag[i]),
        )
