"""Bit-exact readers and writers for PCAP and PCAPNG capture files.

Two access levels:

* record level -- ``read_pcap`` / ``read_pcapng`` yield one object per
  packet, ``PcapWriter`` / ``PcapngWriter`` emit one packet per call.
* chunk level -- ``ChunkedPcapReader`` yields arrays covering thousands
  of packets at a time, scanned by the active backend kernel. The
  labeling pipeline runs on chunks; everything else uses records.

All writing is little-endian. Readers accept either byte order.
Timestamps are integer microseconds since the Unix epoch everywhere;
nanosecond inputs truncate.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import backend
from .errors import (
    BadMagic,
    BlockLengthMismatch,
    InterfaceIdOutOfRange,
    MalformedComment,
    OversizedRecord,
    TruncatedRecord,
)

LINKTYPE_ETHERNET = 1

# Sanity cap on captured_length; bounds memory when scanning corrupt files.
SNAP_CAP = 262144

PCAP_MAGIC_US = 0xA1B2C3D4
PCAP_MAGIC_NS = 0xA1B23C4D

SHB_TYPE = 0x0A0D0D0A
IDB_TYPE = 0x00000001
EPB_TYPE = 0x00000006
BYTE_ORDER_MAGIC = 0x1A2B3C4D

OPT_ENDOFOPT = 0
OPT_COMMENT = 1
OPT_IF_TSRESOL = 9

MICROS_PER_SEC = 1_000_000

_DEFAULT_CHUNK_BYTES = 8 << 20


def pad4(n: int) -> int:
    """Round a byte count up to a multiple of 4."""
    return (n + 3) & ~3


@dataclass(frozen=True, slots=True)
class RawPacketRecord:
    """One captured packet. Timestamp is integer microseconds."""

    timestamp_us: int
    captured_length: int
    original_length: int
    data: bytes
    link_type: int = LINKTYPE_ETHERNET

    def __post_init__(self):
        if self.captured_length != len(self.data):
            raise ValueError("captured_length != len(data)")
        if self.captured_length > self.original_length:
            raise ValueError("captured_length > original_length")
        if self.timestamp_us < 0:
            raise ValueError("negative timestamp")

    @property
    def timestamp_seconds(self) -> float:
        return self.timestamp_us / MICROS_PER_SEC


@dataclass(frozen=True, slots=True)
class PcapngOption:
    """One code/value pair from a PCAPNG options area."""

    code: int
    value: bytes

    @property
    def length(self) -> int:
        return len(self.value)

    def wire_size(self) -> int:
        return 4 + pad4(len(self.value))


@dataclass(frozen=True, slots=True)
class CaptureMeta:
    link_type: int = LINKTYPE_ETHERNET
    timestamp_resolution: int = MICROS_PER_SEC
    byte_order: str = "little"


@dataclass
class PacketChunk:
    """Arrays describing consecutive packets inside one backing buffer."""

    buf: np.ndarray        # uint8, the raw chunk
    ts: np.ndarray         # int64, microseconds
    cap: np.ndarray        # int32, captured lengths
    orig: np.ndarray       # int32, original lengths
    off: np.ndarray        # int64, offset of each packet's data in buf
    base_offset: int = 0   # absolute file offset of buf[0]

    @property
    def n(self) -> int:
        return len(self.off)

    def packet_bytes(self, i: int) -> bytes:
        o = int(self.off[i])
        return self.buf[o:o + int(self.cap[i])].tobytes()


def _open_source(source) -> tuple[io.BufferedIOBase, bool]:
    """Accept a path, bytes, or binary file object. Returns (fp, owned)."""
    if isinstance(source, (str, Path)):
        return open(source, "rb"), True
    if isinstance(source, (bytes, bytearray, memoryview)):
        return io.BytesIO(bytes(source)), True
    return source, False


def _open_sink(sink, append: bool = False) -> tuple[io.BufferedIOBase, bool]:
    if isinstance(sink, (str, Path)):
        return open(sink, "ab" if append else "wb"), True
    return sink, False


def probe_format(path) -> str | None:
    """Sniff a file's capture format from its magic: 'pcap', 'pcapng', or None."""
    try:
        with open(path, "rb") as fp:
            head = fp.read(4)
    except OSError:
        return None
    if len(head) < 4:
        return None
    le = struct.unpack("<I", head)[0]
    be = struct.unpack(">I", head)[0]
    if le == SHB_TYPE:
        return "pcapng"
    if le in (PCAP_MAGIC_US, PCAP_MAGIC_NS) or be in (PCAP_MAGIC_US, PCAP_MAGIC_NS):
        return "pcap"
    return None


# ---------------------------------------------------------------------------
# PCAP reading
# ---------------------------------------------------------------------------

def _parse_pcap_header(head: bytes):
    """Returns (big_endian, nanosecond, snaplen, link_type)."""
    if len(head) < 24:
        raise BadMagic("file shorter than a PCAP global header")
    magic_le = struct.unpack("<I", head[:4])[0]
    magic_be = struct.unpack(">I", head[:4])[0]
    if magic_le == PCAP_MAGIC_US:
        big, ns = False, False
    elif magic_le == PCAP_MAGIC_NS:
        big, ns = False, True
    elif magic_be == PCAP_MAGIC_US:
        big, ns = True, False
    elif magic_be == PCAP_MAGIC_NS:
        big, ns = True, True
    else:
        raise BadMagic(f"not a PCAP file (magic {head[:4].hex()})")
    order = ">" if big else "<"
    _, _, _, _, snaplen, link_type = struct.unpack(order + "HHiIII", head[4:24])
    return big, ns, snaplen, link_type


class ChunkedPcapReader:
    """Scan a PCAP into PacketChunk arrays using the active backend."""

    def __init__(self, source, chunk_bytes: int = _DEFAULT_CHUNK_BYTES):
        self._fp, self._owned = _open_source(source)
        self._chunk_bytes = chunk_bytes
        head = self._fp.read(24)
        self._big, self._ns, snaplen, link_type = _parse_pcap_header(head)
        self.meta = CaptureMeta(link_type=link_type)

    def __iter__(self):
        kern = backend.kernels()
        leftover = b""
        base = 24
        try:
            while True:
                data = self._fp.read(self._chunk_bytes)
                at_eof = not data
                if leftover:
                    data = leftover + data
                if not data:
                    break
                buf = np.frombuffer(data, dtype=np.uint8)
                n, new_pos, ts, cap, orig, off, err_off = kern.scan_pcap(
                    buf, self._big, self._ns, SNAP_CAP
                )
                if err_off >= 0:
                    claimed = int(
                        struct.unpack_from(
                            (">" if self._big else "<") + "I", data, err_off + 8
                        )[0]
                    )
                    raise OversizedRecord(base + err_off, claimed, SNAP_CAP)
                if n:
                    yield PacketChunk(buf, ts, cap, orig, off, base_offset=base)
                leftover = data[new_pos:]
                base += new_pos
                if at_eof:
                    if leftover:
                        raise TruncatedRecord(base)
                    break
        finally:
            if self._owned:
                self._fp.close()


class PcapReader:
    """Lazy record-level PCAP reader; iterates RawPacketRecord."""

    def __init__(self, source, chunk_bytes: int = _DEFAULT_CHUNK_BYTES):
        self._chunked = ChunkedPcapReader(source, chunk_bytes)
        self.meta = self._chunked.meta

    def __iter__(self):
        link = self.meta.link_type
        for chunk in self._chunked:
            ts, cap, orig = chunk.ts, chunk.cap, chunk.orig
            for i in range(chunk.n):
                c = int(cap[i])
                o = int(orig[i])
                yield RawPacketRecord(
                    timestamp_us=int(ts[i]),
                    captured_length=c,
                    original_length=max(o, c),
                    data=chunk.packet_bytes(i),
                    link_type=link,
                )


def read_pcap(source, chunk_bytes: int = _DEFAULT_CHUNK_BYTES) -> PcapReader:
    return PcapReader(source, chunk_bytes)


# ---------------------------------------------------------------------------
# PCAPNG reading
# ---------------------------------------------------------------------------

class PcapngReader:
    """Lazy PCAPNG reader; iterates (RawPacketRecord, [PcapngOption]).

    ``last_offset`` holds the absolute byte offset of the most recently
    yielded packet block, for error reporting by callers.
    """

    def __init__(self, source):
        self._fp, self._owned = _open_source(source)
        self.meta: CaptureMeta | None = None
        self.last_offset = -1
        head = self._fp.read(8)
        if len(head) < 8 or struct.unpack("<I", head[:4])[0] != SHB_TYPE:
            raise BadMagic("not a PCAPNG file (no Section Header Block)")
        self._pending = head

    def _read_exact(self, n: int, offset: int, what: str) -> bytes:
        buf = self._fp.read(n)
        if len(buf) != n:
            raise TruncatedRecord(offset, f"EOF inside {what}")
        return buf

    def __iter__(self):
        order = "<"
        interfaces: list[tuple[int, int]] = []  # (link_type, ticks_per_second)
        offset = 0
        try:
            while True:
                if self._pending is not None:
                    head = self._pending
                    self._pending = None
                else:
                    head = self._fp.read(8)
                if not head:
                    break
                if len(head) < 8:
                    raise TruncatedRecord(offset, "EOF inside block header")
                btype = struct.unpack(order + "I", head[:4])[0]
                if btype == SHB_TYPE:
                    # Body starts with the byte-order magic; it decides how
                    # to read this block's own length field.
                    bom_raw = self._read_exact(4, offset, "section header")
                    if struct.unpack("<I", bom_raw)[0] == BYTE_ORDER_MAGIC:
                        order = "<"
                    elif struct.unpack(">I", bom_raw)[0] == BYTE_ORDER_MAGIC:
                        order = ">"
                    else:
                        raise BadMagic("bad byte-order magic in Section Header Block")
                    blen = struct.unpack(order + "I", head[4:8])[0]
                    if blen < 28 or blen % 4:
                        raise TruncatedRecord(offset, f"impossible block length {blen}")
                    rest = self._read_exact(blen - 12, offset, "section header")
                    trailing = struct.unpack(order + "I", rest[-4:])[0]
                    if trailing != blen:
                        raise BlockLengthMismatch(offset, blen, trailing)
                    interfaces = []
                    offset += blen
                    continue

                blen = struct.unpack(order + "I", head[4:8])[0]
                if blen < 12 or blen % 4:
                    raise TruncatedRecord(offset, f"impossible block length {blen}")
                body = self._read_exact(blen - 12, offset, "block body")
                trailing = struct.unpack(
                    order + "I", self._read_exact(4, offset, "trailing length")
                )[0]
                if trailing != blen:
                    raise BlockLengthMismatch(offset, blen, trailing)

                if btype == IDB_TYPE:
                    if len(body) < 8:
                        raise TruncatedRecord(offset, "short Interface Description Block")
                    link_type = struct.unpack_from(order + "H", body, 0)[0]
                    ticks = MICROS_PER_SEC
                    for opt in self._iter_options(order, body[8:], offset):
                        if opt.code == OPT_IF_TSRESOL and opt.value:
                            v = opt.value[0]
                            ticks = 2 ** (v & 0x7F) if v & 0x80 else 10 ** v
                    interfaces.append((link_type, ticks))
                    if self.meta is None:
                        self.meta = CaptureMeta(link_type=link_type)
                elif btype == EPB_TYPE:
                    if len(body) < 20:
                        raise TruncatedRecord(offset, "short Enhanced Packet Block")
                    iface, ts_hi, ts_lo, cap, orig = struct.unpack_from(
                        order + "IIIII", body, 0
                    )
                    if iface >= len(interfaces):
                        raise InterfaceIdOutOfRange(
                            f"EPB at byte offset {offset} references interface "
                            f"{iface}; only {len(interfaces)} described"
                        )
                    if 20 + cap > len(body):
                        raise TruncatedRecord(offset, "packet data overruns block")
                    link_type, ticks = interfaces[iface]
                    raw_ts = (ts_hi << 32) | ts_lo
                    ts_us = raw_ts * MICROS_PER_SEC // ticks
                    data = body[20:20 + cap]
                    options = list(
                        self._iter_options(order, body[20 + pad4(cap):], offset)
                    )
                    self.last_offset = offset
                    record = RawPacketRecord(
                        timestamp_us=ts_us,
                        captured_length=cap,
                        original_length=max(orig, cap),
                        data=data,
                        link_type=link_type,
                    )
                    yield record, options
                # all other block types are skipped silently
                offset += blen
        finally:
            if self._owned:
                self._fp.close()

    @staticmethod
    def _iter_options(order: str, region: bytes, block_offset: int):
        pos = 0
        end = len(region)
        while pos + 4 <= end:
            code, length = struct.unpack_from(order + "HH", region, pos)
            pos += 4
            if code == OPT_ENDOFOPT:
                return
            if pos + length > end:
                raise TruncatedRecord(block_offset, "option value overruns block")
            yield PcapngOption(code, region[pos:pos + length])
            pos += pad4(length)


def read_pcapng(source) -> PcapngReader:
    return PcapngReader(source)


def extract_comment(options: list[PcapngOption]) -> str | None:
    """First opt_comment in an options list, decoded as UTF-8."""
    for opt in options:
        if opt.code == OPT_COMMENT:
            try:
                return opt.value.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise MalformedComment(f"opt_comment is not valid UTF-8: {exc}")
    return None


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------

class PcapWriter:
    """Streaming legacy-PCAP writer (little-endian, microsecond magic).

    ``write_header=False`` appends records to a sink whose global header
    was already written (the splitter reopens cold files this way).
    """

    def __init__(self, sink, link_type: int = LINKTYPE_ETHERNET,
                 snaplen: int = SNAP_CAP, write_header: bool = True,
                 append: bool = False):
        self._fp, self._owned = _open_sink(sink, append=append)
        self.bytes_written = 0
        if write_header:
            self._write(struct.pack(
                "<IHHiIII", PCAP_MAGIC_US, 2, 4, 0, 0, snaplen, link_type
            ))

    def _write(self, data: bytes):
        self._fp.write(data)
        self.bytes_written += len(data)

    def write_record(self, rec: RawPacketRecord):
        sec, usec = divmod(rec.timestamp_us, MICROS_PER_SEC)
        self._write(struct.pack(
            "<IIII", sec, usec, rec.captured_length, rec.original_length
        ))
        self._write(rec.data)

    def write_chunk(self, chunk: PacketChunk):
        """Re-frame a scanned chunk without building per-packet objects."""
        out = backend.kernels().emit_pcap(
            chunk.buf, chunk.off, chunk.cap, chunk.orig, chunk.ts
        )
        self._write(out.tobytes())

    def close(self):
        if self._owned:
            self._fp.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def shb_bytes() -> bytes:
    return struct.pack(
        "<IIIHHqI", SHB_TYPE, 28, BYTE_ORDER_MAGIC, 1, 0, -1, 28
    )


def idb_bytes(link_type: int) -> bytes:
    # No options: if_tsresol omitted implies 10^-6 ticks.
    return struct.pack("<IIHHII", IDB_TYPE, 20, link_type, 0, 0, 20)


def epb_bytes(rec: RawPacketRecord, comment: str | None) -> bytes:
    data_padded = rec.data + b"\x00" * (pad4(rec.captured_length) - rec.captured_length)
    if comment is not None:
        cval = comment.encode("utf-8")
        opts = (
            struct.pack("<HH", OPT_COMMENT, len(cval))
            + cval + b"\x00" * (pad4(len(cval)) - len(cval))
            + struct.pack("<HH", OPT_ENDOFOPT, 0)
        )
    else:
        opts = b""
    total = 32 + len(data_padded) + len(opts)
    ts = rec.timestamp_us
    return (
        struct.pack(
            "<IIIIIII", EPB_TYPE, total, 0,
            (ts >> 32) & 0xFFFFFFFF, ts & 0xFFFFFFFF,
            rec.captured_length, rec.original_length,
        )
        + data_padded + opts + struct.pack("<I", total)
    )


class PcapngWriter:
    """Streaming PCAPNG writer: one SHB, one IDB, then one EPB per packet."""

    def __init__(self, sink, meta: CaptureMeta):
        self._fp, self._owned = _open_sink(sink)
        self.meta = meta
        self.bytes_written = 0
        self._write(shb_bytes())
        self._write(idb_bytes(meta.link_type))

    def _write(self, data: bytes):
        self._fp.write(data)
        self.bytes_written += len(data)

    def write_packet(self, rec: RawPacketRecord, comment: str | None = None):
        self._write(epb_bytes(rec, comment))

    def write_raw(self, blocks: bytes | np.ndarray):
        """Append pre-serialized blocks produced by an emit kernel."""
        if isinstance(blocks, np.ndarray):
            blocks = blocks.tobytes()
        self._write(blocks)

    def close(self):
        if self._owned:
            self._fp.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_pcap(sink, meta: CaptureMeta, records) -> int:
    w = PcapWriter(sink, link_type=meta.link_type)
    try:
        for rec in records:
            w.write_record(rec)
    finally:
        w.close()
    return w.bytes_written


def write_pcapng(sink, meta: CaptureMeta, entries) -> int:
    """Entries are (record, comment-or-None) pairs."""
    w = PcapngWriter(sink, meta)
    try:
        for rec, comment in entries:
            w.write_packet(rec, comment)
    finally:
        w.close()
    return w.bytes_written
