"""The labeling pass: match packets against the filter vector and write a
commented PCAPNG.

Directory mode processes one labeled file at a time, so every packet of a
file gets that file's comment without any per-packet lookup. Stream mode
(a single PCAP, or a paced replay standing in for a live interface)
evaluates BPF/timestamp filters per packet, probing the vector starting
from the last matched index and wrapping around once; bursty traffic
amortizes to roughly one probe per packet.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import backend
from .decode import DecodedFields, decode_headers
from .errors import MissingLabeledFile, MixedFilterTypes
from .filters import FileRef, FilterAst, compile_filter_vector, match_filter
from .metadata import LabelSet, format_comment
from .pcapio import (
    CaptureMeta,
    ChunkedPcapReader,
    PcapngWriter,
    probe_format,
    read_pcapng,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DirectorySource:
    path: str | Path


@dataclass(frozen=True)
class SinglePcapSource:
    path: str | Path


@dataclass(frozen=True)
class StreamSource:
    """Replay of a PCAP at a pacing rate, standing in for a live interface."""

    path: str | Path
    rate_mbps: float | None = None


PacketSource = DirectorySource | SinglePcapSource | StreamSource


@dataclass
class EncodeReport:
    packets_read: int = 0
    packets_matched: int = 0
    packets_dropped_unmatched: int = 0
    samples_seen: int = 0
    duration_seconds: float = 0.0
    bytes_written: int = 0
    filter_probes: int = 0

    def summary_line(self) -> str:
        return (
            f"read={self.packets_read} matched={self.packets_matched} "
            f"dropped={self.packets_dropped_unmatched} "
            f"samples={self.samples_seen} seconds={self.duration_seconds:.3f}"
        )


def search_match(filters: list[FilterAst], view, ts_us: int,
                 last_hit: int) -> int | None:
    """Rotated first-match probe: last_hit, last_hit+1, ..., wrap, last_hit-1."""
    n = len(filters)
    if n == 0:
        return None
    if not 0 <= last_hit < n:
        raise ValueError("last_hit out of range")
    for r in range(n):
        f = (last_hit + r) % n
        if match_filter(filters[f], view, ts_us):
            return f
    return None


def _comment_arrays(labels: LabelSet):
    """Per-filter comment bytes, flattened for the emit kernels."""
    comments = [
        format_comment(sid, rec.metadata).encode("utf-8")
        for rec, sid in labels.entries
    ]
    blob = b"".join(comments)
    lens = np.array([len(c) for c in comments], np.int32)
    offs = np.zeros(len(comments), np.int64)
    np.cumsum(lens[:-1], out=offs[1:])
    cblob = (np.frombuffer(blob, np.uint8).copy()
             if blob else np.zeros(0, np.uint8))
    return cblob, offs, lens


def _resolve_labeled_file(dataset_dir: Path, ref_path: str) -> Path | None:
    candidates = [
        dataset_dir / ref_path,
        Path(ref_path),
        dataset_dir / Path(ref_path).name,
    ]
    for cand in candidates:
        if cand.is_file():
            return cand
    return None


def encode_directory(dataset_dir, labels: LabelSet, out_path) -> EncodeReport:
    """Label a directory of captures using FILE filters only."""
    started = time.monotonic()
    dataset_dir = Path(dataset_dir)
    report = EncodeReport()

    resolved: list[tuple[Path, str, int]] = []  # (file, comment, sid)
    for rec, sid in labels.entries:
        if not isinstance(rec.filter, FileRef):
            raise MixedFilterTypes(
                f"metadata line {rec.source_line}: directory mode accepts "
                f"FILE filters only"
            )
        path = _resolve_labeled_file(dataset_dir, rec.filter.path)
        if path is None:
            raise MissingLabeledFile(
                f"metadata line {rec.source_line}: {rec.filter.path!r} not "
                f"found under {dataset_dir}"
            )
        resolved.append((path, format_comment(sid, rec.metadata), sid))

    link_type = None
    for path, _, _ in resolved:
        fmt = probe_format(path)
        if fmt == "pcap":
            link_type = ChunkedPcapReader(path).meta.link_type
            break
        if fmt == "pcapng":
            for _rec, _opts in read_pcapng(path):
                link_type = _rec.link_type
                break
            break
    meta = CaptureMeta(link_type=link_type if link_type is not None else 1)

    kern = backend.kernels()
    sids_written = set()
    labeled_paths = set()
    with PcapngWriter(out_path, meta) as writer:
        for path, comment, sid in resolved:
            labeled_paths.add(path.resolve())
            wrote = 0
            fmt = probe_format(path)
            if fmt == "pcap":
                cbytes = np.frombuffer(comment.encode("utf-8"), np.uint8)
                reader = ChunkedPcapReader(path)
                if reader.meta.link_type != meta.link_type:
                    log.warning("%s: link type %d differs from output %d",
                                path, reader.meta.link_type, meta.link_type)
                for chunk in reader:
                    n = chunk.n
                    blocks = kern.emit_epbs(
                        chunk.buf, chunk.off, chunk.cap, chunk.orig, chunk.ts,
                        np.zeros(n, np.int64),
                        np.full(n, len(cbytes), np.int32),
                        cbytes,
                    )
                    writer.write_raw(blocks)
                    wrote += n
            elif fmt == "pcapng":
                for rec, _opts in read_pcapng(path):
                    writer.write_packet(rec, comment)
                    wrote += 1
            else:
                raise MissingLabeledFile(f"{path} is not a PCAP or PCAPNG file")
            report.packets_read += wrote
            report.packets_matched += wrote
            if wrote:
                sids_written.add(sid)

        # unlabeled capture files count as unmatched, everything else skips
        for path in sorted(dataset_dir.iterdir()):
            if not path.is_file() or path.resolve() in labeled_paths:
                continue
            fmt = probe_format(path)
            if fmt is None:
                log.warning("skipping %s: not a capture file", path)
                continue
            dropped = _count_packets(path, fmt)
            report.packets_read += dropped
            report.packets_dropped_unmatched += dropped

    report.samples_seen = len(sids_written)
    report.bytes_written = _file_size(out_path)
    report.duration_seconds = time.monotonic() - started
    return report


def _count_packets(path, fmt: str) -> int:
    if fmt == "pcap":
        return sum(chunk.n for chunk in ChunkedPcapReader(path))
    return sum(1 for _ in read_pcapng(path))


def _file_size(path) -> int:
    return Path(path).stat().st_size


def encode_stream(source, labels: LabelSet, out_path) -> EncodeReport:
    """Label a packet stream using BPF/timestamp filters only."""
    started = time.monotonic()
    if isinstance(source, (str, Path)):
        source = SinglePcapSource(source)
    rate_mbps = source.rate_mbps if isinstance(source, StreamSource) else None

    asts = []
    for rec, _sid in labels.entries:
        if isinstance(rec.filter, FileRef):
            raise MixedFilterTypes(
                f"metadata line {rec.source_line}: stream mode does not "
                f"accept FILE filters"
            )
        asts.append(rec.filter)
    program = compile_filter_vector(asts)
    cblob, coffs, clens = _comment_arrays(labels)
    sid_of_filter = np.array([sid for _rec, sid in labels.entries], np.int64)

    kern = backend.kernels()
    report = EncodeReport()
    matched_filters = np.zeros(max(len(asts), 1), bool)
    last_hit = 0
    replay_started = time.monotonic()
    bytes_consumed = 0

    reader = ChunkedPcapReader(source.path)
    with PcapngWriter(out_path, reader.meta) as writer:
        for chunk in reader:
            fields = DecodedFields.from_chunk(chunk.buf, chunk.off, chunk.cap,
                                              kern=kern)
            fidx, last_hit, probes = kern.match_chunk(
                program, fields, chunk.ts, last_hit
            )
            report.filter_probes += probes
            hit = fidx >= 0
            n_hit = int(hit.sum())
            report.packets_read += chunk.n
            report.packets_matched += n_hit
            report.packets_dropped_unmatched += chunk.n - n_hit
            if n_hit:
                sel = fidx[hit]
                matched_filters[np.unique(sel)] = True
                blocks = kern.emit_epbs(
                    chunk.buf, chunk.off[hit], chunk.cap[hit],
                    chunk.orig[hit], chunk.ts[hit],
                    coffs[sel], clens[sel], cblob,
                )
                writer.write_raw(blocks)
            if rate_mbps:
                bytes_consumed += chunk.buf.size
                target = bytes_consumed * 8 / (rate_mbps * 1e6)
                lag = target - (time.monotonic() - replay_started)
                if lag > 0:
                    time.sleep(lag)

    if len(asts):
        report.samples_seen = len(
            np.unique(sid_of_filter[matched_filters[:len(asts)]])
        )
    report.bytes_written = _file_size(out_path)
    report.duration_seconds = time.monotonic() - started
    return report
