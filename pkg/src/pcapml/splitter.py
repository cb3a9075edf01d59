"""Reverse mode: explode an encoded PCAPNG back into plain PCAPs.

One PCAP per traffic sample, named ``<sampleID>-<sanitized metadata>.pcap``,
plus a ``metadata.csv`` mapping every output file. Works on unsorted input:
samples need not be contiguous. At most 128 output files are kept open;
colder ones are closed and reopened in append mode.

``strip_metadata`` drops the comments entirely, producing a single plain
PCAP (used to measure the disk overhead of the encoding).
"""

from __future__ import annotations

import re
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

from .errors import MalformedComment, MetadataCollision
from .metadata import parse_comment
from .pcapio import PcapWriter, extract_comment, read_pcapng

MAX_OPEN_FILES = 128
_SANITIZE_RE = re.compile(r"[^A-Za-z0-9._-]")
METADATA_CSV_NAME = "metadata.csv"
METADATA_CSV_HEADER = "pcap_file,sampleid,metadata"


def sanitize_metadata(metadata: str) -> str:
    return _SANITIZE_RE.sub("_", metadata)[:128]


@dataclass
class _Sample:
    sid: int
    metadata: str
    filename: str
    path: Path
    started: bool = False  # global header written
    packets: int = 0


class _WriterCache:
    """LRU cache of open PcapWriters, reopening in append mode on miss."""

    def __init__(self, limit: int = MAX_OPEN_FILES):
        self.limit = limit
        self.open: OrderedDict[int, PcapWriter] = OrderedDict()

    def get(self, sample: _Sample, link_type: int) -> PcapWriter:
        writer = self.open.get(sample.sid)
        if writer is not None:
            self.open.move_to_end(sample.sid)
            return writer
        if len(self.open) >= self.limit:
            _sid, cold = self.open.popitem(last=False)
            cold.close()
        writer = PcapWriter(sample.path, link_type=link_type,
                            write_header=not sample.started,
                            append=sample.started)
        sample.started = True
        self.open[sample.sid] = writer
        return writer

    def close_all(self):
        for writer in self.open.values():
            writer.close()
        self.open.clear()


def split_pcapng(in_path, out_dir) -> list[tuple[Path, int, str]]:
    """Write one PCAP per sample plus metadata.csv; returns the mapping in
    first-appearance order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reader = read_pcapng(in_path)
    samples: dict[int, _Sample] = {}
    order: list[int] = []
    names: dict[str, int] = {}
    cache = _WriterCache()
    try:
        for rec, options in reader:
            comment = extract_comment(options)
            if comment is None:
                raise MalformedComment(
                    f"packet block at byte offset {reader.last_offset} "
                    f"has no comment"
                )
            try:
                sid, metadata = parse_comment(comment)
            except MalformedComment as exc:
                raise MalformedComment(
                    f"packet block at byte offset {reader.last_offset}: {exc}"
                ) from exc
            sample = samples.get(sid)
            if sample is None:
                filename = f"{sid}-{sanitize_metadata(metadata)}.pcap"
                other = names.get(filename)
                if other is not None:
                    raise MetadataCollision(
                        f"samples {other} and {sid} both map to {filename!r}"
                    )
                names[filename] = sid
                sample = _Sample(sid, metadata, filename, out_dir / filename)
                samples[sid] = sample
                order.append(sid)
            cache.get(sample, rec.link_type).write_record(rec)
            sample.packets += 1
    finally:
        cache.close_all()

    csv_path = out_dir / METADATA_CSV_NAME
    with open(csv_path, "w", encoding="utf-8") as fp:
        fp.write(METADATA_CSV_HEADER + "\n")
        for sid in order:
            sample = samples[sid]
            fp.write(f"{sample.filename},{sid},{sample.metadata}\n")

    return [(samples[sid].path, sid, samples[sid].metadata) for sid in order]


def strip_metadata(in_path, out_path) -> tuple[int, int]:
    """Rewrite an encoded PCAPNG as a plain PCAP; returns (in_bytes, out_bytes)."""
    reader = read_pcapng(in_path)
    writer = None
    try:
        for rec, _options in reader:
            if writer is None:
                writer = PcapWriter(out_path, link_type=rec.link_type)
            writer.write_record(rec)
        if writer is None:
            link = reader.meta.link_type if reader.meta else 1
            writer = PcapWriter(out_path, link_type=link)
    finally:
        if writer is not None:
            writer.close()
    return Path(in_path).stat().st_size, Path(out_path).stat().st_size
