"""Metadata CSV parsing, sampleID assignment, and the comment codec.

Two CSV layouts are accepted, auto-detected per file:

Format A (directory datasets)::

    # traffic_filter,metadata,group_key
    FILE:dataset/capture_0.pcap,discord,
    BPF:port 443,web,sess1
    TS:1600000000-1600000040,window,

Format B (single-capture / replay datasets)::

    bpf_filter,timestamp_start,timestamp_end,metadata
    ICMP,,,ICMP
    port 22,,,SSH

Lines starting with '#' and blank lines are skipped. Headerless files are
tried as Format A first, then Format B. Timestamps are Unix epoch seconds
with an optional fractional part.

The on-wire comment for a packet is ``<decimal sampleID>,<metadata>``;
decoding splits at the first comma only, so metadata may itself contain
commas.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

from .errors import (
    ColumnCountMismatch,
    DuplicateFileFilter,
    EmptyMetadata,
    LineFilterError,
    FilterSyntaxError,
    MalformedComment,
    MetadataError,
    UnknownFilterPrefix,
)
from .filters import (
    BpfAndTime,
    BpfFilter,
    FileRef,
    FilterAst,
    TimeWindow,
    parse_filter,
)

MICROS_PER_SEC = 1_000_000


@dataclass(frozen=True)
class MetadataRecord:
    filter: FilterAst
    metadata: str
    group_key: str | None
    source_line: int


@dataclass
class LabelSet:
    """Metadata records paired with their assigned sampleIDs."""

    entries: list[tuple[MetadataRecord, int]]

    @property
    def sample_count(self) -> int:
        return max((sid for _, sid in self.entries), default=-1) + 1

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


_TS_RANGE_RE = re.compile(r"^(\d+(?:\.\d+)?)?-(\d+(?:\.\d+)?)?$")
_HEADER_A2 = ["traffic_filter", "metadata"]
_HEADER_A3 = ["traffic_filter", "metadata", "group_key"]
_HEADER_B = ["bpf_filter", "timestamp_start", "timestamp_end", "metadata"]


def epoch_seconds_to_us(text: str) -> int:
    """Exact decimal conversion; fractions beyond microseconds truncate."""
    whole, _, frac = text.partition(".")
    us = int(whole) * MICROS_PER_SEC
    if frac:
        us += int(frac[:6].ljust(6, "0"))
    return us


def _parse_window(start_text: str, end_text: str, line_no: int) -> TimeWindow:
    try:
        start = epoch_seconds_to_us(start_text) if start_text else None
        end = epoch_seconds_to_us(end_text) if end_text else None
        return TimeWindow(start, end)
    except ValueError as exc:
        raise LineFilterError(line_no, f"bad filter: {exc}")


def _parse_bpf(expr: str, line_no: int) -> BpfFilter:
    try:
        return parse_filter(expr)
    except FilterSyntaxError as exc:
        raise LineFilterError(line_no, f"bad filter: {exc}") from exc


def _significant_lines(text: str) -> list[tuple[int, str]]:
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            out.append((i, stripped))
    return out


def _header_kind(line: str) -> str | None:
    cols = [c.strip() for c in line.split(",")]
    if cols in (_HEADER_A2, _HEADER_A3):
        return "A"
    if len(cols) >= 4:
        # tolerate a trailing inline comment after the last header column
        cols = cols[:4]
        cols[3] = cols[3].split("#")[0].strip()
        if cols == _HEADER_B:
            return "B"
    return None


def _parse_line_a(line_no: int, line: str, seen_files: dict) -> MetadataRecord:
    cols = line.split(",")
    if len(cols) not in (2, 3):
        raise ColumnCountMismatch(
            line_no, f"expected 2 or 3 columns, got {len(cols)}"
        )
    traffic_filter = cols[0].strip()
    metadata = cols[1].strip()
    group_key = cols[2].strip() if len(cols) == 3 else ""
    if not metadata:
        raise EmptyMetadata(line_no, "metadata column is empty")

    prefix, _, rest = traffic_filter.partition(":")
    rest = rest.strip()
    if prefix == "FILE" and rest:
        key = os.path.normpath(rest)
        if key in seen_files:
            raise DuplicateFileFilter(
                line_no,
                f"file {rest!r} already labeled on line {seen_files[key]}",
            )
        seen_files[key] = line_no
        ast: FilterAst = FileRef(rest)
    elif prefix == "BPF" and rest:
        ast = _parse_bpf(rest, line_no)
    elif prefix == "TS" and rest:
        m = _TS_RANGE_RE.match(rest)
        if not m or (not m.group(1) and not m.group(2)):
            raise LineFilterError(
                line_no, f"bad filter: expected TS:<start>-<end>, got {rest!r}"
            )
        ast = _parse_window(m.group(1) or "", m.group(2) or "", line_no)
    else:
        raise UnknownFilterPrefix(
            line_no,
            f"traffic_filter must start with FILE:, BPF:, or TS: (got {traffic_filter!r})",
        )
    return MetadataRecord(ast, metadata, group_key or None, line_no)


def _parse_line_b(line_no: int, line: str) -> MetadataRecord:
    cols = line.split(",", 3)
    if len(cols) != 4:
        raise ColumnCountMismatch(
            line_no, f"expected 4 columns, got {len(cols)}"
        )
    bpf_text = cols[0].strip()
    start_text = cols[1].strip()
    end_text = cols[2].strip()
    metadata = cols[3].strip()
    if not metadata:
        raise EmptyMetadata(line_no, "metadata column is empty")
    bpf = _parse_bpf(bpf_text, line_no) if bpf_text else None
    window = (_parse_window(start_text, end_text, line_no)
              if (start_text or end_text) else None)
    if bpf and window:
        ast: FilterAst = BpfAndTime(bpf, window)
    elif bpf:
        ast = bpf
    elif window:
        ast = window
    else:
        raise LineFilterError(line_no, "line defines neither a BPF "
                               "filter nor a timestamp window")
    return MetadataRecord(ast, metadata, None, line_no)


def parse_metadata_file(text: str) -> list[MetadataRecord]:
    """Parse metadata CSV content (either format, auto-detected)."""
    lines = _significant_lines(text)
    if not lines:
        return []
    # the header may itself be a comment line ("# traffic_filter,...")
    kind = None
    for raw in text.splitlines():
        stripped = raw.strip()
        if stripped:
            kind = _header_kind(stripped.lstrip("#").strip())
            break
    if kind:
        if _header_kind(lines[0][1]) == kind:
            lines = lines[1:]
        return _parse_body(lines, kind)
    try:
        return _parse_body(lines, "A")
    except MetadataError as err_a:
        try:
            return _parse_body(lines, "B")
        except MetadataError as err_b:
            # report the format whose shape the first line resembles most
            first_cols = len(lines[0][1].split(","))
            raise (err_b if first_cols >= 4 else err_a)


def _parse_body(lines: list[tuple[int, str]], kind: str) -> list[MetadataRecord]:
    records = []
    seen_files: dict = {}
    for line_no, line in lines:
        if kind == "A":
            records.append(_parse_line_a(line_no, line, seen_files))
        else:
            records.append(_parse_line_b(line_no, line))
    return records


def assign_sample_ids(records: list[MetadataRecord]) -> LabelSet:
    """Sequential ids from zero in first-appearance order; shared group_keys
    share one id."""
    entries = []
    by_group: dict[str, int] = {}
    next_id = 0
    for rec in records:
        if rec.group_key is not None and rec.group_key in by_group:
            sid = by_group[rec.group_key]
        else:
            sid = next_id
            next_id += 1
            if rec.group_key is not None:
                by_group[rec.group_key] = sid
        entries.append((rec, sid))
    return LabelSet(entries)


def format_comment(sample_id: int, metadata: str) -> str:
    """`<decimal id>,<metadata>` -- the packet comment encoding."""
    if sample_id < 0:
        raise ValueError("sampleID must be non-negative")
    if "\n" in metadata or "\r" in metadata:
        raise ValueError("metadata must not contain newlines")
    return f"{sample_id},{metadata}"


_COMMENT_RE = re.compile(r"^([0-9]+),(.*)$", re.DOTALL)


def parse_comment(text: str) -> tuple[int, str]:
    """Split a comment at the first comma; the rest is metadata verbatim."""
    m = _COMMENT_RE.match(text)
    if not m:
        raise MalformedComment(
            f"expected '<decimal id>,<metadata>', got {text!r}"
        )
    return int(m.group(1)), m.group(2)
