"""Re-order an encoded PCAPNG by (sampleID, timestamp, input index).

Buffered records are spilled to sorted temporary runs whenever the memory
budget fills, then merged with heapq, so inputs larger than memory
succeed. The budget counts buffered packet+comment bytes plus a small
per-record overhead; it can be set per call, via the PCAPML_MEM_BUDGET
environment variable (bytes), or left at the 512 MiB default.
"""

from __future__ import annotations

import heapq
import os
import struct
import tempfile

from .errors import MalformedComment
from .metadata import parse_comment
from .pcapio import (
    CaptureMeta,
    PcapngWriter,
    RawPacketRecord,
    extract_comment,
    read_pcapng,
)

DEFAULT_MEM_BUDGET = 512 << 20
_PER_RECORD_OVERHEAD = 96

_FRAME = struct.Struct("<QqQIIII")  # sid, ts, index, cap, orig, clen, link


def _mem_budget(explicit: int | None) -> int:
    if explicit is not None:
        return explicit
    env = os.environ.get("PCAPML_MEM_BUDGET")
    if env:
        return int(env)
    return DEFAULT_MEM_BUDGET


def _spill(run: list, tmpdir) -> object:
    run.sort(key=lambda e: e[0])
    fp = tempfile.TemporaryFile(dir=tmpdir)
    for _key, rec, comment in run:
        cbytes = comment.encode("utf-8")
        sid, ts, idx = _key
        fp.write(_FRAME.pack(sid, ts, idx, rec.captured_length,
                             rec.original_length, len(cbytes), rec.link_type))
        fp.write(cbytes)
        fp.write(rec.data)
    fp.seek(0)
    return fp


def _read_run(fp):
    while True:
        head = fp.read(_FRAME.size)
        if not head:
            break
        sid, ts, idx, cap, orig, clen, link = _FRAME.unpack(head)
        comment = fp.read(clen).decode("utf-8")
        data = fp.read(cap)
        rec = RawPacketRecord(ts, cap, orig, data, link)
        yield (sid, ts, idx), rec, comment


class PcapngSorter:
    """One-shot sorter; exposes spill statistics after ``sort``."""

    def __init__(self, mem_budget: int | None = None, tmpdir=None):
        self.mem_budget = _mem_budget(mem_budget)
        self.tmpdir = tmpdir
        self.packets = 0
        self.runs_spilled = 0

    def sort(self, in_path, out_path) -> int:
        reader = read_pcapng(in_path)
        runs = []
        buffered: list = []
        cost = 0
        for idx, (rec, options) in enumerate(reader):
            comment = extract_comment(options)
            if comment is None:
                raise MalformedComment(
                    f"packet block at byte offset {reader.last_offset} "
                    f"has no comment"
                )
            try:
                sid, _meta = parse_comment(comment)
            except MalformedComment as exc:
                raise MalformedComment(
                    f"packet block at byte offset {reader.last_offset}: {exc}"
                ) from exc
            buffered.append(((sid, rec.timestamp_us, idx), rec, comment))
            cost += (rec.captured_length + len(comment)
                     + _PER_RECORD_OVERHEAD)
            if cost > self.mem_budget:
                runs.append(_spill(buffered, self.tmpdir))
                self.runs_spilled += 1
                buffered = []
                cost = 0
        meta = reader.meta or CaptureMeta()

        if runs:
            if buffered:
                runs.append(_spill(buffered, self.tmpdir))
                self.runs_spilled += 1
                buffered = []
            streams = [_read_run(fp) for fp in runs]
            merged = heapq.merge(*streams, key=lambda e: e[0])
        else:
            buffered.sort(key=lambda e: e[0])
            merged = iter(buffered)

        count = 0
        with PcapngWriter(out_path, meta) as writer:
            for _key, rec, comment in merged:
                writer.write_packet(rec, comment)
                count += 1
        for fp in runs:
            fp.close()
        self.packets = count
        return count


def sort_pcapng(in_path, out_path, mem_budget: int | None = None) -> int:
    """Sort an encoded capture; returns the number of packets written."""
    return PcapngSorter(mem_budget=mem_budget).sort(in_path, out_path)
