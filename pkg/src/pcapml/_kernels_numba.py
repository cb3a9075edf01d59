"""Numba-jitted hot loops.

Semantics must stay identical to ``_kernels_numpy``; the backend equality
tests drive both over the same traffic.
"""

import numpy as np
from numba import njit

from ._ops import (
    DIR_DST,
    DIR_SRC,
    MAX_STACK,
    OP_AND,
    OP_ETHER,
    OP_HOST4,
    OP_HOST6,
    OP_NET4,
    OP_NET6,
    OP_NOT,
    OP_OR,
    OP_PORT,
    OP_PROTO,
    OP_TIME,
)

NAME = "numba"

_JIT = dict(cache=True, nogil=True)


@njit(inline="always")
def _u16be(buf, i):
    return (np.int64(buf[i]) << 8) | np.int64(buf[i + 1])


@njit(inline="always")
def _u32le(buf, i):
    return (
        np.int64(buf[i])
        | (np.int64(buf[i + 1]) << 8)
        | (np.int64(buf[i + 2]) << 16)
        | (np.int64(buf[i + 3]) << 24)
    )


@njit(inline="always")
def _u32be(buf, i):
    return (
        (np.int64(buf[i]) << 24)
        | (np.int64(buf[i + 1]) << 16)
        | (np.int64(buf[i + 2]) << 8)
        | np.int64(buf[i + 3])
    )


@njit(inline="always")
def _st16(out, pos, v):
    out[pos] = v & 0xFF
    out[pos + 1] = (v >> 8) & 0xFF


@njit(inline="always")
def _st32(out, pos, v):
    out[pos] = v & 0xFF
    out[pos + 1] = (v >> 8) & 0xFF
    out[pos + 2] = (v >> 16) & 0xFF
    out[pos + 3] = (v >> 24) & 0xFF


# ---------------------------------------------------------------------------
# PCAP record scanning
# ---------------------------------------------------------------------------

@njit(**_JIT)
def _scan_pcap(buf, big, ns, snap_cap, ts, cap, orig, off):
    pos = np.int64(0)
    n = 0
    end = np.int64(buf.size)
    limit = ts.size
    err = np.int64(-1)
    while n < limit and pos + 16 <= end:
        if big:
            sec = _u32be(buf, pos)
            frac = _u32be(buf, pos + 4)
            c = _u32be(buf, pos + 8)
            o = _u32be(buf, pos + 12)
        else:
            sec = _u32le(buf, pos)
            frac = _u32le(buf, pos + 4)
            c = _u32le(buf, pos + 8)
            o = _u32le(buf, pos + 12)
        if c > snap_cap:
            err = pos
            break
        if pos + 16 + c > end:
            break
        if ns:
            ts[n] = sec * 1_000_000 + frac // 1000
        else:
            ts[n] = sec * 1_000_000 + frac
        cap[n] = c
        orig[n] = o
        off[n] = pos + 16
        pos += 16 + c
        n += 1
    return n, pos, err


def scan_pcap(buf, big_endian, nanosecond, snap_cap):
    """Parse as many whole records as the buffer holds.

    Returns (n, consumed_bytes, ts, cap, orig, off, err_offset) where
    err_offset >= 0 flags a record whose captured length exceeds snap_cap.
    """
    limit = buf.size // 16 + 1
    ts = np.empty(limit, np.int64)
    cap = np.empty(limit, np.int32)
    orig = np.empty(limit, np.int32)
    off = np.empty(limit, np.int64)
    n, pos, err = _scan_pcap(buf, big_endian, nanosecond, snap_cap, ts, cap, orig, off)
    return n, int(pos), ts[:n], cap[:n], orig[:n], off[:n], int(err)


# ---------------------------------------------------------------------------
# Header decoding
# ---------------------------------------------------------------------------

@njit(**_JIT)
def _decode(buf, off, cap, ethertype, src4, dst4, src6, dst6, src6ok, dst6ok,
            proto, sport, dport, frag):
    for i in range(off.size):
        base = off[i]
        ln = np.int64(cap[i])
        if ln < 14:
            continue
        et = _u16be(buf, base + 12)
        hl = np.int64(14)
        if et == 0x8100:
            if ln < 18:
                continue  # can't see the inner type: everything stays absent
            et = _u16be(buf, base + 16)
            hl = np.int64(18)
        ethertype[i] = et
        if et == 0x0800:
            if ln < hl + 1:
                continue
            vi = np.int64(buf[base + hl])
            if (vi >> 4) != 4:
                continue
            ihl = vi & 0x0F
            if ihl < 5:
                continue
            frag_known = False
            frag_cont = False
            if ln >= hl + 8:
                frag_known = True
                fo = ((np.int64(buf[base + hl + 6]) & 0x1F) << 8) | np.int64(
                    buf[base + hl + 7]
                )
                frag_cont = fo > 0
                frag[i] = frag_cont
            p = np.int64(-1)
            if ln >= hl + 10:
                p = np.int64(buf[base + hl + 9])
                proto[i] = p
            if ln >= hl + 16:
                src4[i] = _u32be(buf, base + hl + 12)
            if ln >= hl + 20:
                dst4[i] = _u32be(buf, base + hl + 16)
            if frag_known and not frag_cont and (p == 6 or p == 17):
                t = hl + ihl * 4
                if ln >= t + 4:
                    sport[i] = _u16be(buf, base + t)
                    dport[i] = _u16be(buf, base + t + 2)
        elif et == 0x86DD:
            if ln < hl + 1:
                continue
            if (np.int64(buf[base + hl]) >> 4) != 6:
                continue
            p = np.int64(-1)
            if ln >= hl + 7:
                p = np.int64(buf[base + hl + 6])
                proto[i] = p
            if ln >= hl + 24:
                for k in range(16):
                    src6[i, k] = buf[base + hl + 8 + k]
                src6ok[i] = True
            if ln >= hl + 40:
                for k in range(16):
                    dst6[i, k] = buf[base + hl + 24 + k]
                dst6ok[i] = True
            if (p == 6 or p == 17) and ln >= hl + 44:
                sport[i] = _u16be(buf, base + hl + 40)
                dport[i] = _u16be(buf, base + hl + 42)


def decode_chunk(buf, off, cap):
    """Decode header fields for every packet in a chunk into flat arrays."""
    n = off.size
    ethertype = np.full(n, -1, np.int32)
    src4 = np.full(n, -1, np.int64)
    dst4 = np.full(n, -1, np.int64)
    src6 = np.zeros((n, 16), np.uint8)
    dst6 = np.zeros((n, 16), np.uint8)
    src6ok = np.zeros(n, np.bool_)
    dst6ok = np.zeros(n, np.bool_)
    proto = np.full(n, -1, np.int16)
    sport = np.full(n, -1, np.int32)
    dport = np.full(n, -1, np.int32)
    frag = np.zeros(n, np.bool_)
    if n:
        _decode(buf, off, cap, ethertype, src4, dst4, src6, dst6, src6ok,
                dst6ok, proto, sport, dport, frag)
    return (ethertype, src4, dst4, src6, dst6, src6ok, dst6ok, proto, sport,
            dport, frag)


# ---------------------------------------------------------------------------
# Filter matching
# ---------------------------------------------------------------------------

@njit(**_JIT)
def _eval_one(code, table, start, length, i, ethertype, src4, dst4, src6,
              dst6, src6ok, dst6ok, proto, sport, dport, frag, ts, stack):
    sp = 0
    for k in range(start, start + length):
        op = code[k, 0]
        a = code[k, 1]
        b = code[k, 2]
        if op == OP_AND:
            v = stack[sp - 2] and stack[sp - 1]
            sp -= 1
            stack[sp - 1] = v
            continue
        if op == OP_OR:
            v = stack[sp - 2] or stack[sp - 1]
            sp -= 1
            stack[sp - 1] = v
            continue
        if op == OP_NOT:
            stack[sp - 1] = not stack[sp - 1]
            continue
        v = False
        if op == OP_HOST4:
            if a != DIR_DST and src4[i] == b:
                v = True
            if not v and a != DIR_SRC and dst4[i] == b:
                v = True
        elif op == OP_HOST6:
            if a != DIR_DST and src6ok[i]:
                eq = True
                for j in range(16):
                    if src6[i, j] != table[b, j]:
                        eq = False
                        break
                v = eq
            if not v and a != DIR_SRC and dst6ok[i]:
                eq = True
                for j in range(16):
                    if dst6[i, j] != table[b, j]:
                        eq = False
                        break
                v = eq
        elif op == OP_NET4:
            if src4[i] >= 0 and (src4[i] & b) == a:
                v = True
            elif dst4[i] >= 0 and (dst4[i] & b) == a:
                v = True
        elif op == OP_NET6:
            if src6ok[i]:
                eq = True
                for j in range(16):
                    if (src6[i, j] & table[b, j]) != table[a, j]:
                        eq = False
                        break
                v = eq
            if not v and dst6ok[i]:
                eq = True
                for j in range(16):
                    if (dst6[i, j] & table[b, j]) != table[a, j]:
                        eq = False
                        break
                v = eq
        elif op == OP_PORT:
            if a != DIR_DST and sport[i] == b:
                v = True
            if not v and a != DIR_SRC and dport[i] == b:
                v = True
        elif op == OP_PROTO:
            v = proto[i] == a
        elif op == OP_ETHER:
            v = ethertype[i] == a
        elif op == OP_TIME:
            v = (a < 0 or ts[i] >= a) and (b < 0 or ts[i] <= b)
        stack[sp] = v
        sp += 1
    return stack[0]


@njit(**_JIT)
def _match_rotated(starts, lens, code, table, ethertype, src4, dst4, src6,
                   dst6, src6ok, dst6ok, proto, sport, dport, frag, ts,
                   last_hit, out_fidx):
    nf = starts.size
    probes = np.int64(0)
    stack = np.empty(MAX_STACK, np.bool_)
    for i in range(out_fidx.size):
        chosen = -1
        for r in range(nf):
            f = (last_hit + r) % nf
            probes += 1
            if _eval_one(code, table, starts[f], lens[f], i, ethertype, src4,
                         dst4, src6, dst6, src6ok, dst6ok, proto, sport,
                         dport, frag, ts, stack):
                chosen = f
                last_hit = f
                break
        out_fidx[i] = chosen
    return last_hit, probes


def match_chunk(program, fields, ts, last_hit):
    """Rotated first-match of every packet against the filter vector.

    Returns (filter_index array with -1 for no match, new last_hit,
    total probes performed).
    """
    out = np.full(ts.size, -1, np.int32)
    if program.starts.size == 0 or ts.size == 0:
        return out, last_hit, 0
    lh, probes = _match_rotated(
        program.starts, program.lens, program.code, program.table,
        fields.ethertype, fields.src4, fields.dst4, fields.src6, fields.dst6,
        fields.src6ok, fields.dst6ok, fields.proto, fields.sport,
        fields.dport, fields.frag, ts, last_hit, out,
    )
    return out, int(lh), int(probes)


# ---------------------------------------------------------------------------
# Block serialization
# ---------------------------------------------------------------------------

@njit(**_JIT)
def _emit_epbs(buf, off, cap, orig, ts, coff, clen, cblob, out, starts, total):
    for i in range(off.size):
        s = starts[i]
        _st32(out, s, 6)
        _st32(out, s + 4, total[i])
        # interface id at s+8 is already zero
        _st32(out, s + 12, ts[i] >> 32)
        _st32(out, s + 16, ts[i] & 0xFFFFFFFF)
        c = cap[i]
        _st32(out, s + 20, c)
        _st32(out, s + 24, orig[i])
        d = s + 28
        out[d:d + c] = buf[off[i]:off[i] + c]
        o = d + ((c + 3) & ~np.int64(3))
        cl = clen[i]
        _st16(out, o, 1)
        _st16(out, o + 2, cl)
        out[o + 4:o + 4 + cl] = cblob[coff[i]:coff[i] + cl]
        o2 = o + 4 + ((cl + 3) & ~np.int64(3))
        # opt_endofopt at o2 is four zero bytes, already present
        _st32(out, o2 + 4, total[i])


def emit_epbs(buf, off, cap, orig, ts, coff, clen, cblob):
    """Serialize packets + comments into a contiguous run of EPBs."""
    cap64 = cap.astype(np.int64)
    orig64 = orig.astype(np.int64)
    clen64 = clen.astype(np.int64)
    coff64 = coff.astype(np.int64)
    pad_data = (cap64 + 3) & ~np.int64(3)
    pad_comment = (clen64 + 3) & ~np.int64(3)
    total = 40 + pad_data + pad_comment
    starts = np.zeros(len(total), np.int64)
    np.cumsum(total[:-1], out=starts[1:])
    out = np.zeros(int(total.sum()), np.uint8)
    if len(total):
        _emit_epbs(buf, off, cap64, orig64, ts, coff64, clen64, cblob, out,
                   starts, total)
    return out


@njit(**_JIT)
def _emit_pcap(buf, off, cap, orig, ts, out, starts):
    for i in range(off.size):
        s = starts[i]
        _st32(out, s, ts[i] // 1_000_000)
        _st32(out, s + 4, ts[i] % 1_000_000)
        c = cap[i]
        _st32(out, s + 8, c)
        _st32(out, s + 12, orig[i])
        out[s + 16:s + 16 + c] = buf[off[i]:off[i] + c]


def emit_pcap(buf, off, cap, orig, ts):
    """Serialize packets into a contiguous run of legacy-PCAP records."""
    cap64 = cap.astype(np.int64)
    orig64 = orig.astype(np.int64)
    total = 16 + cap64
    starts = np.zeros(len(total), np.int64)
    np.cumsum(total[:-1], out=starts[1:])
    out = np.zeros(int(total.sum()), np.uint8)
    if len(total):
        _emit_pcap(buf, off, cap64, orig64, ts, out, starts)
    return out
