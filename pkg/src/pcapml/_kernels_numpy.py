"""Pure-numpy fallback kernels.

Used when numba is unavailable or PCAPML_BACKEND=numpy. Record scanning
and the match rotation walk keep small Python loops (they carry
sequential state); field decoding and block serialization are fully
vectorized. Semantics must stay identical to ``_kernels_numba``.
"""

import struct

import numpy as np

from ._ops import (
    DIR_DST,
    DIR_SRC,
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

NAME = "numpy"

_REC_LE = struct.Struct("<IIII")
_REC_BE = struct.Struct(">IIII")


# ---------------------------------------------------------------------------
# PCAP record scanning
# ---------------------------------------------------------------------------

def scan_pcap(buf, big_endian, nanosecond, snap_cap):
    unpack = (_REC_BE if big_endian else _REC_LE).unpack_from
    end = buf.size
    pos = 0
    ts, cap, orig, off = [], [], [], []
    err = -1
    while pos + 16 <= end:
        sec, frac, c, o = unpack(buf, pos)
        if c > snap_cap:
            err = pos
            break
        if pos + 16 + c > end:
            break
        ts.append(sec * 1_000_000 + (frac // 1000 if nanosecond else frac))
        cap.append(c)
        orig.append(o)
        off.append(pos + 16)
        pos += 16 + c
    return (
        len(ts), pos,
        np.array(ts, np.int64), np.array(cap, np.int32),
        np.array(orig, np.int32), np.array(off, np.int64), err,
    )


# ---------------------------------------------------------------------------
# Header decoding
# ---------------------------------------------------------------------------

def _gather(buf, pos, valid):
    """Bytes at per-packet positions, as int64; 0 where not valid."""
    safe = np.where(valid, pos, 0)
    return np.where(valid, buf[safe].astype(np.int64), 0)


def _gather16(buf, pos, valid, out):
    for k in range(16):
        safe = np.where(valid, pos + k, 0)
        out[:, k] = np.where(valid, buf[safe], 0)


def decode_chunk(buf, off, cap):
    n = off.size
    src6 = np.zeros((n, 16), np.uint8)
    dst6 = np.zeros((n, 16), np.uint8)
    if n == 0 or buf.size == 0:
        empty32 = np.full(n, -1, np.int32)
        return (empty32, np.full(n, -1, np.int64), np.full(n, -1, np.int64),
                src6, dst6, np.zeros(n, np.bool_), np.zeros(n, np.bool_),
                np.full(n, -1, np.int16), empty32, empty32.copy(),
                np.zeros(n, np.bool_))

    cap64 = cap.astype(np.int64)
    has14 = cap64 >= 14
    raw_et = (_gather(buf, off + 12, has14) << 8) | _gather(buf, off + 13, has14)
    vlan_full = has14 & (raw_et == 0x8100) & (cap64 >= 18)
    vlan_trunc = has14 & (raw_et == 0x8100) & (cap64 < 18)
    inner = (_gather(buf, off + 16, vlan_full) << 8) | _gather(buf, off + 17, vlan_full)
    eff = np.where(vlan_full, inner, raw_et)
    et_present = has14 & ~vlan_trunc
    ethertype = np.where(et_present, eff, -1).astype(np.int32)
    hl = np.where(vlan_full, 18, 14).astype(np.int64)

    # IPv4
    m4 = ethertype == 0x0800
    vi_ok = m4 & (cap64 >= hl + 1)
    vi = _gather(buf, off + hl, vi_ok)
    ihl = vi & 0x0F
    hdr4 = vi_ok & ((vi >> 4) == 4) & (ihl >= 5)
    frag_known = hdr4 & (cap64 >= hl + 8)
    fo = ((_gather(buf, off + hl + 6, frag_known) & 0x1F) << 8) | _gather(
        buf, off + hl + 7, frag_known
    )
    frag = frag_known & (fo > 0)
    p4_ok = hdr4 & (cap64 >= hl + 10)
    p4 = np.where(p4_ok, _gather(buf, off + hl + 9, p4_ok), -1)
    s4_ok = hdr4 & (cap64 >= hl + 16)
    d4_ok = hdr4 & (cap64 >= hl + 20)

    def be32(pos, valid):
        return (
            (_gather(buf, pos, valid) << 24) | (_gather(buf, pos + 1, valid) << 16)
            | (_gather(buf, pos + 2, valid) << 8) | _gather(buf, pos + 3, valid)
        )

    def be16(pos, valid):
        return (_gather(buf, pos, valid) << 8) | _gather(buf, pos + 1, valid)

    src4 = np.where(s4_ok, be32(off + hl + 12, s4_ok), -1)
    dst4 = np.where(d4_ok, be32(off + hl + 16, d4_ok), -1)
    t4 = hl + ihl * 4
    ports4 = frag_known & ~frag & ((p4 == 6) | (p4 == 17)) & (cap64 >= t4 + 4)
    sport4 = np.where(ports4, be16(off + t4, ports4), -1)
    dport4 = np.where(ports4, be16(off + t4 + 2, ports4), -1)

    # IPv6
    m6 = ethertype == 0x86DD
    v6_ok = m6 & (cap64 >= hl + 1)
    hdr6 = v6_ok & ((_gather(buf, off + hl, v6_ok) >> 4) == 6)
    p6_ok = hdr6 & (cap64 >= hl + 7)
    p6 = np.where(p6_ok, _gather(buf, off + hl + 6, p6_ok), -1)
    src6ok = hdr6 & (cap64 >= hl + 24)
    dst6ok = hdr6 & (cap64 >= hl + 40)
    _gather16(buf, off + hl + 8, src6ok, src6)
    _gather16(buf, off + hl + 24, dst6ok, dst6)
    ports6 = hdr6 & ((p6 == 6) | (p6 == 17)) & (cap64 >= hl + 44)
    sport6 = np.where(ports6, be16(off + hl + 40, ports6), -1)
    dport6 = np.where(ports6, be16(off + hl + 42, ports6), -1)

    proto = np.where(m4, p4, np.where(m6, p6, -1)).astype(np.int16)
    sport = np.where(ports4, sport4, np.where(ports6, sport6, -1)).astype(np.int32)
    dport = np.where(ports4, dport4, np.where(ports6, dport6, -1)).astype(np.int32)
    return (ethertype, src4, dst4, src6, dst6, src6ok, dst6ok, proto, sport,
            dport, frag)


# ---------------------------------------------------------------------------
# Filter matching
# ---------------------------------------------------------------------------

def _eval_vec(program, f, fl, ts):
    code = program.code
    table = program.table
    start = int(program.starts[f])
    length = int(program.lens[f])
    n = ts.size
    stack = []
    for k in range(start, start + length):
        op, a, b = int(code[k, 0]), int(code[k, 1]), int(code[k, 2])
        if op == OP_AND:
            r = stack.pop()
            stack[-1] = stack[-1] & r
        elif op == OP_OR:
            r = stack.pop()
            stack[-1] = stack[-1] | r
        elif op == OP_NOT:
            stack[-1] = ~stack[-1]
        elif op == OP_HOST4:
            v = np.zeros(n, bool)
            if a != DIR_DST:
                v |= fl.src4 == b
            if a != DIR_SRC:
                v |= fl.dst4 == b
            stack.append(v)
        elif op == OP_HOST6:
            row = table[b]
            v = np.zeros(n, bool)
            if a != DIR_DST:
                v |= fl.src6ok & (fl.src6 == row).all(axis=1)
            if a != DIR_SRC:
                v |= fl.dst6ok & (fl.dst6 == row).all(axis=1)
            stack.append(v)
        elif op == OP_NET4:
            v = ((fl.src4 >= 0) & ((fl.src4 & b) == a)) | (
                (fl.dst4 >= 0) & ((fl.dst4 & b) == a)
            )
            stack.append(v)
        elif op == OP_NET6:
            net, mask = table[a], table[b]
            v = (fl.src6ok & ((fl.src6 & mask) == net).all(axis=1)) | (
                fl.dst6ok & ((fl.dst6 & mask) == net).all(axis=1)
            )
            stack.append(v)
        elif op == OP_PORT:
            v = np.zeros(n, bool)
            if a != DIR_DST:
                v |= fl.sport == b
            if a != DIR_SRC:
                v |= fl.dport == b
            stack.append(v)
        elif op == OP_PROTO:
            stack.append(fl.proto == a)
        elif op == OP_ETHER:
            stack.append(fl.ethertype == a)
        elif op == OP_TIME:
            v = np.ones(n, bool)
            if a >= 0:
                v &= ts >= a
            if b >= 0:
                v &= ts <= b
            stack.append(v)
    return stack[-1]


def match_chunk(program, fields, ts, last_hit):
    n = ts.size
    out = np.full(n, -1, np.int32)
    nf = int(program.starts.size)
    if nf == 0 or n == 0:
        return out, last_hit, 0
    matrix = np.empty((n, nf), bool)
    for f in range(nf):
        matrix[:, f] = _eval_vec(program, f, fields, ts)
    packed = np.packbits(matrix, axis=1, bitorder="little").tobytes()
    nb = (nf + 7) // 8
    full_mask = (1 << nf) - 1
    probes = 0
    lh = int(last_hit)
    for i in range(n):
        w = int.from_bytes(packed[i * nb:(i + 1) * nb], "little")
        if w == 0:
            probes += nf
            continue
        rot = ((w >> lh) | (w << (nf - lh))) & full_mask
        k = (rot & -rot).bit_length() - 1
        probes += k + 1
        f = lh + k
        if f >= nf:
            f -= nf
        out[i] = f
        lh = f
    return out, lh, probes


# ---------------------------------------------------------------------------
# Block serialization
# ---------------------------------------------------------------------------

def _store16(out, pos, vals):
    v = np.asarray(vals, np.int64)
    out[pos] = (v & 0xFF).astype(np.uint8)
    out[pos + 1] = ((v >> 8) & 0xFF).astype(np.uint8)


def _store32(out, pos, vals):
    v = np.asarray(vals, np.int64)
    out[pos] = (v & 0xFF).astype(np.uint8)
    out[pos + 1] = ((v >> 8) & 0xFF).astype(np.uint8)
    out[pos + 2] = ((v >> 16) & 0xFF).astype(np.uint8)
    out[pos + 3] = ((v >> 24) & 0xFF).astype(np.uint8)


def _ragged_copy(out, dst_starts, src, src_starts, lengths):
    total = int(lengths.sum())
    if total == 0:
        return
    ends = np.cumsum(lengths)
    within = np.arange(total, dtype=np.int64) - np.repeat(ends - lengths, lengths)
    out[np.repeat(dst_starts, lengths) + within] = src[
        np.repeat(src_starts, lengths) + within
    ]


def emit_epbs(buf, off, cap, orig, ts, coff, clen, cblob):
    cap64 = cap.astype(np.int64)
    clen64 = clen.astype(np.int64)
    coff64 = coff.astype(np.int64)
    pad_data = (cap64 + 3) & ~np.int64(3)
    pad_comment = (clen64 + 3) & ~np.int64(3)
    total = 40 + pad_data + pad_comment
    starts = np.zeros(len(total), np.int64)
    np.cumsum(total[:-1], out=starts[1:])
    out = np.zeros(int(total.sum()), np.uint8)
    if not len(total):
        return out
    n = len(total)
    _store32(out, starts, np.full(n, 6, np.int64))
    _store32(out, starts + 4, total)
    # interface id at starts+8 stays zero
    _store32(out, starts + 12, ts >> 32)
    _store32(out, starts + 16, ts & 0xFFFFFFFF)
    _store32(out, starts + 20, cap64)
    _store32(out, starts + 24, orig.astype(np.int64))
    _ragged_copy(out, starts + 28, buf, off, cap64)
    opt = starts + 28 + pad_data
    _store16(out, opt, np.ones(n, np.int64))
    _store16(out, opt + 2, clen64)
    _ragged_copy(out, opt + 4, cblob, coff64, clen64)
    # opt_endofopt is four zero bytes, already present
    _store32(out, opt + 4 + pad_comment + 4, total)
    return out


def emit_pcap(buf, off, cap, orig, ts):
    cap64 = cap.astype(np.int64)
    total = 16 + cap64
    starts = np.zeros(len(total), np.int64)
    np.cumsum(total[:-1], out=starts[1:])
    out = np.zeros(int(total.sum()), np.uint8)
    if not len(total):
        return out
    _store32(out, starts, ts // 1_000_000)
    _store32(out, starts + 4, ts % 1_000_000)
    _store32(out, starts + 8, cap64)
    _store32(out, starts + 12, orig.astype(np.int64))
    _ragged_copy(out, starts + 16, buf, off, cap64)
    return out
