import io
import struct

import pytest

from pcapml.errors import (
    BadMagic,
    BlockLengthMismatch,
    InterfaceIdOutOfRange,
    OversizedRecord,
    TruncatedRecord,
)
from pcapml.pcapio import (
    CaptureMeta,
    PcapngWriter,
    RawPacketRecord,
    epb_bytes,
    extract_comment,
    idb_bytes,
    pad4,
    probe_format,
    read_pcap,
    read_pcapng,
    shb_bytes,
    write_pcap,
    write_pcapng,
)
from validator import validate_pcapng

LE_HEADER = struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
BE_HEADER = struct.pack(">IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
NS_HEADER = struct.pack("<IHHiIII", 0xA1B23C4D, 2, 4, 0, 0, 65535, 1)


def le_record(sec, usec, data, orig=None):
    return struct.pack("<IIII", sec, usec, len(data), orig or len(data)) + data


# --- PCAP reading -----------------------------------------------------------

def test_empty_pcap_yields_no_records(backend_env):
    reader = read_pcap(LE_HEADER)
    assert list(reader) == []
    assert reader.meta.link_type == 1


def test_single_60_byte_frame(backend_env):
    # hand-assembled 24 + 16 + 60 byte file, ts = 1000.000001 s
    frame = bytes(range(60))
    blob = LE_HEADER + le_record(1000, 1, frame)
    records = list(read_pcap(blob))
    assert len(records) == 1
    rec = records[0]
    assert rec.timestamp_us == 1_000_000_001
    assert rec.captured_length == 60
    assert rec.original_length == 60
    assert rec.data == frame


def test_big_endian_twin_yields_identical_records(backend_env):
    frame = bytes(range(40))
    le = LE_HEADER + le_record(7, 9, frame)
    be = BE_HEADER + struct.pack(">IIII", 7, 9, 40, 40) + frame
    assert list(read_pcap(le)) == list(read_pcap(be))


def test_nanosecond_magic_truncates_to_microseconds(backend_env):
    blob = NS_HEADER + struct.pack("<IIII", 5, 123_456_789, 4, 4) + b"abcd"
    (rec,) = list(read_pcap(blob))
    assert rec.timestamp_us == 5_000_000 + 123_456


def test_bad_magic():
    with pytest.raises(BadMagic):
        list(read_pcap(b"\x00" * 24))
    with pytest.raises(BadMagic):
        list(read_pcap(b"\x00" * 3))


def test_truncated_record_reports_offset(backend_env):
    blob = LE_HEADER + struct.pack("<IIII", 1, 0, 60, 60) + b"only-ten-b"
    with pytest.raises(TruncatedRecord) as exc:
        list(read_pcap(blob))
    assert exc.value.offset == 24


def test_oversized_record_rejected(backend_env):
    blob = LE_HEADER + struct.pack("<IIII", 1, 0, 300_000, 300_000)
    with pytest.raises(OversizedRecord) as exc:
        list(read_pcap(blob))
    assert exc.value.offset == 24
    assert exc.value.captured_length == 300_000


def test_multi_record_and_chunk_boundaries(backend_env):
    frames = [bytes([i]) * (i + 1) for i in range(50)]
    blob = LE_HEADER + b"".join(
        le_record(i, i, f) for i, f in enumerate(frames)
    )
    records = list(read_pcap(blob, chunk_bytes=64))  # force many tiny chunks
    assert [r.data for r in records] == frames
    assert [r.timestamp_us for r in records] == [
        i * 1_000_000 + i for i in range(50)
    ]


# --- PCAP writing -----------------------------------------------------------

def test_write_pcap_zero_records_is_24_bytes(tmp_path):
    out = tmp_path / "empty.pcap"
    n = write_pcap(out, CaptureMeta(link_type=1), [])
    assert n == 24
    assert out.stat().st_size == 24


def test_write_pcap_single_tiny_record_is_41_bytes(tmp_path):
    out = tmp_path / "one.pcap"
    rec = RawPacketRecord(0, 1, 1, b"x")
    assert write_pcap(out, CaptureMeta(), [rec]) == 41


def test_pcap_rewrite_is_byte_identical_after_header(backend_env, tmp_path):
    frames = [bytes(range(i % 7, i % 7 + 30)) for i in range(20)]
    blob = LE_HEADER + b"".join(
        le_record(100 + i, i * 13, f, orig=len(f) + i % 3) for i, f in enumerate(frames)
    )
    out = io.BytesIO()
    write_pcap(out, CaptureMeta(link_type=1), read_pcap(blob))
    assert out.getvalue()[24:] == blob[24:]


def test_pcap_roundtrip_identity(backend_env, tmp_path):
    records = [
        RawPacketRecord(i * 1_000_003, (i * 37) % 120 + 1, (i * 37) % 120 + 5,
                        bytes([i % 256]) * ((i * 37) % 120 + 1))
        for i in range(64)
    ]
    out = tmp_path / "rt.pcap"
    write_pcap(out, CaptureMeta(), records)
    assert list(read_pcap(out)) == records


# --- PCAPNG reading ---------------------------------------------------------

def hand_epb(ts_us, data, options=b"", order="<"):
    body = struct.pack(order + "IIIII", 0, ts_us >> 32, ts_us & 0xFFFFFFFF,
                       len(data), len(data))
    body += data + b"\x00" * (pad4(len(data)) - len(data)) + options
    total = 12 + len(body)
    return (struct.pack(order + "II", 0x00000006, total) + body
            + struct.pack(order + "I", total))


def hand_option(code, value, order="<"):
    return (struct.pack(order + "HH", code, len(value)) + value
            + b"\x00" * (pad4(len(value)) - len(value)))


def test_header_only_pcapng_is_empty():
    blob = shb_bytes() + idb_bytes(1)
    reader = read_pcapng(blob)
    assert list(reader) == []
    assert reader.meta.link_type == 1


def test_epb_with_comment_0_google():
    opts = hand_option(1, b"0,google") + hand_option(0, b"")
    blob = shb_bytes() + idb_bytes(1) + hand_epb(1_000_000, b"\xab" * 20, opts)
    ((rec, options),) = list(read_pcapng(blob))
    assert rec.captured_length == 20
    assert [o for o in options if o.code == 1][0].value == b"0,google"
    assert extract_comment(options) == "0,google"


def test_trailing_length_mismatch_names_offset():
    epb = bytearray(hand_epb(0, b"abcd"))
    epb[-4:] = struct.pack("<I", 9999)
    blob = shb_bytes() + idb_bytes(1) + bytes(epb)
    with pytest.raises(BlockLengthMismatch) as exc:
        list(read_pcapng(blob))
    assert exc.value.offset == 48  # SHB is 28 bytes, IDB is 20
    assert "48" in str(exc.value)


def test_unknown_blocks_skipped_silently():
    unknown = struct.pack("<II", 0x0BAD0BAD, 16) + b"\xde\xad" * 2 + struct.pack("<I", 16)
    blob = (shb_bytes() + unknown + idb_bytes(1) + unknown
            + hand_epb(5, b"zz") + unknown)
    entries = list(read_pcapng(blob))
    assert len(entries) == 1
    assert entries[0][0].data == b"zz"


def test_epb_before_idb_is_interface_error():
    blob = shb_bytes() + hand_epb(0, b"abcd")
    with pytest.raises(InterfaceIdOutOfRange):
        list(read_pcapng(blob))


def test_big_endian_pcapng_section():
    shb = struct.pack(">IIIHHqI", 0x0A0D0D0A, 28, 0x1A2B3C4D, 1, 0, -1, 28)
    idb = struct.pack(">IIHHII", 1, 20, 1, 0, 0, 20)
    opts = hand_option(1, b"3,be", order=">")
    blob = shb + idb + hand_epb(77, b"abc", opts, order=">")
    ((rec, options),) = list(read_pcapng(blob))
    assert rec.timestamp_us == 77
    assert rec.data == b"abc"
    assert extract_comment(options) == "3,be"


def test_if_tsresol_nanoseconds_converted():
    # IDB advertising 10^-9 resolution via if_tsresol
    opts = hand_option(9, b"\x09") + hand_option(0, b"")
    idb = struct.pack("<IIHHI", 1, 20 + len(opts), 1, 0, 0) + opts + struct.pack(
        "<I", 20 + len(opts)
    )
    blob = shb_bytes() + idb + hand_epb(123_456_789, b"hh")
    ((rec, _),) = list(read_pcapng(blob))
    assert rec.timestamp_us == 123_456_789 // 1000


def test_pcapng_not_a_file():
    with pytest.raises(BadMagic):
        list(read_pcapng(b"\x01\x02\x03\x04\x05\x06\x07\x08"))


# --- PCAPNG writing ---------------------------------------------------------

def test_write_zero_records_roundtrips_empty(tmp_path):
    out = tmp_path / "empty.pcapng"
    n = write_pcapng(out, CaptureMeta(link_type=1), [])
    assert n == 28 + 20
    assert list(read_pcapng(out)) == []
    validate_pcapng(out.read_bytes())


def test_comment_option_padding_8_bytes():
    # 100-byte packet with an 8-byte comment: option area is 12 + 4 bytes
    rec = RawPacketRecord(0, 100, 100, b"\x00" * 100)
    block = epb_bytes(rec, "0,google")
    assert len(block) == 32 + 100 + 12 + 4


def test_comment_option_padding_9_bytes():
    rec = RawPacketRecord(0, 100, 100, b"\x00" * 100)
    block = epb_bytes(rec, "0,google!")  # 9 UTF-8 bytes
    assert len(block) == 32 + 100 + 16 + 4


def test_pcapng_roundtrip_records_and_comments(tmp_path):
    records = []
    comments = []
    for i in range(40):
        data = bytes([i]) * (i % 9 + 1)  # exercises every pad remainder
        records.append(RawPacketRecord(i * 10 + 5, len(data), len(data) + 2, data))
        comments.append(None if i % 5 == 4 else f"{i},meta-{'x' * (i % 7)}")
    out = tmp_path / "rt.pcapng"
    write_pcapng(out, CaptureMeta(), zip(records, comments))
    got = list(read_pcapng(out))
    assert [r for r, _ in got] == records
    assert [extract_comment(o) for _, o in got] == comments
    stats = validate_pcapng(out.read_bytes())
    assert stats["epbs"] == 40
    assert stats["comments"] == [c for c in comments if c is not None]


def test_written_blocks_are_aligned(tmp_path):
    out = tmp_path / "align.pcapng"
    recs = [RawPacketRecord(1, n, n, b"a" * n) for n in range(1, 9)]
    write_pcapng(out, CaptureMeta(), ((r, "0,x" + "y" * (r.captured_length % 5))
                                      for r in recs))
    data = out.read_bytes()
    stats = validate_pcapng(data)  # checks alignment + leading==trailing
    assert stats["epbs"] == 8


def test_mixed_comment_unicode_roundtrip(tmp_path):
    rec = RawPacketRecord(9, 3, 3, b"abc")
    out = tmp_path / "uni.pcapng"
    write_pcapng(out, CaptureMeta(), [(rec, "4,données réseau ✓")])
    ((_, options),) = list(read_pcapng(out))
    assert extract_comment(options) == "4,données réseau ✓"


def test_probe_format(tmp_path):
    p1 = tmp_path / "a.pcap"
    p1.write_bytes(LE_HEADER)
    p2 = tmp_path / "b.pcapng"
    p2.write_bytes(shb_bytes())
    p3 = tmp_path / "c.txt"
    p3.write_bytes(b"hello world!")
    assert probe_format(p1) == "pcap"
    assert probe_format(p2) == "pcapng"
    assert probe_format(p3) is None


def test_record_invariants_enforced():
    with pytest.raises(ValueError):
        RawPacketRecord(0, 5, 5, b"abc")  # length mismatch
    with pytest.raises(ValueError):
        RawPacketRecord(0, 3, 2, b"abc")  # cap > orig
    with pytest.raises(ValueError):
        RawPacketRecord(-1, 3, 3, b"abc")
