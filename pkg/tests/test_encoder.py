import random

import pytest

from gen import random_bpf, random_packet
from naive_match import naive_match, naive_scan_match
from validator import validate_pcapng_file

from pcapml import synth
from pcapml.decode import decode_headers
from pcapml.encoder import (
    StreamSource,
    encode_directory,
    encode_stream,
    search_match,
)
from pcapml.errors import MissingLabeledFile, MixedFilterTypes
from pcapml.filters import parse_filter
from pcapml.metadata import assign_sample_ids, parse_metadata_file
from pcapml.pcapio import (
    CaptureMeta,
    RawPacketRecord,
    extract_comment,
    read_pcapng,
    write_pcap,
)


def make_pcap(path, packets, t0=1_000_000_000_000_000):
    records = [
        RawPacketRecord(t0 + i * 1000, len(p), len(p), p)
        for i, p in enumerate(packets)
    ]
    write_pcap(path, CaptureMeta(link_type=1), records)
    return records


def tcp_pkt(sport=1234, dport=22, payload=b"pp"):
    return synth.ether(
        synth.ipv4("10.0.0.1", "10.0.0.2", 6, synth.tcp(sport, dport, payload)),
        0x0800,
    )


def icmp_pkt(payload=b"ping"):
    return synth.ether(
        synth.ipv4("10.0.9.1", "10.0.9.2", 1, synth.icmp_echo(payload)),
        0x0800,
    )


def labels_from(text):
    return assign_sample_ids(parse_metadata_file(text))


def read_comments(path):
    return [extract_comment(opts) for _, opts in read_pcapng(path)]


# --- directory mode ---------------------------------------------------------

def test_directory_grouped_output(backend_env, tmp_path):
    d = tmp_path / "ds"
    d.mkdir()
    make_pcap(d / "a.pcap", [tcp_pkt(payload=bytes([i]) * 8) for i in range(4)])
    make_pcap(d / "b.pcap", [icmp_pkt(bytes([i]) * 5) for i in range(4)])
    labels = labels_from("FILE:a.pcap,alpha,\nFILE:b.pcap,beta,\n")
    out = tmp_path / "out.pcapng"
    report = encode_directory(d, labels, out)
    assert report.packets_read == 8
    assert report.packets_matched == 8
    assert report.samples_seen == 2
    assert read_comments(out) == ["0,alpha"] * 4 + ["1,beta"] * 4
    validate_pcapng_file(out)


def test_directory_per_file_labels_match_source(tmp_path):
    # one PCAP per handshake-style sample, labels from the CSV
    d = tmp_path / "dataset"
    d.mkdir()
    for i, app in enumerate(("discord", "discord", "google")):
        make_pcap(d / f"capture_{app}_{i}.pcap",
                  [tcp_pkt(sport=4000 + i, payload=bytes([i, j]))
                   for j in range(3)])
    csv = (
        "# traffic_filter,metadata,group_key\n"
        "FILE:capture_discord_0.pcap,discord,\n"
        "FILE:capture_discord_1.pcap,discord,\n"
        "FILE:capture_google_2.pcap,google,\n"
    )
    out = tmp_path / "enc.pcapng"
    encode_directory(d, labels_from(csv), out)
    comments = read_comments(out)
    assert comments == ["0,discord"] * 3 + ["1,discord"] * 3 + ["2,google"] * 3


def test_directory_unlabeled_file_dropped(tmp_path):
    d = tmp_path / "ds"
    d.mkdir()
    make_pcap(d / "a.pcap", [tcp_pkt()] * 2)
    make_pcap(d / "extra.pcap", [icmp_pkt()] * 3)
    (d / "notes.txt").write_text("not a capture")
    out = tmp_path / "out.pcapng"
    report = encode_directory(d, labels_from("FILE:a.pcap,only,\n"), out)
    assert report.packets_read == 5
    assert report.packets_matched == 2
    assert report.packets_dropped_unmatched == 3
    assert report.packets_read == (report.packets_matched
                                   + report.packets_dropped_unmatched)
    assert read_comments(out) == ["0,only"] * 2


def test_directory_group_key_shares_sid(tmp_path):
    d = tmp_path / "ds"
    d.mkdir()
    make_pcap(d / "a.pcap", [tcp_pkt()])
    make_pcap(d / "b.pcap", [icmp_pkt()])
    labels = labels_from("FILE:a.pcap,web,s1\nFILE:b.pcap,web,s1\n")
    out = tmp_path / "out.pcapng"
    report = encode_directory(d, labels, out)
    assert read_comments(out) == ["0,web", "0,web"]
    assert report.samples_seen == 1


def test_directory_rejects_bpf_filters(tmp_path):
    (tmp_path / "ds").mkdir()
    with pytest.raises(MixedFilterTypes):
        encode_directory(tmp_path / "ds", labels_from("BPF:tcp,x,\n"),
                         tmp_path / "o.pcapng")


def test_directory_missing_file(tmp_path):
    (tmp_path / "ds").mkdir()
    with pytest.raises(MissingLabeledFile):
        encode_directory(tmp_path / "ds", labels_from("FILE:nope.pcap,x,\n"),
                         tmp_path / "o.pcapng")


def test_directory_paths_resolve_with_dataset_prefix(tmp_path):
    # Listing-style rows carry the dataset dir in the path
    d = tmp_path / "dataset"
    d.mkdir()
    make_pcap(d / "x.pcap", [tcp_pkt()])
    labels = labels_from("FILE:dataset/x.pcap,lab,\n")
    report = encode_directory(d, labels, tmp_path / "o.pcapng")
    assert report.packets_matched == 1


# --- stream mode ------------------------------------------------------------

def test_stream_interleaved_protocol_labels(backend_env, tmp_path):
    pkts = []
    for i in range(10):
        pkts.append(icmp_pkt(bytes([i])) if i % 2 == 0 else tcp_pkt(dport=22))
    src = tmp_path / "in.pcap"
    make_pcap(src, pkts)
    labels = labels_from(
        "bpf_filter,timestamp_start,timestamp_end,metadata\n"
        "ICMP,,,ICMP\n"
        "port 22,,,SSH\n"
    )
    out = tmp_path / "out.pcapng"
    report = encode_stream(src, labels, out)
    expected = ["0,ICMP" if i % 2 == 0 else "1,SSH" for i in range(10)]
    assert read_comments(out) == expected  # interleaving preserved
    assert report.packets_matched == 10
    assert report.samples_seen == 2
    validate_pcapng_file(out)


def test_stream_overlapping_filters_fresh_pipeline(backend_env, tmp_path):
    src = tmp_path / "in.pcap"
    make_pcap(src, [tcp_pkt(dport=22)])  # matches both filters
    labels = labels_from("BPF:port 22,ssh,\nBPF:tcp,tcp,\n")
    out = tmp_path / "out.pcapng"
    encode_stream(src, labels, out)
    assert read_comments(out) == ["0,ssh"]


def test_stream_zero_filters(backend_env, tmp_path):
    src = tmp_path / "in.pcap"
    make_pcap(src, [tcp_pkt()] * 3)
    out = tmp_path / "out.pcapng"
    report = encode_stream(src, labels_from(""), out)
    assert report.packets_read == 3
    assert report.packets_dropped_unmatched == 3
    assert list(read_pcapng(out)) == []
    validate_pcapng_file(out)


def test_stream_time_window_labels(backend_env, tmp_path):
    t0 = 1_600_000_000_000_000
    src = tmp_path / "in.pcap"
    make_pcap(src, [tcp_pkt(payload=bytes([i])) for i in range(5)], t0=t0)
    # packets at t0+0ms..4ms; window covers the middle packet only
    labels = labels_from(
        f"TS:{(t0 + 2000) / 1e6}-{(t0 + 2000) / 1e6},mid,\n"
    )
    out = tmp_path / "out.pcapng"
    report = encode_stream(src, labels, out)
    assert report.packets_matched == 1
    assert read_comments(out) == ["0,mid"]


def test_stream_rejects_file_filters(tmp_path):
    src = tmp_path / "in.pcap"
    make_pcap(src, [tcp_pkt()])
    with pytest.raises(MixedFilterTypes):
        encode_stream(src, labels_from("FILE:a.pcap,x,\n"), tmp_path / "o")


def test_paced_replay_same_output(backend_env, tmp_path):
    src = tmp_path / "in.pcap"
    make_pcap(src, [tcp_pkt(payload=bytes([i]) * 50) for i in range(20)])
    fast = tmp_path / "fast.pcapng"
    paced = tmp_path / "paced.pcapng"
    labels = labels_from("BPF:tcp,t,\n")
    encode_stream(src, labels, fast)
    encode_stream(StreamSource(src, rate_mbps=500.0), labels, paced)
    assert fast.read_bytes() == paced.read_bytes()


def test_unmatched_packets_dropped_not_copied(backend_env, tmp_path):
    src = tmp_path / "in.pcap"
    make_pcap(src, [tcp_pkt(dport=443), icmp_pkt(), tcp_pkt(dport=443)])
    out = tmp_path / "out.pcapng"
    report = encode_stream(src, labels_from("BPF:icmp,ping,\n"), out)
    assert report.packets_matched == 1
    assert report.packets_dropped_unmatched == 2
    assert read_comments(out) == ["0,ping"]


# --- search_match -----------------------------------------------------------

A = parse_filter("icmp")
B = parse_filter("port 22")


def test_search_match_wraps_around():
    v = decode_headers(icmp_pkt())
    assert search_match([A, B], v, 0, last_hit=1) == 0


def test_search_match_prefers_last_hit():
    v = decode_headers(tcp_pkt(dport=22))
    both = [parse_filter("port 22"), parse_filter("tcp")]
    assert search_match(both, decode_headers(tcp_pkt(dport=22)), 0, 0) == 0
    assert search_match(both, v, 0, last_hit=1) == 1


def test_search_match_none():
    v = decode_headers(tcp_pkt(dport=443))
    assert search_match([A, B], v, 0, last_hit=1) is None
    assert search_match([], v, 0, 0) is None


def test_search_match_existence_equivalence():
    rng = random.Random(77)
    for _ in range(300):
        filters = [random_bpf(rng) for _ in range(rng.randrange(1, 6))]
        pkt = random_packet(rng)
        v = decode_headers(pkt)
        lh = rng.randrange(len(filters))
        mine = search_match(filters, v, 0, lh)
        ref = naive_scan_match(filters, pkt, 0)
        assert (mine is None) == (ref is None)


def test_search_match_disjoint_filters_ignore_last_hit():
    filters = [parse_filter(f"src port {1000 + i}") for i in range(6)]
    rng = random.Random(78)
    for _ in range(100):
        pkt = tcp_pkt(sport=1000 + rng.randrange(8))
        v = decode_headers(pkt)
        picks = {search_match(filters, v, 0, lh) for lh in range(6)}
        assert len(picks) == 1


def test_bursty_traffic_amortizes_probes(backend_env, tmp_path):
    src = tmp_path / "bursty.pcap"
    trace = synth.write_flows_pcap(src, 6000, n_flows=16, burst=24, seed=5)
    lines = ["bpf_filter,timestamp_start,timestamp_end,metadata"]
    lines += [f"src host {f.src},,,f{i}" for i, f in enumerate(trace.flows)]
    labels = labels_from("\n".join(lines))
    report = encode_stream(src, labels, tmp_path / "o.pcapng")
    assert report.packets_matched == 6000
    assert report.filter_probes / report.packets_read < 2.0
