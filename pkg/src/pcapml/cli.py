"""Command-line entry point.

Modes::

    pcapml -D <dir> -L <csv> -W <out.pcapng>        encode a directory
    pcapml -P <pcap> -L <csv> -W <out.pcapng>       encode a single PCAP
    pcapml --replay <pcap> [--rate <Mbps>] -L <csv> -W <out.pcapng>
                                                    encode a paced replay
    pcapml -M <in.pcapng> -s -W <out.pcapng>        sort by sampleID, time
    pcapml -M <in.pcapng> -O <dir>                  split into per-sample PCAPs
    pcapml inspect -M <in.pcapng>                   print sampleid,metadata rows

Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to
stderr; encode modes print one machine-readable summary line to stdout.
"""

from __future__ import annotations

import argparse
import sys

from .encoder import StreamSource, encode_directory, encode_stream
from .errors import PcapmlError
from .metadata import assign_sample_ids, parse_metadata_file
from .pcapio import extract_comment, read_pcapng
from .sorter import sort_pcapng
from .splitter import split_pcapng


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"pcapml: usage error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="pcapml", add_help=True)
    p.add_argument("-D", metavar="DIR", help="encode a directory of captures")
    p.add_argument("-P", metavar="PCAP", help="encode a single PCAP")
    p.add_argument("--replay", metavar="PCAP",
                   help="encode a paced replay of a PCAP (stands in for a "
                        "live interface)")
    p.add_argument("--rate", metavar="MBPS", type=float,
                   help="replay pacing rate in Mbit/s")
    p.add_argument("-L", metavar="CSV", help="metadata CSV file")
    p.add_argument("-W", metavar="OUT", help="output PCAPNG path")
    p.add_argument("-M", metavar="IN", help="encoded PCAPNG input")
    p.add_argument("-s", action="store_true", help="sort mode (with -M/-W)")
    p.add_argument("-O", metavar="DIR", help="split into one PCAP per sample")
    return p


def _load_labels(csv_path: str):
    with open(csv_path, "r", encoding="utf-8") as fp:
        return assign_sample_ids(parse_metadata_file(fp.read()))


def _usage(parser: _Parser, message: str):
    parser.error(message)


def _run_inspect(argv: list[str]) -> int:
    p = _Parser(prog="pcapml inspect")
    p.add_argument("-M", metavar="IN", required=True,
                   help="encoded PCAPNG to inspect")
    args = p.parse_args(argv)
    for _rec, options in read_pcapng(args.M):
        print(extract_comment(options) or "")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv and argv[0] == "inspect":
            return _run_inspect(argv[1:])
        parser = _build_parser()
        args = parser.parse_args(argv)

        inputs = [name for name, val in
                  (("-D", args.D), ("-P", args.P), ("--replay", args.replay),
                   ("-M", args.M)) if val]
        if len(inputs) != 1:
            _usage(parser, "give exactly one input: -D, -P, --replay, or -M")

        if args.D or args.P or args.replay:
            if not args.L:
                _usage(parser, "encoding requires -L <metadata.csv>")
            if not args.W:
                _usage(parser, "encoding requires -W <output.pcapng>")
            labels = _load_labels(args.L)
            if args.D:
                report = encode_directory(args.D, labels, args.W)
            elif args.P:
                report = encode_stream(args.P, labels, args.W)
            else:
                report = encode_stream(
                    StreamSource(args.replay, rate_mbps=args.rate),
                    labels, args.W,
                )
            print(report.summary_line())
            return 0

        # -M modes
        if args.s:
            if not args.W:
                _usage(parser, "sort mode requires -W <output.pcapng>")
            if args.O:
                _usage(parser, "-s and -O are mutually exclusive")
            count = sort_pcapng(args.M, args.W)
            print(f"sorted={count}", file=sys.stderr)
            return 0
        if args.O:
            outputs = split_pcapng(args.M, args.O)
            print(f"samples={len(outputs)}", file=sys.stderr)
            return 0
        _usage(parser, "-M requires either -s -W (sort) or -O (split)")
    except PcapmlError as exc:
        print(f"pcapml: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pcapml: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
