"""pcapml: self-describing network traffic datasets.

Encodes per-packet sampleIDs and metadata into PCAPNG comment options,
filters packets into labeled traffic samples, sorts and splits encoded
datasets, and keeps everything readable by standard capture tooling.
"""

from .decode import HeaderView, decode_headers
from .encoder import (
    DirectorySource,
    EncodeReport,
    SinglePcapSource,
    StreamSource,
    encode_directory,
    encode_stream,
    search_match,
)
from .errors import PcapmlError
from .filters import (
    BpfAndTime,
    BpfFilter,
    FileRef,
    TimeWindow,
    match_filter,
    parse_filter,
)
from .metadata import (
    LabelSet,
    MetadataRecord,
    assign_sample_ids,
    format_comment,
    parse_comment,
    parse_metadata_file,
)
from .pcapio import (
    CaptureMeta,
    PcapngOption,
    RawPacketRecord,
    read_pcap,
    read_pcapng,
    write_pcap,
    write_pcapng,
)
from .sorter import sort_pcapng
from .splitter import split_pcapng, strip_metadata

__version__ = "0.1.0"

__all__ = [
    "BpfAndTime",
    "BpfFilter",
    "CaptureMeta",
    "DirectorySource",
    "EncodeReport",
    "FileRef",
    "HeaderView",
    "LabelSet",
    "MetadataRecord",
    "PcapmlError",
    "PcapngOption",
    "RawPacketRecord",
    "SinglePcapSource",
    "StreamSource",
    "TimeWindow",
    "assign_sample_ids",
    "decode_headers",
    "encode_directory",
    "encode_stream",
    "format_comment",
    "match_filter",
    "parse_comment",
    "parse_filter",
    "parse_metadata_file",
    "read_pcap",
    "read_pcapng",
    "search_match",
    "sort_pcapng",
    "split_pcapng",
    "strip_metadata",
    "write_pcap",
    "write_pcapng",
]
