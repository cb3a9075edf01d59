"""Exception types shared across the toolchain.

I/O errors from the OS (disk full, permission denied) are not wrapped;
they propagate as OSError.
"""


class PcapmlError(Exception):
    """Base class for all data errors raised by this package."""


# --- capture file framing ---

class BadMagic(PcapmlError):
    """Input does not start with a recognized PCAP or PCAPNG magic."""


class TruncatedRecord(PcapmlError):
    """EOF in the middle of a record; message carries the byte offset."""

    def __init__(self, offset, detail="truncated record"):
        super().__init__(f"{detail} at byte offset {offset}")
        self.offset = offset


class OversizedRecord(PcapmlError):
    """Captured length exceeds the snap-length sanity cap."""

    def __init__(self, offset, captured_length, cap):
        super().__init__(
            f"record at byte offset {offset} claims {captured_length} captured "
            f"bytes (cap {cap})"
        )
        self.offset = offset
        self.captured_length = captured_length


class BlockLengthMismatch(PcapmlError):
    """PCAPNG block whose leading and trailing lengths disagree."""

    def __init__(self, offset, leading, trailing):
        super().__init__(
            f"block at byte offset {offset}: leading length {leading} != "
            f"trailing length {trailing}"
        )
        self.offset = offset


class InterfaceIdOutOfRange(PcapmlError):
    """Enhanced Packet Block references an interface never described."""


# --- filter language ---

class FilterSyntaxError(PcapmlError):
    """Bad filter expression; position is a character offset in the text."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


# --- metadata CSV ---

class MetadataError(PcapmlError):
    """Base for metadata-file parse errors; carries the 1-based line number."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownFilterPrefix(MetadataError):
    pass


class ColumnCountMismatch(MetadataError):
    pass


class EmptyMetadata(MetadataError):
    pass


class DuplicateFileFilter(MetadataError):
    pass


class LineFilterError(MetadataError):
    """A filter expression on a metadata line failed to parse."""


class MalformedComment(PcapmlError):
    """Packet comment is not a `<decimal id>,<metadata>` string."""


# --- pipeline ---

class MissingLabeledFile(PcapmlError):
    """A FILE filter names a file that does not exist under the dataset dir."""


class MixedFilterTypes(PcapmlError):
    """Directory mode takes FILE filters only; stream mode takes everything else."""


class MetadataCollision(PcapmlError):
    """Two samples would be written to the same output file."""
