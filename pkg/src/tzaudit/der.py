"""Minimal DER (X.690) TLV primitives.

Only what certificate carving needs: definite-length decoding with the
geometry exposed (header length, value range) so callers can slice the
original buffer instead of copying. BER features are rejected outright.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import (
    IndefiniteLength,
    MalformedCertificate,
    OverlongLength,
    ReservedLengthForm,
    Truncated,
    UnsupportedTag,
)

# Universal class tags used by the X.509 skeleton.
TAG_INTEGER = 0x02
TAG_BIT_STRING = 0x03
TAG_OCTET_STRING = 0x04
TAG_NULL = 0x05
TAG_OID = 0x06
TAG_UTF8_STRING = 0x0C
TAG_PRINTABLE_STRING = 0x13
TAG_T61_STRING = 0x14  # TeletexString; vendor metadata OUs use this
TAG_IA5_STRING = 0x16
TAG_UTC_TIME = 0x17
TAG_GENERALIZED_TIME = 0x18
TAG_SEQUENCE = 0x30
TAG_SET = 0x31

CONSTRUCTED_BIT = 0x20

# Long-form lengths are capped at four octets: nothing this toolkit
# handles is anywhere near 4 GiB, and larger declarations are bogus.
MAX_LENGTH_OCTETS = 4


@dataclass(frozen=True)
class TlvNode:
    """One decoded tag-length-value header.

    The value itself is not copied; value_range indexes into the buffer
    the node was parsed from.
    """

    tag_byte: int
    constructed: bool
    header_len: int
    value_len: int
    value_range: tuple[int, int]  # [start, end) within the source buffer

    @property
    def tag_number(self) -> int:
        return self.tag_byte & 0x1F

    @property
    def end(self) -> int:
        """Offset one past the last value byte."""
        return self.value_range[1]

    def value(self, buf: bytes) -> bytes:
        start, stop = self.value_range
        return bytes(buf[start:stop])


def parse_tlv(buf: bytes, offset: int = 0) -> TlvNode:
    """Decode the TLV header at ``offset`` in ``buf``.

    Args:
        buf: source bytes (never copied).
        offset: position of the tag octet.

    Returns:
        A TlvNode whose value_range is guaranteed to lie inside ``buf``.

    Raises:
        Truncated: header or declared value runs past the buffer end.
        IndefiniteLength: BER indefinite form (0x80), forbidden in DER.
        ReservedLengthForm: length octet 0xFF.
        OverlongLength: long form with more than four length octets.
        UnsupportedTag: high-tag-number form (tag bits 0x1F).
    """
    n = len(buf)
    if offset < 0 or offset + 2 > n:
        raise Truncated(f"need 2 header bytes at offset {offset}, have {n - offset}")

    tag = buf[offset]
    if tag & 0x1F == 0x1F:
        raise UnsupportedTag(f"high-tag-number form at offset {offset} (tag 0x{tag:02X})")

    first_len = buf[offset + 1]
    if first_len == 0xFF:
        raise ReservedLengthForm(f"length octet 0xFF at offset {offset + 1}")
    if first_len == 0x80:
        raise IndefiniteLength(f"indefinite length at offset {offset + 1}")

    if first_len & 0x80 == 0:
        header_len = 2
        value_len = first_len
    else:
        num_octets = first_len & 0x7F
        if num_octets > MAX_LENGTH_OCTETS:
            raise OverlongLength(
                f"{num_octets} length octets at offset {offset + 1}, max {MAX_LENGTH_OCTETS}"
            )
        header_len = 2 + num_octets
        if offset + header_len > n:
            raise Truncated(f"length octets run past buffer end at offset {offset}")
        value_len = int.from_bytes(buf[offset + 2 : offset + header_len], "big")

    value_start = offset + header_len
    value_end = value_start + value_len
    if value_end > n:
        raise Truncated(
            f"value of {value_len} bytes at offset {value_start} exceeds buffer of {n}"
        )

    return TlvNode(
        tag_byte=tag,
        constructed=bool(tag & CONSTRUCTED_BIT),
        header_len=header_len,
        value_len=value_len,
        value_range=(value_start, value_end),
    )


def iter_children(buf: bytes, node: TlvNode):
    """Yield the TLV nodes tiled across ``node``'s value, in order.

    Raises MalformedCertificate if the children do not tile the value
    exactly (a child overruns or garbage trails the last child).
    """
    pos, end = node.value_range
    while pos < end:
        child = parse_tlv(buf, pos)
        if child.end > end:
            raise MalformedCertificate(
                f"child at offset {pos} overruns enclosing value (ends {child.end} > {end})"
            )
        yield child
        pos = child.end


def decode_oid(content: bytes) -> str:
    """Decode OBJECT IDENTIFIER content octets to dotted-decimal text."""
    if not content:
        raise MalformedCertificate("empty OBJECT IDENTIFIER")
    if content[-1] & 0x80:
        raise MalformedCertificate("OBJECT IDENTIFIER ends mid-arc")
    arcs: list[int] = []
    acc = 0
    for byte in content:
        acc = (acc << 7) | (byte & 0x7F)
        if byte & 0x80 == 0:
            arcs.append(acc)
            acc = 0
    first = arcs[0]
    if first < 40:
        head = [0, first]
    elif first < 80:
        head = [1, first - 40]
    else:
        head = [2, first - 80]
    return ".".join(str(a) for a in head + arcs[1:])


def decode_integer(content: bytes) -> int:
    """Decode INTEGER content octets (two's complement, big endian)."""
    if not content:
        raise MalformedCertificate("empty INTEGER")
    return int.from_bytes(content, "big", signed=True)


def decode_time(tag: int, content: bytes) -> datetime:
    """Decode UTCTime or GeneralizedTime content to an aware UTC datetime.

    DER requires the trailing Z and explicit seconds; anything looser is
    rejected. UTCTime years below 50 land in 20xx, the rest in 19xx.
    """
    try:
        text = content.decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedCertificate(f"non-ASCII time value: {content!r}") from exc

    if tag == TAG_UTC_TIME:
        # YYMMDDHHMMSSZ
        if len(text) != 13 or not text.endswith("Z") or not text[:12].isdigit():
            raise MalformedCertificate(f"bad UTCTime {text!r}")
        yy = int(text[0:2])
        year = 2000 + yy if yy < 50 else 1900 + yy
        rest = text[2:12]
    elif tag == TAG_GENERALIZED_TIME:
        # YYYYMMDDHHMMSSZ
        if len(text) != 15 or not text.endswith("Z") or not text[:14].isdigit():
            raise MalformedCertificate(f"bad GeneralizedTime {text!r}")
        year = int(text[0:4])
        rest = text[4:14]
    else:
        raise MalformedCertificate(f"tag 0x{tag:02X} is not a time type")

    month, day = int(rest[0:2]), int(rest[2:4])
    hour, minute, second = int(rest[4:6]), int(rest[6:8]), int(rest[8:10])
    try:
        return datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)
    except ValueError as exc:
        raise MalformedCertificate(f"impossible time {text!r}") from exc
