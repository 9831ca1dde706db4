"""X.509 certificate skeleton parser.

Parses just enough of a certificate to audit firmware signing: names,
validity, serial, and the SubjectPublicKeyInfo bytes that identify the
signing key. Signatures are carried as opaque bytes and never verified;
extensions are skipped. Both v1 and v3 layouts are accepted because
vendor root certificates in firmware images are frequently v1.
"""

from __future__ import annotations

import base64
import hashlib
import re
from dataclasses import dataclass
from datetime import datetime
from enum import Enum

from . import der
from .errors import DerError, MalformedCertificate, UnsupportedStringTag

# Directory string tags accepted inside names. Vendor tooling emits the
# metadata OUs as TeletexString; everything else seen in the wild here
# is printable/UTF-8/IA5.
_STRING_DECODERS = {
    der.TAG_PRINTABLE_STRING: "ascii",
    der.TAG_UTF8_STRING: "utf-8",
    der.TAG_IA5_STRING: "ascii",
    der.TAG_T61_STRING: "latin-1",
}

# RDN attribute OIDs worth a short name when rendering.
_OID_SHORT_NAMES = {
    "2.5.4.3": "CN",
    "2.5.4.5": "serialNumber",
    "2.5.4.6": "C",
    "2.5.4.7": "L",
    "2.5.4.8": "ST",
    "2.5.4.10": "O",
    "2.5.4.11": "OU",
    "1.2.840.113549.1.9.1": "emailAddress",
}

OID_OU = "2.5.4.11"

_OU_FIELD_RE = re.compile(r"^([0-9A-F]{2}) ([0-9A-F]+) ([A-Z0-9_]+)$")


class OuFieldName(str, Enum):
    """Vendor OU metadata field names; OTHER covers everything else."""

    SW_ID = "SW_ID"
    HW_ID = "HW_ID"
    OEM_ID = "OEM_ID"
    SW_SIZE = "SW_SIZE"
    MODEL_ID = "MODEL_ID"
    SHA256 = "SHA256"
    DEBUG = "DEBUG"
    OTHER = "OTHER"


_KNOWN_OU_NAMES = {m.value for m in OuFieldName if m is not OuFieldName.OTHER}


@dataclass(frozen=True)
class OuField:
    """One OU attribute value, decoded via the vendor convention.

    The convention is "<2-hex-digit tag> <hex value> <NAME>" with single
    spaces. OUs that do not match keep raw_text and get name OTHER.
    """

    raw_text: str
    name: OuFieldName
    tag_code: str = ""
    value_hex: str = ""


def parse_ou_field(text: str) -> OuField:
    """Decode an OU string; total, never raises."""
    m = _OU_FIELD_RE.match(text)
    if m and m.group(3) in _KNOWN_OU_NAMES:
        return OuField(
            raw_text=text,
            name=OuFieldName(m.group(3)),
            tag_code=m.group(1),
            value_hex=m.group(2),
        )
    return OuField(raw_text=text, name=OuFieldName.OTHER)


@dataclass(frozen=True)
class DistinguishedName:
    """An X.501 name as the ordered flat list of its attribute values.

    Each entry is (attribute OID dotted-decimal, decoded text, string
    tag byte). Order is the encoding order; equality is exact, with no
    case folding or whitespace normalization.
    """

    rdns: tuple[tuple[str, str, int], ...]

    def values_for(self, oid: str) -> list[str]:
        return [value for attr_oid, value, _tag in self.rdns if attr_oid == oid]

    @property
    def common_name(self) -> str | None:
        values = self.values_for("2.5.4.3")
        return values[0] if values else None

    def __str__(self) -> str:
        return render_dn(self)


def render_dn(dn: DistinguishedName) -> str:
    """Render a name in encoding order, one attribute per comma.

    Commas and backslashes inside values are escaped so the rendering
    stays unambiguous and stable.
    """
    parts = []
    for oid, value, _tag in dn.rdns:
        label = _OID_SHORT_NAMES.get(oid, oid)
        escaped = value.replace("\\", "\\\\").replace(",", "\\,")
        parts.append(f"{label}={escaped}")
    return ", ".join(parts)


@dataclass(frozen=True)
class ParsedCertificate:
    """The audited subset of one X.509 certificate."""

    serial_hex: str
    subject: DistinguishedName
    issuer: DistinguishedName
    not_before: datetime
    not_after: datetime
    spki_der: bytes
    key_fingerprint: bytes  # SHA-256 over spki_der
    ou_fields: tuple[OuField, ...]  # subject OUs, decoding order
    total_len: int
    raw_der: bytes
    source_offset: int = 0

    @property
    def fingerprint_hex(self) -> str:
        return self.key_fingerprint.hex()


def key_fingerprint(cert: ParsedCertificate) -> bytes:
    """SHA-256 digest of the certificate's SubjectPublicKeyInfo bytes."""
    return hashlib.sha256(cert.spki_der).digest()


def _decode_directory_string(tag_byte: int, content: bytes) -> str:
    encoding = _STRING_DECODERS.get(tag_byte)
    if encoding is None:
        raise UnsupportedStringTag(f"string tag 0x{tag_byte:02X} not supported in names")
    try:
        return content.decode(encoding)
    except UnicodeDecodeError as exc:
        raise MalformedCertificate(f"undecodable string under tag 0x{tag_byte:02X}") from exc


def parse_name(buf: bytes, node: der.TlvNode) -> DistinguishedName:
    """Parse a Name (SEQUENCE OF SET OF AttributeTypeAndValue)."""
    if node.tag_byte != der.TAG_SEQUENCE:
        raise MalformedCertificate(f"name is not a SEQUENCE (tag 0x{node.tag_byte:02X})")
    triples: list[tuple[str, str, int]] = []
    for rdn in der.iter_children(buf, node):
        if rdn.tag_byte != der.TAG_SET or rdn.value_len == 0:
            raise MalformedCertificate("RDN is not a non-empty SET")
        for atv in der.iter_children(buf, rdn):
            if atv.tag_byte != der.TAG_SEQUENCE:
                raise MalformedCertificate("AttributeTypeAndValue is not a SEQUENCE")
            children = list(der.iter_children(buf, atv))
            if len(children) != 2 or children[0].tag_byte != der.TAG_OID:
                raise MalformedCertificate("AttributeTypeAndValue shape is off")
            oid = der.decode_oid(children[0].value(buf))
            value_node = children[1]
            text = _decode_directory_string(value_node.tag_byte, value_node.value(buf))
            triples.append((oid, text, value_node.tag_byte))
    return DistinguishedName(rdns=tuple(triples))


def _parse_validity(buf: bytes, node: der.TlvNode) -> tuple[datetime, datetime]:
    if node.tag_byte != der.TAG_SEQUENCE:
        raise MalformedCertificate("validity is not a SEQUENCE")
    times = list(der.iter_children(buf, node))
    if len(times) != 2:
        raise MalformedCertificate(f"validity holds {len(times)} elements, expected 2")
    out = []
    for t in times:
        if t.tag_byte not in (der.TAG_UTC_TIME, der.TAG_GENERALIZED_TIME):
            raise MalformedCertificate(f"validity tag 0x{t.tag_byte:02X} is not a time")
        out.append(der.decode_time(t.tag_byte, t.value(buf)))
    return out[0], out[1]


def parse_certificate(buf: bytes, *, source_offset: int = 0) -> ParsedCertificate:
    """Parse one DER certificate from the start of ``buf``.

    Trailing bytes after the outermost SEQUENCE are ignored, so a slice
    of a larger image can be passed directly. Raises MalformedCertificate
    (or a more specific DerError) when the bytes do not follow the
    X.509 v1/v3 skeleton.
    """
    outer = der.parse_tlv(buf, 0)
    if outer.tag_byte != der.TAG_SEQUENCE:
        raise MalformedCertificate(f"certificate tag 0x{outer.tag_byte:02X} is not SEQUENCE")
    total_len = outer.header_len + outer.value_len
    raw = bytes(buf[:total_len])

    top = list(der.iter_children(raw, outer))
    if len(top) != 3:
        raise MalformedCertificate(f"certificate holds {len(top)} elements, expected 3")
    tbs, sig_alg, sig_value = top
    if tbs.tag_byte != der.TAG_SEQUENCE:
        raise MalformedCertificate("tbsCertificate is not a SEQUENCE")
    if sig_alg.tag_byte != der.TAG_SEQUENCE:
        raise MalformedCertificate("signatureAlgorithm is not a SEQUENCE")
    if sig_value.tag_byte != der.TAG_BIT_STRING:
        raise MalformedCertificate("signatureValue is not a BIT STRING")

    fields = list(der.iter_children(raw, tbs))
    idx = 0

    def need(what: str) -> der.TlvNode:
        nonlocal idx
        if idx >= len(fields):
            raise MalformedCertificate(f"tbsCertificate ends before {what}")
        node = fields[idx]
        idx += 1
        return node

    # [0] EXPLICIT version, absent in v1 certificates.
    if fields and fields[0].tag_byte == 0xA0:
        version_node = need("version")
        inner = list(der.iter_children(raw, version_node))
        if len(inner) != 1 or inner[0].tag_byte != der.TAG_INTEGER:
            raise MalformedCertificate("version is not a wrapped INTEGER")
        version = der.decode_integer(inner[0].value(raw))
        if version not in (0, 1, 2):
            raise MalformedCertificate(f"version value {version} out of range")

    serial_node = need("serialNumber")
    if serial_node.tag_byte != der.TAG_INTEGER:
        raise MalformedCertificate("serialNumber is not an INTEGER")
    serial = der.decode_integer(serial_node.value(raw))
    serial_hex = format(serial, "X")

    inner_alg = need("signature algorithm")
    if inner_alg.tag_byte != der.TAG_SEQUENCE:
        raise MalformedCertificate("tbs signature algorithm is not a SEQUENCE")

    issuer = parse_name(raw, need("issuer"))
    not_before, not_after = _parse_validity(raw, need("validity"))
    subject = parse_name(raw, need("subject"))

    spki_node = need("subjectPublicKeyInfo")
    if spki_node.tag_byte != der.TAG_SEQUENCE:
        raise MalformedCertificate("subjectPublicKeyInfo is not a SEQUENCE")
    spki_start = spki_node.value_range[0] - spki_node.header_len
    spki_der = raw[spki_start : spki_node.end]

    # Optional trailing members: [1]/[2] unique IDs, [3] extensions.
    # Content is skipped; only the shape is checked.
    allowed = [0x81, 0xA1, 0x82, 0xA2, 0xA3]
    last_rank = -1
    while idx < len(fields):
        node = fields[idx]
        idx += 1
        if node.tag_byte not in allowed:
            raise MalformedCertificate(
                f"unexpected tbsCertificate element tag 0x{node.tag_byte:02X}"
            )
        rank = node.tag_byte & 0x0F
        if rank <= last_rank:
            raise MalformedCertificate("tbsCertificate optional elements out of order")
        last_rank = rank

    ou_fields = tuple(
        parse_ou_field(value) for oid, value, _tag in subject.rdns if oid == OID_OU
    )

    return ParsedCertificate(
        serial_hex=serial_hex,
        subject=subject,
        issuer=issuer,
        not_before=not_before,
        not_after=not_after,
        spki_der=spki_der,
        key_fingerprint=hashlib.sha256(spki_der).digest(),
        ou_fields=ou_fields,
        total_len=total_len,
        raw_der=raw,
        source_offset=source_offset,
    )


def certificate_to_pem(raw_der: bytes) -> str:
    """Standard PEM encoding, 64 characters per base64 line."""
    body = base64.b64encode(raw_der).decode("ascii")
    lines = [body[i : i + 64] for i in range(0, len(body), 64)]
    return "\n".join(["-----BEGIN CERTIFICATE-----", *lines, "-----END CERTIFICATE-----"]) + "\n"
