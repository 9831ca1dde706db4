"""Hand-rolled DER encoding helpers for building test certificates.

Kept independent of the package under test on purpose: fixtures and
expected values must not be produced by the code they validate. Only
the handful of universal types the X.509 skeleton needs is supported.
"""

from __future__ import annotations

SEQUENCE = 0x30
SET = 0x31
INTEGER = 0x02
BIT_STRING = 0x03
OCTET_STRING = 0x04
BOOLEAN = 0x01
OID = 0x06
UTF8_STRING = 0x0C
PRINTABLE_STRING = 0x13
T61_STRING = 0x14
IA5_STRING = 0x16
BMP_STRING = 0x1E
UTC_TIME = 0x17
GENERALIZED_TIME = 0x18

_STRING_CODECS = {
    PRINTABLE_STRING: "ascii",
    IA5_STRING: "ascii",
    T61_STRING: "latin-1",
    UTF8_STRING: "utf-8",
    BMP_STRING: "utf-16-be",
}

SHA256_RSA_ALG = bytes.fromhex("300D06092A864886F70D01010B0500")
ECDSA_SHA256_ALG = bytes.fromhex("300A06082A8648CE3D040302")

OID_CN = "2.5.4.3"
OID_C = "2.5.4.6"
OID_L = "2.5.4.7"
OID_ST = "2.5.4.8"
OID_O = "2.5.4.10"
OID_OU = "2.5.4.11"
OID_EMAIL = "1.2.840.113549.1.9.1"


def tlv(tag: int, content: bytes) -> bytes:
    n = len(content)
    if n < 0x80:
        header = bytes([tag, n])
    elif n < 0x100:
        header = bytes([tag, 0x81, n])
    elif n < 0x10000:
        header = bytes([tag, 0x82, n >> 8, n & 0xFF])
    else:
        header = bytes([tag, 0x83, (n >> 16) & 0xFF, (n >> 8) & 0xFF, n & 0xFF])
    return header + content


def seq(*parts: bytes) -> bytes:
    return tlv(SEQUENCE, b"".join(parts))


def setof(*parts: bytes) -> bytes:
    return tlv(SET, b"".join(parts))


def integer(value: int) -> bytes:
    n = max(1, (value.bit_length() + 8) // 8) if value >= 0 else (value.bit_length() // 8 + 1)
    return tlv(INTEGER, value.to_bytes(n, "big", signed=True))


def oid(dotted: str) -> bytes:
    arcs = [int(a) for a in dotted.split(".")]
    body = bytearray()
    # first two arcs merge into one base-128 sub-identifier
    for arc in [arcs[0] * 40 + arcs[1]] + arcs[2:]:
        chunk = [arc & 0x7F]
        arc >>= 7
        while arc:
            chunk.append(0x80 | (arc & 0x7F))
            arc >>= 7
        body.extend(reversed(chunk))
    return tlv(OID, bytes(body))


def string(tag: int, text: str) -> bytes:
    return tlv(tag, text.encode(_STRING_CODECS[tag]))


def utc_time(text: str) -> bytes:
    return tlv(UTC_TIME, text.encode("ascii"))


def generalized_time(text: str) -> bytes:
    return tlv(GENERALIZED_TIME, text.encode("ascii"))


def name(rdns: list[tuple[str, str, int]]) -> bytes:
    """Encode a Name from (attribute oid, text, string tag) triples.

    Each triple becomes its own single-valued RDN, which is how every
    firmware certificate in scope encodes names.
    """
    sets = [
        setof(seq(oid(attr_oid), string(tag, text))) for attr_oid, text, tag in rdns
    ]
    return seq(*sets)


def ext_basic_constraints(ca: bool, critical: bool = True) -> bytes:
    inner = seq(tlv(BOOLEAN, b"\xff")) if ca else seq()
    parts = [oid("2.5.29.19")]
    if critical:
        parts.append(tlv(BOOLEAN, b"\xff"))
    parts.append(tlv(OCTET_STRING, inner))
    return seq(*parts)


def ext_key_usage(bits: bytes, critical: bool = True) -> bytes:
    parts = [oid("2.5.29.15")]
    if critical:
        parts.append(tlv(BOOLEAN, b"\xff"))
    parts.append(tlv(OCTET_STRING, tlv(BIT_STRING, bits)))
    return seq(*parts)


KU_DIGITAL_SIGNATURE = b"\x07\x80"
KU_CERT_SIGN = b"\x01\x06"


def ext_subject_key_id(key_id: bytes) -> bytes:
    return seq(oid("2.5.29.14"), tlv(OCTET_STRING, tlv(OCTET_STRING, key_id)))


def ext_opaque(dotted: str, payload: bytes) -> bytes:
    """A non-critical extension nobody interprets; used to pin sizes."""
    return seq(oid(dotted), tlv(OCTET_STRING, payload))


def build_certificate(
    *,
    serial: int,
    issuer: list[tuple[str, str, int]],
    subject: list[tuple[str, str, int]],
    not_before: bytes,
    not_after: bytes,
    spki_der: bytes,
    sig_alg: bytes,
    signer,
    v3: bool = True,
    extensions: list[bytes] | None = None,
) -> bytes:
    """Assemble and sign a certificate; returns the DER bytes.

    ``signer`` is a callable mapping tbs bytes to signature bytes, so
    the caller picks the key type and padding.
    """
    parts = []
    if v3:
        parts.append(tlv(0xA0, integer(2)))
    parts.append(integer(serial))
    parts.append(sig_alg)
    parts.append(name(issuer))
    parts.append(seq(not_before, not_after))
    parts.append(name(subject))
    parts.append(spki_der)
    if extensions is not None:
        parts.append(tlv(0xA3, seq(*extensions)))
    tbs = seq(*parts)
    signature = signer(tbs)
    return seq(tbs, sig_alg, tlv(BIT_STRING, b"\x00" + signature))


def naive_pattern_hits(data: bytes) -> list[int]:
    """Reference six-byte pattern scan: plain loop, no regex, no windows."""
    hits = []
    for i in range(len(data) - 5):
        if (
            data[i] == 0x30
            and data[i + 1] == 0x82
            and data[i + 4] == 0x30
            and data[i + 5] == 0x82
        ):
            hits.append(i)
    return hits
