"""Certificate carving for firmware images.

Firmware blobs embed DER certificates with no framing, but every one of
them starts with two nested SEQUENCEs using two-octet long-form lengths:
30 82 xx xx 30 82. Scanning for that six-byte shape finds certificate
chains in TEE images regardless of vendor packaging. Extraction length
comes from the DER header itself, never from the distance to the next
pattern hit; that distance is kept only as a diagnostic when a candidate
fails to parse.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import DerError
from .x509 import ParsedCertificate, certificate_to_pem, parse_certificate

# Positions 0,1,4,5 fixed; 2,3 are the outer length octets.
CERT_PATTERN = re.compile(rb"(?=\x30\x82..\x30\x82)", re.DOTALL)
PATTERN_LEN = 6

# Candidates above this are junk hits, not certificates.
MAX_CANDIDATE_LEN = 64 * 1024

# Images are scanned in fixed windows with a PATTERN_LEN-1 byte overlap
# so a hit straddling a window boundary is never missed.
DEFAULT_WINDOW = 1 << 20


class CandidateStatus(str, Enum):
    VALIDATED = "VALIDATED"
    PARSE_FAILED = "PARSE_FAILED"
    TRUNCATED = "TRUNCATED"
    OVERSIZE = "OVERSIZE"


@dataclass(frozen=True)
class CertificateCandidate:
    """One pattern hit and what became of it."""

    offset: int
    declared_total_len: int
    status: CandidateStatus
    source_file: str = ""  # set when the scan covered a multi-file package
    note: str = ""  # parse diagnostic, including next-hit distance


@dataclass(frozen=True)
class ScanResult:
    image_id: str
    image_len: int
    candidates: tuple[CertificateCandidate, ...]
    certificates: tuple[ParsedCertificate, ...]

    @property
    def validated_count(self) -> int:
        return sum(1 for c in self.candidates if c.status is CandidateStatus.VALIDATED)


def find_pattern_hits(image: bytes, *, window: int = DEFAULT_WINDOW) -> list[int]:
    """All offsets where the six-byte certificate pattern matches.

    Overlapping hits are all reported; suppression happens later in
    scan_image once validated extents are known.
    """
    if window < PATTERN_LEN:
        raise ValueError(f"window must be at least {PATTERN_LEN}")
    n = len(image)
    hits: list[int] = []
    pos = 0
    while pos < n:
        end = min(pos + window, n)
        hits.extend(m.start() for m in CERT_PATTERN.finditer(image, pos, end))
        if end == n:
            break
        pos = end - (PATTERN_LEN - 1)
    return hits


def scan_image(image: bytes, image_id: str = "") -> ScanResult:
    """Carve certificates out of ``image``.

    Every pattern hit becomes a candidate unless it lies strictly inside
    a certificate already validated (nested SEQUENCEs of the certificate
    itself), or before the resume point. After a validated candidate at
    offset o scanning resumes at o+6, so back-to-back chain members are
    still examined.
    """
    hits = find_pattern_hits(image)
    candidates: list[CertificateCandidate] = []
    certificates: list[ParsedCertificate] = []
    validated_ranges: list[tuple[int, int]] = []
    resume_at = 0

    for i, offset in enumerate(hits):
        if offset < resume_at:
            continue
        declared = 4 + int.from_bytes(image[offset + 2 : offset + 4], "big")
        end = offset + declared
        if any(lo < offset and end <= hi for lo, hi in validated_ranges):
            continue
        if declared > MAX_CANDIDATE_LEN:
            candidates.append(
                CertificateCandidate(offset, declared, CandidateStatus.OVERSIZE)
            )
            continue
        if end > len(image):
            candidates.append(
                CertificateCandidate(offset, declared, CandidateStatus.TRUNCATED)
            )
            continue
        try:
            cert = parse_certificate(image[offset:end], source_offset=offset)
        except DerError as exc:
            next_hits = [h for h in hits[i + 1 :] if h > offset]
            distance = (next_hits[0] - offset) if next_hits else len(image) - offset
            candidates.append(
                CertificateCandidate(
                    offset,
                    declared,
                    CandidateStatus.PARSE_FAILED,
                    note=f"{type(exc).__name__}: {exc} (next pattern hit {distance} bytes on)",
                )
            )
        else:
            candidates.append(
                CertificateCandidate(offset, declared, CandidateStatus.VALIDATED)
            )
            certificates.append(cert)
            validated_ranges.append((offset, end))
            resume_at = offset + PATTERN_LEN

    return ScanResult(
        image_id=image_id,
        image_len=len(image),
        candidates=tuple(candidates),
        certificates=tuple(certificates),
    )


def scan_file(path: str | Path, image_id: str | None = None) -> ScanResult:
    p = Path(path)
    return scan_image(p.read_bytes(), image_id=image_id or p.name)


def export_certificate(result: ScanResult, index: int, fmt: str = "der") -> bytes | str:
    """Return certificate ``index`` from a scan as DER bytes or PEM text.

    DER output is bit-exact with the image slice. Raises IndexError for
    an index outside the validated list and ValueError for other formats.
    """
    if not 0 <= index < len(result.certificates):
        raise IndexError(
            f"certificate index {index} out of range 0..{len(result.certificates) - 1}"
        )
    cert = result.certificates[index]
    if fmt == "der":
        return cert.raw_der
    if fmt == "pem":
        return certificate_to_pem(cert.raw_der)
    raise ValueError(f"unknown export format {fmt!r}")
