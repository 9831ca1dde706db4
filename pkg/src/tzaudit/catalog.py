"""Trustlet and TZ image catalog.

Vendors package TEE binaries differently: Qualcomm splits a trustlet
into a .mdt header plus .b00-.bNN segments, Trustonic ships single
<uuid>.tlbin files, Huawei single <uuid>.sec files, and the TrustZone
OS itself sits in monolithic partitions named tz, tzb, tzBackup or
tz.mbn. Classification keys on the file name only; the scanner runs on
the bytes regardless of layout, so an unknown layout still gets scanned.

The catalog persists as NDJSON: a header line carrying schema_version,
then one record per line. Raw firmware bytes are never stored, only
digests, offsets and the extracted certificates (base64 DER).
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from . import compat
from .errors import (
    DuplicateImageId,
    IoFailure,
    MissingMdt,
    MixedLayouts,
    SchemaVersionMismatch,
    UnknownImageId,
)
from .scanner import (
    CandidateStatus,
    CertificateCandidate,
    ScanResult,
    scan_image,
)
from .x509 import OuField, OuFieldName, ParsedCertificate, parse_certificate

SCHEMA_VERSION = "1"
_HEADER_FORMAT = "tzaudit-catalog"

_UUID_RE = re.compile(r"^[0-9a-fA-F-]+$")
_SEGMENT_RE = re.compile(r"^(?P<stem>.+)\.b(?P<num>\d{2})$")
_MDT_RE = re.compile(r"^(?P<stem>.+)\.mdt$")
_MONOLITHIC_NAMES = {"tz", "tzb", "tzbackup", "tz.mbn"}


class VendorLayout(str, Enum):
    QC_SPLIT = "QC_SPLIT"
    TRUSTONIC_TLBIN = "TRUSTONIC_TLBIN"
    HUAWEI_SEC = "HUAWEI_SEC"
    MONOLITHIC_TZ = "MONOLITHIC_TZ"
    UNKNOWN = "UNKNOWN"


def _is_uuid_stem(stem: str) -> bool:
    # 32 hex digits, hyphens optional.
    return bool(_UUID_RE.match(stem)) and len(stem.replace("-", "")) == 32


def classify_path(path: str | Path) -> VendorLayout:
    """Classify a file into a vendor layout from its basename alone."""
    name = Path(path).name
    if name.lower() in _MONOLITHIC_NAMES:
        return VendorLayout.MONOLITHIC_TZ
    if _MDT_RE.match(name) or _SEGMENT_RE.match(name):
        return VendorLayout.QC_SPLIT
    stem, dot, ext = name.rpartition(".")
    if dot and ext == "tlbin" and _is_uuid_stem(stem):
        return VendorLayout.TRUSTONIC_TLBIN
    if dot and ext == "sec" and _is_uuid_stem(stem):
        return VendorLayout.HUAWEI_SEC
    return VendorLayout.UNKNOWN


@dataclass(frozen=True)
class TrustletPackage:
    """The files making up one logical trustlet or TZ image."""

    name: str
    layout: VendorLayout
    files: tuple[tuple[str, bytes], ...]  # (path, bytes), load order
    origin_path: str
    warnings: tuple[str, ...] = ()


def assemble_package(
    paths: Sequence[str | Path],
    bytes_loader: Callable[[str], bytes] | None = None,
) -> TrustletPackage:
    """Group files into a package, enforcing layout coherence.

    For QC_SPLIT the .mdt comes first, then segments in numeric order;
    gaps in the segment numbering and a missing segment list are
    recorded as warnings, not errors. All other layouts take exactly one
    file. Files of differing layouts or differing Qualcomm stems raise
    MixedLayouts.
    """
    if not paths:
        raise MixedLayouts("no input files")
    loader = bytes_loader or (lambda p: Path(p).read_bytes())
    entries = [(str(p), classify_path(p)) for p in paths]

    layouts = {layout for _p, layout in entries}
    if len(layouts) > 1:
        raise MixedLayouts(f"inputs span layouts {sorted(l.value for l in layouts)}")
    layout = entries[0][1]
    warnings: list[str] = []

    if layout is VendorLayout.QC_SPLIT:
        mdts: list[tuple[str, str]] = []
        segments: list[tuple[int, str, str]] = []
        for p, _l in entries:
            name = Path(p).name
            m = _MDT_RE.match(name)
            if m:
                mdts.append((m.group("stem"), p))
                continue
            m = _SEGMENT_RE.match(name)
            segments.append((int(m.group("num")), m.group("stem"), p))
        stems = {s for s, _p in mdts} | {s for _n, s, _p in segments}
        if len(stems) > 1:
            raise MixedLayouts(f"mixed Qualcomm stems {sorted(stems)}")
        if not mdts:
            raise MissingMdt(f"segments present but no .mdt for stem {next(iter(stems))!r}")
        if len(mdts) > 1:
            raise MixedLayouts(f"multiple .mdt files for stem {mdts[0][0]!r}")
        stem = mdts[0][0]
        segments.sort()
        if not segments:
            warnings.append("NoSegments: .mdt with no .bNN segments")
        else:
            nums = [n for n, _s, _p in segments]
            if nums != list(range(nums[0], nums[0] + len(nums))):
                warnings.append(f"NonContiguousSegments: have {nums}")
        ordered = [mdts[0][1]] + [p for _n, _s, p in segments]
        name = stem
    else:
        if len(entries) != 1:
            raise MixedLayouts(
                f"layout {layout.value} packages exactly one file, got {len(entries)}"
            )
        ordered = [entries[0][0]]
        base = Path(ordered[0]).name
        name = base[: -len(".mbn")] if base.lower().endswith(".mbn") else Path(base).stem or base

    files = tuple((p, loader(p)) for p in ordered)
    parents = {str(Path(p).parent) for p, _b in files}
    origin = parents.pop() if len(parents) == 1 else os.path.commonpath(sorted(parents))
    return TrustletPackage(
        name=name,
        layout=layout,
        files=files,
        origin_path=origin,
        warnings=tuple(warnings),
    )


@dataclass(frozen=True)
class FileRef:
    name: str
    size: int
    sha256: str


@dataclass(frozen=True)
class SourceRef:
    layout: VendorLayout
    origin_path: str
    files: tuple[FileRef, ...]


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    vendor_hint: str
    build_label: str
    source: SourceRef
    scan: ScanResult
    key_profile: frozenset[str]  # signing-key fingerprints, hex
    sw_id_fields: tuple[OuField, ...]
    content_digest: str  # sha256 over the files in package order


class Catalog:
    """Append-ordered image records backed by one NDJSON file."""

    def __init__(self, storage_path: str | Path, records: list[ImageRecord] | None = None):
        self.storage_path = Path(storage_path)
        self.records: list[ImageRecord] = list(records or [])
        self.diagnostics: list[str] = []  # load-time parse problems, not persisted

    def get(self, image_id: str) -> ImageRecord:
        for record in self.records:
            if record.image_id == image_id:
                return record
        raise UnknownImageId(f"no record with image_id {image_id!r}")

    def __contains__(self, image_id: str) -> bool:
        return any(r.image_id == image_id for r in self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Catalog) and self.records == other.records

    def save(self) -> None:
        """Write header plus one record per line; atomic via rename."""
        tmp = self.storage_path.with_suffix(self.storage_path.suffix + ".tmp")
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(
                    json.dumps({"schema_version": SCHEMA_VERSION, "format": _HEADER_FORMAT})
                    + "\n"
                )
                for record in self.records:
                    fh.write(json.dumps(_record_to_dict(record), sort_keys=False) + "\n")
            os.replace(tmp, self.storage_path)
        except OSError as exc:
            raise IoFailure(f"cannot write catalog {self.storage_path}: {exc}") from exc


def load_catalog(storage_path: str | Path) -> Catalog:
    """Load a catalog; a missing or empty file yields an empty catalog.

    Corrupted record lines are skipped and reported in the catalog's
    diagnostics with their line numbers. An unsupported header version
    raises SchemaVersionMismatch.
    """
    path = Path(storage_path)
    catalog = Catalog(path)
    if not path.exists():
        return catalog
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read catalog {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not any(line.strip() for line in lines):
        return catalog

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaVersionMismatch(f"unreadable catalog header: {exc}") from exc
    if not isinstance(header, dict) or "schema_version" not in header:
        raise SchemaVersionMismatch("catalog header lacks schema_version")
    if header["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"catalog schema {header['schema_version']!r}, supported {SCHEMA_VERSION!r}"
        )

    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            catalog.records.append(_record_from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            catalog.diagnostics.append(f"line {lineno}: skipped ({exc})")
    return catalog


def ingest(
    catalog: Catalog,
    source: TrustletPackage | str | Path,
    image_id: str,
    build_label: str = "",
    force: bool = False,
) -> ImageRecord:
    """Scan a package (or single image file) and append the record.

    The record is content addressed: its digest covers the input bytes,
    so re-ingesting identical bytes with force=True is idempotent. The
    catalog file is rewritten on every successful ingest.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        source = TrustletPackage(
            name=path.name,
            layout=classify_path(path),
            files=((str(path), path.read_bytes()),),
            origin_path=str(path.parent),
        )

    existing = image_id in catalog
    if existing and not force:
        raise DuplicateImageId(f"image_id {image_id!r} already in catalog (use force)")

    candidates: list[CertificateCandidate] = []
    certificates: list[ParsedCertificate] = []
    total = 0
    for path, data in source.files:
        basename = Path(path).name
        sub = scan_image(data, image_id=f"{image_id}:{basename}")
        total += len(data)
        candidates.extend(replace(c, source_file=basename) for c in sub.candidates)
        certificates.extend(sub.certificates)
    scan = ScanResult(
        image_id=image_id,
        image_len=total,
        candidates=tuple(candidates),
        certificates=tuple(certificates),
    )

    key_profile = compat.leaf_fingerprints(certificates)
    leaf_set = {fp for fp in key_profile}
    sw_id_fields = tuple(
        f
        for cert in certificates
        if cert.fingerprint_hex in leaf_set
        for f in cert.ou_fields
        if f.name is OuFieldName.SW_ID
    )

    digest = hashlib.sha256()
    refs = []
    for path, data in source.files:
        digest.update(data)
        refs.append(
            FileRef(name=Path(path).name, size=len(data), sha256=hashlib.sha256(data).hexdigest())
        )

    record = ImageRecord(
        image_id=image_id,
        vendor_hint=source.layout.value,
        build_label=build_label,
        source=SourceRef(
            layout=source.layout, origin_path=source.origin_path, files=tuple(refs)
        ),
        scan=scan,
        key_profile=key_profile,
        sw_id_fields=sw_id_fields,
        content_digest=digest.hexdigest(),
    )

    if existing:
        catalog.records = [
            record if r.image_id == image_id else r for r in catalog.records
        ]
    else:
        catalog.records.append(record)
    catalog.save()
    return record


# --- NDJSON codec ----------------------------------------------------------

def _candidate_to_dict(c: CertificateCandidate) -> dict:
    out = {
        "offset": c.offset,
        "declared_total_len": c.declared_total_len,
        "status": c.status.value,
    }
    if c.source_file:
        out["source_file"] = c.source_file
    if c.note:
        out["note"] = c.note
    return out


def _record_to_dict(record: ImageRecord) -> dict:
    return {
        "image_id": record.image_id,
        "vendor_hint": record.vendor_hint,
        "build_label": record.build_label,
        "content_digest": record.content_digest,
        "source": {
            "layout": record.source.layout.value,
            "origin_path": record.source.origin_path,
            "files": [
                {"name": f.name, "size": f.size, "sha256": f.sha256}
                for f in record.source.files
            ],
        },
        "scan": {
            "image_id": record.scan.image_id,
            "image_len": record.scan.image_len,
            "candidates": [_candidate_to_dict(c) for c in record.scan.candidates],
            "certificates": [
                {
                    "source_offset": cert.source_offset,
                    "der_b64": base64.b64encode(cert.raw_der).decode("ascii"),
                }
                for cert in record.scan.certificates
            ],
        },
        "key_profile": sorted(record.key_profile),
        "sw_id_fields": [
            {
                "raw_text": f.raw_text,
                "name": f.name.value,
                "tag_code": f.tag_code,
                "value_hex": f.value_hex,
            }
            for f in record.sw_id_fields
        ],
    }


def _record_from_dict(data: dict) -> ImageRecord:
    scan_data = data["scan"]
    candidates = tuple(
        CertificateCandidate(
            offset=c["offset"],
            declared_total_len=c["declared_total_len"],
            status=CandidateStatus(c["status"]),
            source_file=c.get("source_file", ""),
            note=c.get("note", ""),
        )
        for c in scan_data["candidates"]
    )
    certificates = tuple(
        parse_certificate(
            base64.b64decode(c["der_b64"]), source_offset=c["source_offset"]
        )
        for c in scan_data["certificates"]
    )
    scan = ScanResult(
        image_id=scan_data["image_id"],
        image_len=scan_data["image_len"],
        candidates=candidates,
        certificates=certificates,
    )
    src = data["source"]
    return ImageRecord(
        image_id=data["image_id"],
        vendor_hint=data["vendor_hint"],
        build_label=data["build_label"],
        source=SourceRef(
            layout=VendorLayout(src["layout"]),
            origin_path=src["origin_path"],
            files=tuple(
                FileRef(name=f["name"], size=f["size"], sha256=f["sha256"])
                for f in src["files"]
            ),
        ),
        scan=scan,
        key_profile=frozenset(data["key_profile"]),
        sw_id_fields=tuple(
            OuField(
                raw_text=f["raw_text"],
                name=OuFieldName(f["name"]),
                tag_code=f["tag_code"],
                value_hex=f["value_hex"],
            )
            for f in data["sw_id_fields"]
        ),
        content_digest=data["content_digest"],
    )
