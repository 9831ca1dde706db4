"""Audit report assembly.

One JSON document gathering scan results, key profiles, compatibility
groups, rollback flags and any scenario runs. Field order is fixed so
reports diff cleanly between runs; the fingerprint algorithm is named
explicitly so a future digest change is visible in the data.
"""

from __future__ import annotations

from typing import Any

from . import __version__
from .catalog import Catalog, ImageRecord
from .compat import cluster_images, rollback_exposure
from .scanner import ScanResult
from .simulator import ScenarioReport
from .x509 import ParsedCertificate, render_dn

REPORT_SCHEMA_VERSION = "1"
FINGERPRINT_ALGORITHM = "sha256"

_CAVEAT_API = (
    "Key-level interchangeability says nothing about API compatibility "
    "between a trustlet and the surrounding TEE OS; that is not decidable "
    "from certificates and is not checked."
)


def certificate_summary(cert: ParsedCertificate) -> dict[str, Any]:
    return {
        "source_offset": cert.source_offset,
        "total_len": cert.total_len,
        "serial_hex": cert.serial_hex,
        "subject": render_dn(cert.subject),
        "issuer": render_dn(cert.issuer),
        "not_before": cert.not_before.isoformat(),
        "not_after": cert.not_after.isoformat(),
        "key_fingerprint": cert.fingerprint_hex,
        "ou_fields": [
            {
                "name": f.name.value,
                "tag_code": f.tag_code,
                "value_hex": f.value_hex,
                "raw_text": f.raw_text,
            }
            for f in cert.ou_fields
        ],
    }


def scan_summary(scan: ScanResult) -> dict[str, Any]:
    return {
        "image_id": scan.image_id,
        "image_len": scan.image_len,
        "candidates": [
            {
                "offset": c.offset,
                "offset_hex": f"0x{c.offset:X}",
                "declared_total_len": c.declared_total_len,
                "status": c.status.value,
                **({"source_file": c.source_file} if c.source_file else {}),
                **({"note": c.note} if c.note else {}),
            }
            for c in scan.candidates
        ],
        "certificates": [certificate_summary(c) for c in scan.certificates],
    }


def _image_section(record: ImageRecord) -> dict[str, Any]:
    flag = rollback_exposure(record)
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
        "scan": scan_summary(record.scan),
        "key_profile": sorted(record.key_profile),
        "rollback": {
            "status": flag.status.value,
            "raw_sw_id": flag.raw_sw_id,
            **({"note": flag.note} if flag.note else {}),
        },
    }


def scenario_report_to_dict(report: ScenarioReport) -> dict[str, Any]:
    return {
        "name": report.name,
        "verdict": report.verdict,
        "vulnerable_loaded": list(report.vulnerable_loaded),
        "final_versions": report.final_versions,
        "final_counters": report.final_counters,
        "events": list(report.events),
    }


def build_report(
    catalog: Catalog, scenario_reports: list[ScenarioReport] | None = None
) -> dict[str, Any]:
    """Assemble the full audit report for a catalog."""
    records = catalog.records
    groups = cluster_images(records)
    flags = []
    for r in records:
        flag = rollback_exposure(r)
        flags.append(
            {
                "image_id": r.image_id,
                "status": flag.status.value,
                "raw_sw_id": flag.raw_sw_id,
            }
        )
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
        "key_fingerprint_algorithm": FINGERPRINT_ALGORITHM,
        "caveats": [_CAVEAT_API],
        "images": [_image_section(r) for r in records],
        "compatibility_groups": [
            {
                "group_id": g.group_id,
                "members": sorted(g.members),
                "shared_keys": sorted(g.shared_keys),
            }
            for g in groups
        ],
        "rollback_flags": flags,
        "scenarios": [scenario_report_to_dict(s) for s in (scenario_reports or [])],
    }
