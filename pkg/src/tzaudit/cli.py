"""Command line interface.

Exit codes are part of the contract so the tool scripts cleanly:

    0  success / images mutual / scenario safe
    1  I/O or usage problem
    2  configuration problem (scenario or package structure)
    3  scan found nothing
    4  images not compatible
    5  scenario shows a downgrade is possible

The default catalog path comes from TZAUDIT_CATALOG when set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, catalog as catalog_mod, report as report_mod
from .compat import Compatibility, cluster_images, compare_images
from .errors import (
    CatalogError,
    ConfigError,
    DuplicateImageId,
    MissingMdt,
    MixedLayouts,
    SchemaVersionMismatch,
    TzauditError,
    UnknownImageId,
)
from .scanner import CandidateStatus, ScanResult, export_certificate, scan_file
from .simulator import load_canned_scenario, load_scenario, run_scenario
from .x509 import render_dn

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NOTHING_FOUND = 3
EXIT_NOT_COMPATIBLE = 4
EXIT_DOWNGRADE = 5

DEFAULT_CATALOG = "tzaudit-catalog.ndjson"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad arguments; 2 means "config problem" here,
    # so route usage failures to exit 1 instead.
    def error(self, message):
        raise _UsageError(message)


def _default_catalog_path() -> str:
    return os.environ.get("TZAUDIT_CATALOG", DEFAULT_CATALOG)


def _emit(payload, as_json: bool, text: str) -> None:
    if as_json:
        print(json.dumps(payload, indent=2))
    else:
        print(text)


def _emit_error(message: str, kind: str, as_json: bool) -> None:
    if as_json:
        print(json.dumps({"error": {"type": kind, "message": message}}), file=sys.stderr)
    else:
        print(f"error: {message}", file=sys.stderr)


def _scan_text(result: ScanResult) -> str:
    lines = [f"{result.image_id}: {result.image_len} bytes, "
             f"{len(result.candidates)} candidate(s), "
             f"{len(result.certificates)} certificate(s)"]
    certs = iter(result.certificates)
    for cand in result.candidates:
        lines.append(
            f"  0x{cand.offset:08X}  len={cand.declared_total_len:<6d} {cand.status.value}"
            + (f"  [{cand.source_file}]" if cand.source_file else "")
        )
        if cand.status is CandidateStatus.VALIDATED:
            cert = next(certs)
            lines.append(f"              subject: {render_dn(cert.subject)}")
            lines.append(f"              issuer:  {render_dn(cert.issuer)}")
            lines.append(f"              key sha256: {cert.fingerprint_hex}")
        elif cand.note:
            lines.append(f"              {cand.note}")
    return "\n".join(lines)


def cmd_scan(args) -> int:
    try:
        result = scan_file(args.image, image_id=args.image_id)
    except OSError as exc:
        _emit_error(str(exc), "IoFailure", args.json)
        return EXIT_IO

    if args.export_dir:
        out = Path(args.export_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, cert in enumerate(result.certificates):
            stem = f"{result.image_id}.{i:02d}.0x{cert.source_offset:X}"
            (out / f"{stem}.der").write_bytes(export_certificate(result, i, "der"))
            (out / f"{stem}.pem").write_text(export_certificate(result, i, "pem"))

    _emit(report_mod.scan_summary(result), args.json, _scan_text(result))
    return EXIT_OK if result.certificates else EXIT_NOTHING_FOUND


def cmd_compare(args) -> int:
    cat = catalog_mod.load_catalog(args.catalog)
    verdict = compare_images(cat.get(args.image_a), cat.get(args.image_b))
    payload = {
        "verdict": verdict.verdict.value,
        "shared_keys": sorted(verdict.shared_keys),
        "rationale": verdict.rationale,
    }
    _emit(payload, args.json, f"{verdict.verdict.value}: {verdict.rationale}")
    return EXIT_OK if verdict.verdict is Compatibility.MUTUAL else EXIT_NOT_COMPATIBLE


def cmd_cluster(args) -> int:
    cat = catalog_mod.load_catalog(args.catalog)
    groups = cluster_images(cat.records)
    payload = [
        {
            "group_id": g.group_id,
            "members": sorted(g.members),
            "shared_keys": sorted(g.shared_keys),
        }
        for g in groups
    ]
    text_lines = [
        f"group {g.group_id}: {', '.join(sorted(g.members))}"
        f" ({len(g.shared_keys)} shared key(s))"
        for g in groups
    ]
    _emit(payload, args.json, "\n".join(text_lines) if text_lines else "catalog is empty")
    return EXIT_OK


def cmd_catalog_add(args) -> int:
    cat = catalog_mod.load_catalog(args.catalog)
    if len(args.paths) == 1 and catalog_mod.classify_path(args.paths[0]) in (
        catalog_mod.VendorLayout.MONOLITHIC_TZ,
        catalog_mod.VendorLayout.UNKNOWN,
    ):
        source = Path(args.paths[0])
    else:
        source = catalog_mod.assemble_package(args.paths)
        for warning in source.warnings:
            print(f"warning: {warning}", file=sys.stderr)
    image_id = args.image_id or Path(args.paths[0]).name
    record = catalog_mod.ingest(
        cat, source, image_id, build_label=args.build_label, force=args.force
    )
    payload = {
        "image_id": record.image_id,
        "certificates": len(record.scan.certificates),
        "key_profile": sorted(record.key_profile),
    }
    _emit(
        payload,
        args.json,
        f"ingested {record.image_id}: {len(record.scan.certificates)} certificate(s), "
        f"{len(record.key_profile)} signing key(s)",
    )
    return EXIT_OK


def cmd_catalog_list(args) -> int:
    cat = catalog_mod.load_catalog(args.catalog)
    payload = [
        {
            "image_id": r.image_id,
            "vendor_hint": r.vendor_hint,
            "build_label": r.build_label,
            "certificates": len(r.scan.certificates),
            "key_profile": sorted(r.key_profile),
        }
        for r in cat.records
    ]
    lines = [
        f"{r.image_id}  [{r.vendor_hint}]"
        + (f"  build={r.build_label}" if r.build_label else "")
        + f"  certs={len(r.scan.certificates)}"
        for r in cat.records
    ]
    _emit(payload, args.json, "\n".join(lines) if lines else "catalog is empty")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if Path(args.scenario).exists():
        config = load_scenario(args.scenario)
    else:
        config = load_canned_scenario(args.scenario)
    result = run_scenario(config)
    payload = report_mod.scenario_report_to_dict(result)
    text_lines = [f"scenario {result.name}: {result.verdict}"]
    for event in result.events:
        text_lines.append("  " + json.dumps(event))
    if result.vulnerable_loaded:
        text_lines.append(f"  vulnerable artifacts loaded: {', '.join(result.vulnerable_loaded)}")
    _emit(payload, args.json, "\n".join(text_lines))
    return EXIT_DOWNGRADE if result.verdict == "DOWNGRADE_POSSIBLE" else EXIT_OK


def cmd_report(args) -> int:
    cat = catalog_mod.load_catalog(args.catalog)
    scenario_reports = []
    for path in args.scenario or []:
        if Path(path).exists():
            config = load_scenario(path)
        else:
            config = load_canned_scenario(path)
        scenario_reports.append(run_scenario(config))
    doc = report_mod.build_report(cat, scenario_reports)
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tzaudit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tzaudit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_output_flags(p):
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--json", action="store_true", help="machine readable output")
        mode.add_argument("--text", dest="json", action="store_false", help="human readable output (default)")
        p.set_defaults(json=False)

    def add_catalog_flag(p):
        p.add_argument(
            "--catalog",
            default=_default_catalog_path(),
            help="catalog path (default: $TZAUDIT_CATALOG or ./tzaudit-catalog.ndjson)",
        )

    p = sub.add_parser("scan", help="carve certificates out of an image file")
    p.add_argument("image")
    p.add_argument("--image-id", default=None, help="identifier for the output (default: basename)")
    p.add_argument("--export-dir", default=None, help="write each certificate as DER and PEM here")
    add_output_flags(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("compare", help="decide whether two cataloged images are interchangeable")
    p.add_argument("image_a")
    p.add_argument("image_b")
    add_catalog_flag(p)
    add_output_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cluster", help="group cataloged images by shared signing keys")
    add_catalog_flag(p)
    add_output_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("catalog", help="manage the image catalog")
    cat_sub = p.add_subparsers(dest="catalog_command", required=True, parser_class=_Parser)

    pa = cat_sub.add_parser("add", help="scan files and add them as one record")
    pa.add_argument("paths", nargs="+")
    pa.add_argument("--image-id", default=None)
    pa.add_argument("--build-label", default="")
    pa.add_argument("--force", action="store_true", help="replace an existing record")
    add_catalog_flag(pa)
    add_output_flags(pa)
    pa.set_defaults(func=cmd_catalog_add)

    pl = cat_sub.add_parser("list", help="list catalog records")
    add_catalog_flag(pl)
    add_output_flags(pl)
    pl.set_defaults(func=cmd_catalog_list)

    p = sub.add_parser("simulate", help="run a downgrade scenario (path or canned name)")
    p.add_argument("scenario")
    add_output_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="emit the full audit report as JSON")
    add_catalog_flag(p)
    p.add_argument("--out", default=None, help="write to this path instead of stdout")
    p.add_argument(
        "--scenario",
        action="append",
        default=None,
        help="scenario (path or canned name) to include; repeatable",
    )
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _emit_error(str(exc), "UsageError", as_json=False)
        return EXIT_IO

    as_json = getattr(args, "json", False)
    try:
        return args.func(args)
    except (MixedLayouts, MissingMdt, ConfigError) as exc:
        _emit_error(str(exc), type(exc).__name__, as_json)
        return EXIT_CONFIG
    except (UnknownImageId, DuplicateImageId, SchemaVersionMismatch, CatalogError) as exc:
        _emit_error(str(exc), type(exc).__name__, as_json)
        return EXIT_IO
    except TzauditError as exc:
        _emit_error(str(exc), type(exc).__name__, as_json)
        return EXIT_IO
    except OSError as exc:
        _emit_error(str(exc), "IoFailure", as_json)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
