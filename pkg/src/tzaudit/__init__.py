"""tzaudit: certificate carving and downgrade analysis for TEE firmware.

The toolkit answers three questions about TrustZone images and
trustlets: which certificates are embedded in them, which image
versions a device would accept interchangeably (the downgrade surface),
and how a given rollback policy changes that.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .compat import (
    CertChain,
    Compatibility,
    CompatibilityGroup,
    CompatibilityVerdict,
    RollbackFlag,
    RollbackStatus,
    build_chains,
    cluster_images,
    compare_images,
    rollback_exposure,
)
from .catalog import (
    Catalog,
    ImageRecord,
    TrustletPackage,
    VendorLayout,
    assemble_package,
    classify_path,
    ingest,
    load_catalog,
)
from .scanner import (
    CandidateStatus,
    CertificateCandidate,
    ScanResult,
    export_certificate,
    find_pattern_hits,
    scan_file,
    scan_image,
)
from .simulator import (
    BootChain,
    BootReport,
    DevicePolicy,
    DeviceState,
    LoadStatus,
    LoadVerdict,
    RollbackPolicy,
    ScenarioConfig,
    ScenarioReport,
    SignedArtifact,
    SigningKey,
    apply_update,
    boot,
    load_scenario,
    run_scenario,
    verify_load,
)
from .x509 import (
    DistinguishedName,
    OuField,
    OuFieldName,
    ParsedCertificate,
    key_fingerprint,
    parse_certificate,
    parse_ou_field,
    render_dn,
)

__all__ = [name for name in dir() if not name.startswith("_")]
