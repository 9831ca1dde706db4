"""Exception types shared across the toolkit.

Decode errors subclass ValueError so callers that only care about
"bad input" can catch the usual built-in.
"""

from __future__ import annotations


class TzauditError(Exception):
    """Base class for every error raised by this package."""


# --- DER / X.509 decoding -------------------------------------------------

class DerError(TzauditError, ValueError):
    """Base class for DER decoding failures."""


class Truncated(DerError):
    """Declared length runs past the end of the buffer."""


class IndefiniteLength(DerError):
    """Length octet 0x80: BER indefinite form, forbidden in DER."""


class ReservedLengthForm(DerError):
    """Length octet 0xFF is reserved by X.690."""


class OverlongLength(DerError):
    """Long-form length with more than four length octets."""


class UnsupportedTag(DerError):
    """High-tag-number form (low five tag bits all set) is not supported."""


class MalformedCertificate(DerError):
    """Structure deviates from the X.509 v1/v3 certificate skeleton."""


class UnsupportedStringTag(DerError):
    """Directory string tag outside the supported set."""


# --- catalog --------------------------------------------------------------

class CatalogError(TzauditError):
    """Base class for catalog and package assembly failures."""


class MixedLayouts(CatalogError):
    """Input files classify to different vendor layouts or stems."""


class MissingMdt(CatalogError):
    """Qualcomm split package has segments but no .mdt."""


class DuplicateImageId(CatalogError):
    """image_id already present in the catalog."""


class UnknownImageId(CatalogError):
    """image_id not present in the catalog."""


class SchemaVersionMismatch(CatalogError):
    """Catalog file header declares an unsupported schema version."""


class IoFailure(CatalogError):
    """Filesystem error while reading or writing the catalog."""


# --- simulator ------------------------------------------------------------

class SimulatorError(TzauditError):
    """Base class for load/boot simulation failures."""


class UnknownArtifactName(SimulatorError):
    """Artifact name has no entry in the device policy."""


class LoadRejected(SimulatorError):
    """apply_update called with an artifact the policy rejects."""

    def __init__(self, verdict, message: str = ""):
        super().__init__(message or f"load rejected: {verdict}")
        self.verdict = verdict


class MissingArtifact(SimulatorError):
    """Boot chain references an artifact that is not installed."""


class ConfigError(TzauditError):
    """Scenario or CLI configuration problem; message carries the location."""
