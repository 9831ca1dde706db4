"""Chain-of-trust load simulator.

Models what a secure-boot verifier actually checks when an image loads:
the signature chains to a trusted key, and, only if the device enforces
a rollback counter, that the image version is not below the stored
minimum. Signatures are symbolic (key_id plus payload digest); no
cryptography is simulated, only the decision logic. The hardware root
(eFuse key material) is the axiomatically trusted stage 0.

A firmware update writes partitions without the verifier in the loop,
so a `replace` event substitutes bytes unverified; checks happen at the
next load or boot. Downgrade exposure falls out directly: with one
global signing key and no rollback counter, every artifact the key ever
signed stays loadable forever.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace as dc_replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import (
    ConfigError,
    LoadRejected,
    MissingArtifact,
    UnknownArtifactName,
)


class KeyScope(str, Enum):
    GLOBAL = "GLOBAL"
    PER_VERSION = "PER_VERSION"


@dataclass(frozen=True)
class SigningKey:
    key_id: str
    scope: KeyScope = KeyScope.GLOBAL
    version: int | None = None  # bound version when scope is PER_VERSION


@dataclass(frozen=True)
class SignedArtifact:
    name: str
    version: int  # non-negative
    key_id: str
    payload_digest: bytes
    vulnerable: bool = False  # annotation carried into reports, not checked


class RollbackPolicy(str, Enum):
    NONE = "NONE"
    VERSION_COUNTER = "VERSION_COUNTER"


@dataclass(frozen=True)
class DevicePolicy:
    trusted_keys: dict[str, frozenset[str]]  # artifact name -> accepted key ids
    rollback: RollbackPolicy
    counters: dict[str, int]  # meaningful only under VERSION_COUNTER
    keys: dict[str, SigningKey]  # key registry, resolves PER_VERSION scopes


class LoadStatus(str, Enum):
    ACCEPT = "ACCEPT"
    REJECT_KEY = "REJECT_KEY"
    REJECT_VERSION = "REJECT_VERSION"


@dataclass(frozen=True)
class LoadVerdict:
    status: LoadStatus
    detail: str

    def __bool__(self) -> bool:
        return self.status is LoadStatus.ACCEPT


@dataclass(frozen=True)
class DeviceState:
    policy: DevicePolicy
    installed: dict[str, SignedArtifact] = field(default_factory=dict)


@dataclass(frozen=True)
class BootChain:
    """Ordered stages of (loader name, names it verifies then loads)."""

    stages: tuple[tuple[str, tuple[str, ...]], ...]


@dataclass(frozen=True)
class BootStageResult:
    loader: str
    artifact: str
    version: int
    verdict: LoadVerdict
    vulnerable: bool


@dataclass(frozen=True)
class BootReport:
    results: tuple[BootStageResult, ...]
    success: bool
    aborted_at: str | None  # artifact name of the first rejected load
    vulnerable_loaded: tuple[str, ...]


def verify_load(policy: DevicePolicy, artifact: SignedArtifact) -> LoadVerdict:
    """Decide whether the verifier accepts ``artifact``.

    Key check first: the artifact's key must be in the trusted set for
    its name, and a PER_VERSION key only matches the version it is bound
    to. The version check applies only under VERSION_COUNTER; with no
    rollback prevention any version verifies.
    """
    if artifact.name not in policy.trusted_keys:
        raise UnknownArtifactName(f"policy has no trusted keys for {artifact.name!r}")

    accepted = policy.trusted_keys[artifact.name]
    key_ok = False
    for key_id in accepted:
        if key_id != artifact.key_id:
            continue
        key = policy.keys.get(key_id, SigningKey(key_id))
        if key.scope is KeyScope.PER_VERSION and key.version != artifact.version:
            continue
        key_ok = True
        break
    if not key_ok:
        return LoadVerdict(
            status=LoadStatus.REJECT_KEY,
            detail=(
                f"key {artifact.key_id!r} does not verify {artifact.name!r} "
                f"v{artifact.version} (trusted: {sorted(accepted)})"
            ),
        )

    if policy.rollback is RollbackPolicy.VERSION_COUNTER:
        minimum = policy.counters.get(artifact.name, 0)
        if artifact.version < minimum:
            return LoadVerdict(
                status=LoadStatus.REJECT_VERSION,
                detail=(
                    f"{artifact.name!r} v{artifact.version} below rollback "
                    f"counter {minimum}"
                ),
            )

    return LoadVerdict(
        status=LoadStatus.ACCEPT,
        detail=f"key {artifact.key_id!r} trusted for {artifact.name!r} v{artifact.version}",
    )


def apply_update(state: DeviceState, artifact: SignedArtifact) -> DeviceState:
    """Install through the verifier, advancing the rollback counter.

    Counters only move forward (max of old and new), so a sequence of
    updates can never lower one. Raises LoadRejected when the policy
    refuses the artifact.
    """
    verdict = verify_load(state.policy, artifact)
    if not verdict:
        raise LoadRejected(verdict, f"update of {artifact.name!r}: {verdict.detail}")
    installed = dict(state.installed)
    installed[artifact.name] = artifact
    policy = state.policy
    if policy.rollback is RollbackPolicy.VERSION_COUNTER:
        counters = dict(policy.counters)
        counters[artifact.name] = max(counters.get(artifact.name, 0), artifact.version)
        policy = dc_replace(policy, counters=counters)
    return DeviceState(policy=policy, installed=installed)


def replace_artifact(state: DeviceState, artifact: SignedArtifact) -> DeviceState:
    """Overwrite the installed artifact with no verification.

    This is the flashing step: partition writes are not checked, the
    verifier only runs at load or boot time.
    """
    installed = dict(state.installed)
    installed[artifact.name] = artifact
    return DeviceState(policy=state.policy, installed=installed)


def _check_chain(chain: BootChain) -> None:
    """Stage order must respect the load graph and the graph must be acyclic."""
    if not chain.stages:
        raise ConfigError("boot_chain: empty")
    root = chain.stages[0][0]
    loaded: set[str] = set()
    edges: dict[str, set[str]] = {}
    for i, (loader, loads) in enumerate(chain.stages):
        if loader != root and loader not in loaded:
            raise ConfigError(
                f"boot_chain[{i}]: loader {loader!r} runs before anything loaded it"
            )
        edges.setdefault(loader, set()).update(loads)
        loaded.update(loads)

    # Depth-first coloring over the loader->loaded edges.
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[str, int] = {}

    def visit(node: str) -> None:
        color[node] = GRAY
        for nxt in edges.get(node, ()):
            state = color.get(nxt, WHITE)
            if state == GRAY:
                raise ConfigError(f"boot_chain: cycle through {nxt!r}")
            if state == WHITE:
                visit(nxt)
        color[node] = BLACK

    for node in edges:
        if color.get(node, WHITE) == WHITE:
            visit(node)


def boot(state: DeviceState, chain: BootChain) -> BootReport:
    """Run the staged boot: each loader verifies its loads in order.

    The first rejected load aborts the boot. Artifacts flagged
    vulnerable that were accepted are listed in the report; the verifier
    has no notion of vulnerability, only keys and counters.
    """
    _check_chain(chain)
    results: list[BootStageResult] = []
    vulnerable: list[str] = []
    for loader, loads in chain.stages:
        for name in loads:
            if name not in state.installed:
                raise MissingArtifact(f"boot: {name!r} is not installed")
            artifact = state.installed[name]
            verdict = verify_load(state.policy, artifact)
            results.append(
                BootStageResult(
                    loader=loader,
                    artifact=name,
                    version=artifact.version,
                    verdict=verdict,
                    vulnerable=artifact.vulnerable,
                )
            )
            if not verdict:
                return BootReport(
                    results=tuple(results),
                    success=False,
                    aborted_at=name,
                    vulnerable_loaded=tuple(vulnerable),
                )
            if artifact.vulnerable:
                vulnerable.append(name)
    return BootReport(
        results=tuple(results),
        success=True,
        aborted_at=None,
        vulnerable_loaded=tuple(vulnerable),
    )


# --- scenario configs -------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    description: str
    policy: DevicePolicy
    artifacts: dict[str, SignedArtifact]  # artifact id -> definition
    events: tuple[dict[str, Any], ...]
    boot_chain: BootChain | None = None


@dataclass(frozen=True)
class ScenarioReport:
    name: str
    verdict: str  # DOWNGRADE_POSSIBLE or SAFE
    events: tuple[dict[str, Any], ...]
    vulnerable_loaded: tuple[str, ...]
    final_versions: dict[str, int]
    final_counters: dict[str, int]


def _digest_for(payload: str) -> bytes:
    return hashlib.sha256(payload.encode("utf-8")).digest()


def _resolve_version(value: Any, labels: dict[str, int], where: str) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{where}: version must be an integer or build label")
    if isinstance(value, int):
        if value < 0:
            raise ConfigError(f"{where}: version {value} is negative")
        return value
    if isinstance(value, str):
        if value not in labels:
            raise ConfigError(f"{where}: unknown build label {value!r}")
        return labels[value]
    raise ConfigError(f"{where}: version must be an integer or build label")


def _parse_artifact(data: Any, labels: dict[str, int], where: str) -> tuple[str, SignedArtifact]:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: artifact must be an object")
    for key in ("id", "name", "version", "key_id"):
        if key not in data:
            raise ConfigError(f"{where}.{key}: missing")
    version = _resolve_version(data["version"], labels, f"{where}.version")
    payload = data.get("payload", f"{data['name']}:{version}:{data['key_id']}")
    return data["id"], SignedArtifact(
        name=data["name"],
        version=version,
        key_id=data["key_id"],
        payload_digest=_digest_for(payload),
        vulnerable=bool(data.get("vulnerable", False)),
    )


def load_scenario(source: str | Path | dict) -> ScenarioConfig:
    """Parse and validate a scenario config (path or already-loaded dict).

    Validation errors carry the offending location, e.g.
    "events[2].artifact: unknown id 'widevine-v3'".
    """
    if isinstance(source, (str, Path)):
        try:
            data = json.loads(Path(source).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario {source} is not valid JSON: {exc}") from exc
    else:
        data = source
    if not isinstance(data, dict):
        raise ConfigError("scenario: top level must be an object")

    labels = data.get("build_labels", {})
    if not isinstance(labels, dict) or not all(
        isinstance(k, str) and isinstance(v, int) and not isinstance(v, bool)
        for k, v in labels.items()
    ):
        raise ConfigError("build_labels: must map label strings to integers")

    keys: dict[str, SigningKey] = {}
    for i, entry in enumerate(data.get("keys", [])):
        where = f"keys[{i}]"
        if not isinstance(entry, dict) or "key_id" not in entry:
            raise ConfigError(f"{where}: need key_id")
        scope_text = entry.get("scope", "GLOBAL")
        try:
            scope = KeyScope(scope_text)
        except ValueError:
            raise ConfigError(f"{where}.scope: {scope_text!r} is not GLOBAL or PER_VERSION")
        version = None
        if scope is KeyScope.PER_VERSION:
            if "version" not in entry:
                raise ConfigError(f"{where}.version: required for PER_VERSION keys")
            version = _resolve_version(entry["version"], labels, f"{where}.version")
        key = SigningKey(key_id=entry["key_id"], scope=scope, version=version)
        if key.key_id in keys:
            raise ConfigError(f"{where}.key_id: duplicate {key.key_id!r}")
        keys[key.key_id] = key

    artifacts: dict[str, SignedArtifact] = {}
    for i, entry in enumerate(data.get("artifacts", [])):
        art_id, artifact = _parse_artifact(entry, labels, f"artifacts[{i}]")
        if art_id in artifacts:
            raise ConfigError(f"artifacts[{i}].id: duplicate {art_id!r}")
        if artifact.key_id not in keys:
            raise ConfigError(f"artifacts[{i}].key_id: unknown key {artifact.key_id!r}")
        artifacts[art_id] = artifact

    pol = data.get("policy")
    if not isinstance(pol, dict):
        raise ConfigError("policy: missing or not an object")
    try:
        rollback = RollbackPolicy(pol.get("rollback", "NONE"))
    except ValueError:
        raise ConfigError(
            f"policy.rollback: {pol.get('rollback')!r} is not NONE or VERSION_COUNTER"
        )
    trusted_raw = pol.get("trusted_keys", {})
    if not isinstance(trusted_raw, dict):
        raise ConfigError("policy.trusted_keys: must be an object")
    trusted: dict[str, frozenset[str]] = {}
    for name, ids in trusted_raw.items():
        ids = [ids] if isinstance(ids, str) else ids
        if not isinstance(ids, list) or not ids:
            raise ConfigError(f"policy.trusted_keys.{name}: need at least one key id")
        for key_id in ids:
            if key_id not in keys:
                raise ConfigError(f"policy.trusted_keys.{name}: unknown key {key_id!r}")
        trusted[name] = frozenset(ids)
    counters_raw = pol.get("counters", {})
    if not isinstance(counters_raw, dict) or not all(
        isinstance(v, int) and not isinstance(v, bool) and v >= 0
        for v in counters_raw.values()
    ):
        raise ConfigError("policy.counters: must map names to non-negative integers")

    for art_id, artifact in artifacts.items():
        if artifact.name not in trusted:
            raise ConfigError(
                f"artifacts: {art_id!r} has name {artifact.name!r} "
                "with no policy.trusted_keys entry"
            )

    chain = None
    if "boot_chain" in data:
        stages_raw = data["boot_chain"]
        if not isinstance(stages_raw, list) or not stages_raw:
            raise ConfigError("boot_chain: must be a non-empty list")
        stages = []
        for i, stage in enumerate(stages_raw):
            if (
                not isinstance(stage, list)
                or len(stage) != 2
                or not isinstance(stage[0], str)
                or not isinstance(stage[1], list)
            ):
                raise ConfigError(f"boot_chain[{i}]: expected [loader, [names...]]")
            stages.append((stage[0], tuple(stage[1])))
        chain = BootChain(stages=tuple(stages))
        _check_chain(chain)

    events = data.get("events", [])
    if not isinstance(events, list):
        raise ConfigError("events: must be a list")
    known_ops = {"sign", "install", "replace", "load_trustlet", "boot"}
    for i, event in enumerate(events):
        if not isinstance(event, dict) or "do" not in event:
            raise ConfigError(f"events[{i}]: need a 'do' field")
        op = event["do"]
        if op not in known_ops:
            raise ConfigError(f"events[{i}].do: unknown op {op!r}")
        if op in ("install", "replace"):
            ref = event.get("artifact")
            if not isinstance(ref, str):
                raise ConfigError(f"events[{i}].artifact: need an artifact id")
            if ref not in artifacts and not any(
                e.get("do") == "sign" and isinstance(e.get("artifact"), dict)
                and e["artifact"].get("id") == ref
                for e in events[:i]
            ):
                raise ConfigError(f"events[{i}].artifact: unknown id {ref!r}")
        elif op == "load_trustlet":
            if not isinstance(event.get("name"), str):
                raise ConfigError(f"events[{i}].name: need an artifact name")
        elif op == "boot":
            if chain is None:
                raise ConfigError(f"events[{i}]: boot event but no boot_chain configured")
        elif op == "sign":
            art_id, artifact = _parse_artifact(
                event.get("artifact"), labels, f"events[{i}].artifact"
            )
            if artifact.key_id not in keys:
                raise ConfigError(f"events[{i}].artifact.key_id: unknown key")
            if artifact.name not in trusted:
                raise ConfigError(
                    f"events[{i}].artifact.name: {artifact.name!r} has no trusted_keys entry"
                )

    policy = DevicePolicy(
        trusted_keys=trusted, rollback=rollback, counters=dict(counters_raw), keys=keys
    )
    return ScenarioConfig(
        name=data.get("name", "unnamed"),
        description=data.get("description", ""),
        policy=policy,
        artifacts=artifacts,
        events=tuple(events),
        boot_chain=chain,
    )


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    """Replay the event list and report downgrade exposure.

    The final verdict is DOWNGRADE_POSSIBLE exactly when some replace
    that lowered an installed artifact's version was later accepted by
    the verifier (at load_trustlet or boot) while still installed.
    """
    state = DeviceState(policy=config.policy)
    artifacts = dict(config.artifacts)
    log: list[dict[str, Any]] = []
    downgraded: dict[str, SignedArtifact] = {}  # name -> replace artifact, if lower
    downgrade_accepted = False
    vulnerable_loaded: list[str] = []

    def note_accept(artifact: SignedArtifact) -> None:
        nonlocal downgrade_accepted
        if downgraded.get(artifact.name) is artifact:
            downgrade_accepted = True
        if artifact.vulnerable and artifact.name not in vulnerable_loaded:
            vulnerable_loaded.append(artifact.name)

    for i, event in enumerate(config.events):
        op = event["do"]
        entry: dict[str, Any] = {"event": op}
        if op == "sign":
            art_id, artifact = _parse_artifact(
                event["artifact"], {}, f"events[{i}].artifact"
            )
            artifacts[art_id] = artifact
            entry.update(artifact=art_id, name=artifact.name, version=artifact.version)
        elif op == "install":
            artifact = artifacts[event["artifact"]]
            try:
                state = apply_update(state, artifact)
            except LoadRejected as exc:
                entry.update(
                    artifact=event["artifact"],
                    verdict=exc.verdict.status.value,
                    detail=exc.verdict.detail,
                )
            else:
                note_accept(artifact)  # counts if this artifact arrived via replace
                downgraded.pop(artifact.name, None)
                entry.update(
                    artifact=event["artifact"],
                    verdict=LoadStatus.ACCEPT.value,
                    version=artifact.version,
                )
        elif op == "replace":
            artifact = artifacts[event["artifact"]]
            previous = state.installed.get(artifact.name)
            state = replace_artifact(state, artifact)
            if previous is not None and artifact.version < previous.version:
                downgraded[artifact.name] = artifact
                entry["downgrade"] = f"v{previous.version} -> v{artifact.version}"
            entry.update(artifact=event["artifact"], version=artifact.version)
        elif op == "load_trustlet":
            name = event["name"]
            if name not in state.installed:
                raise ConfigError(f"events[{i}]: nothing installed as {name!r}")
            artifact = state.installed[name]
            verdict = verify_load(state.policy, artifact)
            if verdict:
                note_accept(artifact)
            entry.update(
                name=name,
                version=artifact.version,
                verdict=verdict.status.value,
                detail=verdict.detail,
            )
        elif op == "boot":
            if config.boot_chain is None:
                raise ConfigError(f"events[{i}]: boot event but no boot_chain configured")
            report = boot(state, config.boot_chain)
            for result in report.results:
                if result.verdict:
                    note_accept(state.installed[result.artifact])
            entry.update(
                success=report.success,
                aborted_at=report.aborted_at,
                stages=[
                    {
                        "loader": r.loader,
                        "artifact": r.artifact,
                        "version": r.version,
                        "verdict": r.verdict.status.value,
                        "vulnerable": r.vulnerable,
                    }
                    for r in report.results
                ],
            )
        log.append(entry)

    return ScenarioReport(
        name=config.name,
        verdict="DOWNGRADE_POSSIBLE" if downgrade_accepted else "SAFE",
        events=tuple(log),
        vulnerable_loaded=tuple(vulnerable_loaded),
        final_versions={n: a.version for n, a in sorted(state.installed.items())},
        final_counters=dict(sorted(state.policy.counters.items()))
        if state.policy.rollback is RollbackPolicy.VERSION_COUNTER
        else {},
    )


def canned_scenario_names() -> list[str]:
    """Names of the scenario files shipped with the package."""
    names = []
    for entry in resources.files("tzaudit.scenarios").iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[: -len(".json")])
    return sorted(names)


def load_canned_scenario(name: str) -> ScenarioConfig:
    ref = resources.files("tzaudit.scenarios").joinpath(f"{name}.json")
    if not ref.is_file():
        raise ConfigError(
            f"no canned scenario {name!r}; available: {', '.join(canned_scenario_names())}"
        )
    return load_scenario(json.loads(ref.read_text(encoding="utf-8")))
