"""Signing-key compatibility analysis.

Two images are mutually replaceable exactly when they share a signing
(leaf) key fingerprint: the secure loader checks the key, not the
version, so either image's payload verifies on a device trusting that
key. Sharing only a root or intermediate key is reported as a weaker
diagnostic and does not make images interchangeable. Whether a swapped
trustlet is API compatible with the surrounding TEE OS is not decidable
from certificates and is out of scope here.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Sequence

from .x509 import OuFieldName, ParsedCertificate

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from .catalog import ImageRecord


@dataclass(frozen=True)
class CertChain:
    """Certificates ordered leaf first; complete when the last is self-issued."""

    certificates: tuple[ParsedCertificate, ...]
    complete: bool
    notes: tuple[str, ...] = ()

    @property
    def leaf(self) -> ParsedCertificate:
        return self.certificates[0]


class Compatibility(str, Enum):
    MUTUAL = "MUTUAL"
    NONE = "NONE"


@dataclass(frozen=True)
class CompatibilityVerdict:
    verdict: Compatibility
    shared_keys: frozenset[str]  # leaf fingerprints (hex) common to both
    rationale: str


@dataclass(frozen=True)
class CompatibilityGroup:
    group_id: int
    members: frozenset[str]  # image_ids
    shared_keys: frozenset[str]  # fingerprints held by two or more members


class RollbackStatus(str, Enum):
    NO_SW_ID = "NO_SW_ID"
    SW_ID_VERSION_ZERO = "SW_ID_VERSION_ZERO"
    SW_ID_VERSIONED = "SW_ID_VERSIONED"


@dataclass(frozen=True)
class RollbackFlag:
    status: RollbackStatus
    raw_sw_id: str | None = None
    note: str = ""


def _issues(issuer_cand: ParsedCertificate, cert: ParsedCertificate) -> bool:
    return issuer_cand is not cert and issuer_cand.subject == cert.issuer


def _chain_depth(cert: ParsedCertificate, pool: list[ParsedCertificate]) -> int:
    """Longest issuer walk starting at cert using certificates from pool."""
    best = 0
    for i, cand in enumerate(pool):
        if _issues(cand, cert):
            rest = pool[:i] + pool[i + 1 :]
            best = max(best, 1 + _chain_depth(cand, rest))
    return best


def build_chains(certs: Sequence[ParsedCertificate]) -> list[CertChain]:
    """Group certificates into issuer chains, leaf first.

    Chains are built greedily from the leaves (certificates whose subject
    issues nothing else in the set) by following exact issuer DN matches.
    Ambiguous parents (duplicate subject DNs) resolve toward the longest
    chain, with a note recorded. Every certificate lands in exactly one
    chain; certificate sets with no leaf at all (issuer cycles) fall back
    to input order.
    """
    remaining = list(certs)
    chains: list[CertChain] = []

    while remaining:
        leaves = [
            c
            for c in remaining
            if not any(_issues(c, other) for other in remaining if other is not c)
        ]
        notes: list[str] = []
        if leaves:
            head = leaves[0]
        else:
            head = remaining[0]  # cycle: no true leaf exists
            notes.append("issuer cycle detected; chain starts at first input certificate")
        remaining.remove(head)

        chain = [head]
        current = head
        while current.subject != current.issuer:
            parents = [c for c in remaining if _issues(c, current)]
            if not parents:
                break
            if len(parents) > 1:
                pool_wo = lambda parent: [c for c in remaining if c is not parent]
                parents.sort(key=lambda p: -_chain_depth(p, pool_wo(p)))
                notes.append(
                    f"multiple certificates share subject {parents[0].subject}; "
                    "picked the one extending the longest chain"
                )
            current = parents[0]
            remaining.remove(current)
            chain.append(current)

        complete = chain[-1].subject == chain[-1].issuer
        chains.append(
            CertChain(certificates=tuple(chain), complete=complete, notes=tuple(notes))
        )

    return chains


def leaf_fingerprints(certs: Sequence[ParsedCertificate]) -> frozenset[str]:
    """Fingerprints (hex) of the signing certificates in ``certs``.

    A signing certificate is one whose subject issues no other
    certificate in the set. When chain building cannot name any leaf
    (issuer cycles), every fingerprint is included instead, which errs
    toward flagging compatibility rather than hiding it.
    """
    if not certs:
        return frozenset()
    chains = build_chains(certs)
    leaves = frozenset(
        chain.leaf.fingerprint_hex
        for chain in chains
        if not any("cycle" in note for note in chain.notes)
    )
    if leaves:
        return leaves
    return frozenset(c.fingerprint_hex for c in certs)


def compare_images(a: "ImageRecord", b: "ImageRecord") -> CompatibilityVerdict:
    """Decide whether two catalog records are mutually replaceable."""
    if not a.key_profile or not b.key_profile:
        empty = a.image_id if not a.key_profile else b.image_id
        return CompatibilityVerdict(
            verdict=Compatibility.NONE,
            shared_keys=frozenset(),
            rationale=f"no keys extracted from {empty}",
        )
    shared = frozenset(a.key_profile) & frozenset(b.key_profile)
    if shared:
        return CompatibilityVerdict(
            verdict=Compatibility.MUTUAL,
            shared_keys=shared,
            rationale=(
                f"{a.image_id} and {b.image_id} share {len(shared)} signing key(s); "
                "either payload verifies on a device trusting that key"
            ),
        )
    all_a = {c.fingerprint_hex for c in a.scan.certificates}
    all_b = {c.fingerprint_hex for c in b.scan.certificates}
    ca_shared = all_a & all_b
    if ca_shared:
        rationale = (
            f"no shared signing keys; {len(ca_shared)} shared CA/root key(s) "
            "is a weaker link and does not allow substitution"
        )
    else:
        rationale = "no shared keys at any chain level"
    return CompatibilityVerdict(
        verdict=Compatibility.NONE, shared_keys=frozenset(), rationale=rationale
    )


class _UnionFind:
    """Union-find over image ids with path compression and union by size."""

    def __init__(self, items: Iterable[str]):
        self.parent = {item: item for item in items}
        self.size = {item: 1 for item in self.parent}

    def find(self, item: str) -> str:
        root = item
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[item] != root:  # compress
            self.parent[item], item = root, self.parent[item]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


def cluster_images(records: Sequence["ImageRecord"]) -> list[CompatibilityGroup]:
    """Partition records into interchangeability groups.

    Records sharing any signing-key fingerprint merge transitively.
    Groups are numbered from 1 in order of their smallest member
    image_id so output is deterministic.
    """
    uf = _UnionFind(r.image_id for r in records)
    key_owner: dict[str, str] = {}
    for record in records:
        for fp in sorted(record.key_profile):
            if fp in key_owner:
                uf.union(key_owner[fp], record.image_id)
            else:
                key_owner[fp] = record.image_id

    components: dict[str, list["ImageRecord"]] = {}
    for record in records:
        components.setdefault(uf.find(record.image_id), []).append(record)

    groups = []
    for members in sorted(components.values(), key=lambda ms: min(m.image_id for m in ms)):
        holders: dict[str, int] = {}
        for record in members:
            for fp in record.key_profile:
                holders[fp] = holders.get(fp, 0) + 1
        groups.append(
            CompatibilityGroup(
                group_id=len(groups) + 1,
                members=frozenset(m.image_id for m in members),
                shared_keys=frozenset(fp for fp, n in holders.items() if n >= 2),
            )
        )
    return groups


def rollback_exposure(record: "ImageRecord") -> RollbackFlag:
    """Classify a record's SW_ID version field.

    The SW_ID is 64 bits: the upper 32 are the rollback version, the
    lower 32 the image type. An all-zero version half means every build
    of the image carries the same identity and rollback prevention has
    nothing to compare; that is the exposed case. The first SW_ID found
    on the record's signing certificates is inspected.
    """
    if not record.sw_id_fields:
        return RollbackFlag(status=RollbackStatus.NO_SW_ID)
    sw = record.sw_id_fields[0]
    if sw.name is not OuFieldName.SW_ID or len(sw.value_hex) != 16:
        return RollbackFlag(
            status=RollbackStatus.NO_SW_ID,
            raw_sw_id=sw.value_hex or None,
            note=f"MalformedSwId: expected 16 hex digits, got {sw.raw_text!r}",
        )
    version_half = sw.value_hex[:8]
    if version_half == "00000000":
        return RollbackFlag(status=RollbackStatus.SW_ID_VERSION_ZERO, raw_sw_id=sw.value_hex)
    return RollbackFlag(status=RollbackStatus.SW_ID_VERSIONED, raw_sw_id=sw.value_hex)
