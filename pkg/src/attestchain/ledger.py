"""Append-only hash-linked attestation chains.

One chain per attestation request, one JSONL file per chain. Blocks carry a
whitelisted payload (identifiers, DIDs, phase numbers, timestamps, country
code, policy refs — nothing else), a SHA-256 hash link to the previous
block, and the attester's Ed25519 signature over
``index(8 BE) || prev_hash || payload_hash``. The block hash covers that
preimage plus the signature. Verification accepts arbitrary input and
returns a report, never raises.
"""

from __future__ import annotations

import enum
import json
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable, Optional

from . import canonical, keys
from .errors import AttestError, SchemaViolation, UnknownChain, UnknownDid, UnresolvableSigner

ZERO_HASH = bytes(32)
_COUNTRY_RE = re.compile(r"^[A-Z]{2}$")
_CHAIN_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


class BlockKind(str, enum.Enum):
    REQUEST_OPENED = "RequestOpened"
    STEP_COMPLETED = "StepCompleted"
    ATTESTATION_FINALIZED = "AttestationFinalized"
    ATTESTATION_REVOKED = "AttestationRevoked"
    ATTESTATION_EXPIRED = "AttestationExpired"


# Exact field whitelist per kind, on top of the base fields every payload
# carries. Presence is mandatory; anything else is rejected.
BASE_FIELDS = ("kind", "document_id", "subject_did", "attester_did", "timestamp", "policy_refs")
KIND_FIELDS = {
    BlockKind.REQUEST_OPENED: ("destination_country",),
    BlockKind.STEP_COMPLETED: ("micro_credential_id", "phase_number"),
    BlockKind.ATTESTATION_FINALIZED: ("aggregate_credential_id",),
    BlockKind.ATTESTATION_REVOKED: ("aggregate_credential_id",),
    BlockKind.ATTESTATION_EXPIRED: ("aggregate_credential_id",),
}


class FailureReason(str, enum.Enum):
    HASH_MISMATCH = "HashMismatch"
    LINK_BROKEN = "LinkBroken"
    BAD_SIGNATURE = "BadSignature"
    SCHEMA_VIOLATION = "SchemaViolation"
    ORDER_VIOLATION = "OrderViolation"


@dataclass
class BlockPayload:
    kind: BlockKind
    document_id: str
    subject_did: str
    attester_did: str
    timestamp: Optional[datetime] = None  # stamped by the store at append time
    policy_refs: list[str] = field(default_factory=list)
    destination_country: Optional[str] = None
    micro_credential_id: Optional[str] = None
    aggregate_credential_id: Optional[str] = None
    phase_number: Optional[int] = None

    def to_dict(self) -> dict:
        # Tolerates raw (non-enum kind, unparsed timestamp) values so that
        # verification can re-encode arbitrary stored input and let the
        # schema check judge it.
        doc = {
            "kind": self.kind.value if isinstance(self.kind, BlockKind) else self.kind,
            "document_id": self.document_id,
            "subject_did": self.subject_did,
            "attester_did": self.attester_did,
            "policy_refs": list(self.policy_refs),
        }
        if self.timestamp is not None:
            doc["timestamp"] = (
                canonical.format_instant(self.timestamp)
                if isinstance(self.timestamp, datetime)
                else self.timestamp
            )
        for name in ("destination_country", "micro_credential_id", "aggregate_credential_id", "phase_number"):
            value = getattr(self, name)
            if value is not None:
                doc[name] = value
        return doc

    @classmethod
    def from_dict(cls, doc: dict, validate: bool = True) -> "BlockPayload":
        """Parse a stored payload. With ``validate=False`` raw values are
        kept as-is for verification to reject via its schema check."""
        if validate:
            validate_payload_dict(doc)
        try:
            kind = BlockKind(doc.get("kind"))
        except ValueError:
            kind = doc.get("kind")
        timestamp = doc.get("timestamp")
        if canonical.is_instant(timestamp):
            timestamp = canonical.parse_instant(timestamp)
        return cls(
            kind=kind,
            document_id=doc.get("document_id"),
            subject_did=doc.get("subject_did"),
            attester_did=doc.get("attester_did"),
            timestamp=timestamp,
            policy_refs=list(doc.get("policy_refs", [])),
            destination_country=doc.get("destination_country"),
            micro_credential_id=doc.get("micro_credential_id"),
            aggregate_credential_id=doc.get("aggregate_credential_id"),
            phase_number=doc.get("phase_number"),
        )


def _require_str(doc: dict, name: str) -> None:
    value = doc.get(name)
    if not isinstance(value, str) or not value:
        raise SchemaViolation(f"{name} must be a non-empty string")


def validate_payload_dict(doc: dict) -> None:
    """Enforce the privacy whitelist: exactly the fields for the kind."""
    if not isinstance(doc, dict):
        raise SchemaViolation("payload must be an object")
    kind_value = doc.get("kind")
    try:
        kind = BlockKind(kind_value)
    except ValueError:
        raise SchemaViolation(f"unknown payload kind {kind_value!r}") from None

    allowed = set(BASE_FIELDS) | set(KIND_FIELDS[kind])
    extra = set(doc) - allowed
    if extra:
        raise SchemaViolation(f"fields not allowed for {kind.value}: {sorted(extra)}")
    missing = allowed - set(doc)
    if missing:
        raise SchemaViolation(f"fields required for {kind.value}: {sorted(missing)}")

    for name in ("document_id", "subject_did", "attester_did"):
        _require_str(doc, name)
    if not canonical.is_instant(doc["timestamp"]):
        raise SchemaViolation("timestamp must be an RFC 3339 UTC instant with seconds precision")
    refs = doc["policy_refs"]
    if not isinstance(refs, list) or any(not isinstance(r, str) for r in refs):
        raise SchemaViolation("policy_refs must be a list of strings")

    if kind is BlockKind.REQUEST_OPENED:
        country = doc["destination_country"]
        if not isinstance(country, str) or not _COUNTRY_RE.match(country):
            raise SchemaViolation("destination_country must be an ISO-3166 alpha-2 code")
    if kind is BlockKind.STEP_COMPLETED:
        _require_str(doc, "micro_credential_id")
        phase = doc["phase_number"]
        if isinstance(phase, bool) or not isinstance(phase, int) or phase < 1:
            raise SchemaViolation("phase_number must be an integer >= 1")
    if kind in (
        BlockKind.ATTESTATION_FINALIZED,
        BlockKind.ATTESTATION_REVOKED,
        BlockKind.ATTESTATION_EXPIRED,
    ):
        _require_str(doc, "aggregate_credential_id")


def canonical_encode(payload: BlockPayload | dict) -> bytes:
    """Deterministic canonical bytes of a schema-valid payload."""
    doc = payload.to_dict() if isinstance(payload, BlockPayload) else dict(payload)
    validate_payload_dict(doc)
    return canonical.canonical_bytes(doc)


def _signing_preimage(index: int, prev_hash: bytes, payload_hash: bytes) -> bytes:
    return index.to_bytes(8, "big") + prev_hash + payload_hash


def _block_hash(index: int, prev_hash: bytes, payload_hash: bytes, signature: bytes) -> bytes:
    return canonical.sha256(_signing_preimage(index, prev_hash, payload_hash) + signature)


@dataclass
class AttestationBlock:
    index: int
    prev_hash: bytes
    payload: BlockPayload
    payload_hash: bytes
    attester_signature: bytes
    block_hash: bytes

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "prev_hash": self.prev_hash.hex(),
            "payload": self.payload.to_dict(),
            "payload_hash": self.payload_hash.hex(),
            "attester_signature": self.attester_signature.hex(),
            "block_hash": self.block_hash.hex(),
        }

    @classmethod
    def from_dict(cls, doc: dict, validate: bool = True) -> "AttestationBlock":
        return cls(
            index=doc["index"],
            prev_hash=bytes.fromhex(doc["prev_hash"]),
            payload=BlockPayload.from_dict(doc["payload"], validate=validate),
            payload_hash=bytes.fromhex(doc["payload_hash"]),
            attester_signature=bytes.fromhex(doc["attester_signature"]),
            block_hash=bytes.fromhex(doc["block_hash"]),
        )


@dataclass
class ChainVerificationReport:
    valid: bool
    first_invalid_index: Optional[int] = None
    failure_reason: Optional[FailureReason] = None

    def to_dict(self) -> dict:
        doc: dict = {"valid": self.valid}
        if self.first_invalid_index is not None:
            doc["first_invalid_index"] = self.first_invalid_index
            doc["failure_reason"] = self.failure_reason.value
        return doc


class _OrderFold:
    """Replays the event-order rules: genesis first, phases 1..n with no
    gaps, one finalization, terminal revoke/expire only after it."""

    def __init__(self):
        self.next_phase = 1
        self.finalized = False
        self.terminal = False

    def step(self, position: int, payload: BlockPayload) -> bool:
        kind = payload.kind
        if position == 0:
            return kind is BlockKind.REQUEST_OPENED
        if kind is BlockKind.REQUEST_OPENED or self.terminal:
            return False
        if kind is BlockKind.STEP_COMPLETED:
            if self.finalized or payload.phase_number != self.next_phase:
                return False
            self.next_phase += 1
            return True
        if kind is BlockKind.ATTESTATION_FINALIZED:
            if self.finalized:
                return False
            self.finalized = True
            return True
        # revoked / expired
        if not self.finalized:
            return False
        self.terminal = True
        return True


def verify_chain(blocks: Iterable[AttestationBlock], registry) -> ChainVerificationReport:
    """Pure verification of an arbitrary block sequence.

    valid=True iff every block passes hash, link, signature, schema, and
    event-order checks. Malformed input yields a report, never an exception.
    """
    fold = _OrderFold()
    prev_hash = ZERO_HASH
    for i, block in enumerate(blocks):
        reason = _check_block(block, i, prev_hash, fold, registry)
        if reason is not None:
            return ChainVerificationReport(False, i, reason)
        prev_hash = block.block_hash
    return ChainVerificationReport(True)


def _check_block(block, position, prev_hash, fold, registry) -> Optional[FailureReason]:
    try:
        payload_bytes = canonical_encode(block.payload)
    except AttestError:
        return FailureReason.SCHEMA_VIOLATION
    if canonical.sha256(payload_bytes) != block.payload_hash:
        return FailureReason.HASH_MISMATCH
    if block.prev_hash != prev_hash:
        return FailureReason.LINK_BROKEN
    try:
        signer = registry.resolve_did(block.payload.attester_did)
    except UnknownDid:
        return FailureReason.BAD_SIGNATURE
    preimage = _signing_preimage(block.index, block.prev_hash, block.payload_hash)
    if not keys.verify(signer.signing_key, block.attester_signature, preimage):
        return FailureReason.BAD_SIGNATURE
    if _block_hash(block.index, block.prev_hash, block.payload_hash, block.attester_signature) != block.block_hash:
        return FailureReason.HASH_MISMATCH
    if block.index != position or not fold.step(position, block.payload):
        return FailureReason.ORDER_VIOLATION
    return None


class LedgerStore:
    """File-backed chains; single writer per chain, concurrent reads.

    Timestamps are stamped here from the store clock at append time —
    callers never supply them.
    """

    def __init__(self, root: Path | str, registry, clock: Callable[[], datetime] = canonical.utc_now):
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._registry = registry
        self._clock = clock
        self._chains: dict[str, list[AttestationBlock]] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._store_lock = threading.Lock()
        self._load()

    def _load(self) -> None:
        for path in sorted(self._root.glob("*.chain.jsonl"), key=lambda p: p.stat().st_mtime):
            chain_id = path.name[: -len(".chain.jsonl")]
            blocks = [
                AttestationBlock.from_dict(json.loads(line))
                for line in path.read_text("utf-8").splitlines()
                if line.strip()
            ]
            self._chains[chain_id] = blocks

    def _chain_path(self, chain_id: str) -> Path:
        return self._root / f"{chain_id}.chain.jsonl"

    def _chain_lock(self, chain_id: str) -> threading.Lock:
        with self._store_lock:
            return self._locks.setdefault(chain_id, threading.Lock())

    def chain_exists(self, chain_id: str) -> bool:
        return chain_id in self._chains

    def chain(self, chain_id: str) -> list[AttestationBlock]:
        if chain_id not in self._chains:
            raise UnknownChain(f"no chain {chain_id!r}")
        return list(self._chains[chain_id])

    def chain_ids(self) -> list[str]:
        return list(self._chains)

    def append_block(
        self,
        chain_id: str,
        payload: BlockPayload,
        signer_private_key: bytes,
        signer_did: str,
    ) -> AttestationBlock:
        if not _CHAIN_ID_RE.match(chain_id or ""):
            raise SchemaViolation(f"chain id {chain_id!r} is not filesystem-safe")
        try:
            signer = self._registry.resolve_did(signer_did)
        except UnknownDid:
            raise UnresolvableSigner(f"{signer_did} is not registered") from None
        if payload.attester_did != signer_did:
            raise SchemaViolation("payload.attester_did must match the signing DID")

        with self._chain_lock(chain_id):
            blocks = self._chains.get(chain_id)
            if blocks is None:
                if payload.kind is not BlockKind.REQUEST_OPENED:
                    raise UnknownChain(f"no chain {chain_id!r}; only RequestOpened may open one")
                blocks = []
            elif payload.kind is BlockKind.REQUEST_OPENED:
                raise SchemaViolation(f"chain {chain_id!r} is already open")

            payload.timestamp = self._clock()
            payload_bytes = canonical_encode(payload)
            payload_hash = canonical.sha256(payload_bytes)
            index = len(blocks)
            prev_hash = blocks[-1].block_hash if blocks else ZERO_HASH
            signature = keys.sign(signer_private_key, _signing_preimage(index, prev_hash, payload_hash))
            if not keys.verify(signer.signing_key, signature, _signing_preimage(index, prev_hash, payload_hash)):
                raise UnresolvableSigner("provided key does not match the registered signing key")
            block = AttestationBlock(
                index=index,
                prev_hash=prev_hash,
                payload=payload,
                payload_hash=payload_hash,
                attester_signature=signature,
                block_hash=_block_hash(index, prev_hash, payload_hash, signature),
            )
            with self._chain_path(chain_id).open("ab") as fh:
                fh.write(canonical.canonical_bytes(block.to_dict()) + b"\n")
            if chain_id not in self._chains:
                self._chains[chain_id] = []
            self._chains[chain_id].append(block)
            return block

    def chain_for_document(
        self, document_id: str, destination_country: Optional[str] = None
    ) -> list[tuple[str, list[AttestationBlock]]]:
        """Every chain whose genesis carries document_id, in append order."""
        found = []
        for chain_id, blocks in self._chains.items():
            if not blocks:
                continue
            genesis = blocks[0].payload
            if genesis.kind is not BlockKind.REQUEST_OPENED or genesis.document_id != document_id:
                continue
            if destination_country is not None and genesis.destination_country != destination_country:
                continue
            found.append((chain_id, list(blocks)))
        return found
