"""Verifiable data registry: DID documents and the revocation registry.

Append-only, file-backed (``registry/dids.jsonl`` and
``registry/revocations.jsonl``), serialized writes, concurrent reads.
Every signature verification anywhere in the system resolves its key here.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional

from . import canonical, keys
from .errors import (
    AlreadyRevoked,
    DuplicateDid,
    InvariantViolation,
    MalformedKey,
    UnauthorizedIssuer,
    UnknownDid,
)

DID_PREFIX = "did:attest:"


class Role(str, enum.Enum):
    HOLDER = "Holder"
    ATTESTING_ENTITY = "AttestingEntity"
    VERIFIER = "Verifier"
    CREDENTIAL_ISSUER = "CredentialIssuer"


class CredentialStatus(str, enum.Enum):
    ACTIVE = "Active"
    REVOKED = "Revoked"
    EXPIRED = "Expired"


class RevocationReason(str, enum.Enum):
    REVOKED = "Revoked"
    EXPIRED = "Expired"


def derive_did(signing_key: bytes) -> str:
    """did:attest:<base58 of first 16 bytes of SHA-256(signing key)>."""
    keys.load_verify_key(signing_key)
    return DID_PREFIX + canonical.base58_encode(canonical.sha256(signing_key)[:16])


@dataclass
class DidDocument:
    did: str
    signing_key: bytes
    key_agreement_key: bytes
    role: Role
    created_at: datetime
    service_endpoint: Optional[str] = None
    revocation_registry_ref: Optional[str] = None
    privacy_notes: Optional[str] = None

    def to_dict(self) -> dict:
        doc = {
            "did": self.did,
            "signing_key": self.signing_key.hex(),
            "key_agreement_key": self.key_agreement_key.hex(),
            "role": self.role.value,
            "created_at": canonical.format_instant(self.created_at),
        }
        if self.service_endpoint is not None:
            doc["service_endpoint"] = self.service_endpoint
        if self.revocation_registry_ref is not None:
            doc["revocation_registry_ref"] = self.revocation_registry_ref
        if self.privacy_notes is not None:
            doc["privacy_notes"] = self.privacy_notes
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "DidDocument":
        return cls(
            did=doc["did"],
            signing_key=bytes.fromhex(doc["signing_key"]),
            key_agreement_key=bytes.fromhex(doc["key_agreement_key"]),
            role=Role(doc["role"]),
            created_at=canonical.parse_instant(doc["created_at"]),
            service_endpoint=doc.get("service_endpoint"),
            revocation_registry_ref=doc.get("revocation_registry_ref"),
            privacy_notes=doc.get("privacy_notes"),
        )

    def check_invariants(self) -> None:
        if derive_did(self.signing_key) != self.did:
            raise InvariantViolation("did does not derive from signing_key")
        if self.signing_key == self.key_agreement_key:
            raise InvariantViolation("signing and key-agreement keys must be distinct")
        keys.load_agreement_key(self.key_agreement_key)


@dataclass
class RevocationEntry:
    credential_id: str
    reason: RevocationReason
    recorded_at: datetime
    issuer_did: str
    issuer_signature: bytes

    def signing_payload(self) -> bytes:
        return canonical.canonical_bytes(
            {
                "credential_id": self.credential_id,
                "reason": self.reason.value,
                "recorded_at": canonical.format_instant(self.recorded_at),
            }
        )

    def to_dict(self) -> dict:
        return {
            "credential_id": self.credential_id,
            "reason": self.reason.value,
            "recorded_at": canonical.format_instant(self.recorded_at),
            "issuer_did": self.issuer_did,
            "issuer_signature": self.issuer_signature.hex(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RevocationEntry":
        return cls(
            credential_id=doc["credential_id"],
            reason=RevocationReason(doc["reason"]),
            recorded_at=canonical.parse_instant(doc["recorded_at"]),
            issuer_did=doc["issuer_did"],
            issuer_signature=bytes.fromhex(doc["issuer_signature"]),
        )


def create_did(
    signing_key: bytes,
    key_agreement_key: bytes,
    role: Role,
    service_endpoint: Optional[str] = None,
    clock: Callable[[], datetime] = canonical.utc_now,
) -> DidDocument:
    """Build an (unregistered) DID document; the DID string is a pure
    function of the signing key."""
    keys.load_verify_key(signing_key)
    keys.load_agreement_key(key_agreement_key)
    if signing_key == key_agreement_key:
        raise MalformedKey("signing and key-agreement keys must be distinct")
    return DidDocument(
        did=derive_did(signing_key),
        signing_key=signing_key,
        key_agreement_key=key_agreement_key,
        role=Role(role),
        created_at=clock(),
        service_endpoint=service_endpoint,
    )


class Registry:
    """DID documents plus the flat signed append-only revocation list."""

    REVOKER_ROLES = (Role.ATTESTING_ENTITY, Role.CREDENTIAL_ISSUER)

    def __init__(self, root: Path | str | None = None, clock: Callable[[], datetime] = canonical.utc_now):
        self._dids: dict[str, DidDocument] = {}
        self._revocations: dict[str, RevocationEntry] = {}
        self._lock = threading.RLock()
        self._clock = clock
        self._root = Path(root) if root is not None else None
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)
            self._load()

    # -- persistence ----------------------------------------------------

    def _dids_file(self) -> Path:
        return self._root / "dids.jsonl"

    def _revocations_file(self) -> Path:
        return self._root / "revocations.jsonl"

    def _load(self) -> None:
        import json

        if self._dids_file().exists():
            for line in self._dids_file().read_text("utf-8").splitlines():
                if line.strip():
                    doc = DidDocument.from_dict(json.loads(line))
                    self._dids[doc.did] = doc
        if self._revocations_file().exists():
            for line in self._revocations_file().read_text("utf-8").splitlines():
                if line.strip():
                    entry = RevocationEntry.from_dict(json.loads(line))
                    self._revocations.setdefault(entry.credential_id, entry)

    def _append_line(self, path: Path, doc: dict) -> None:
        if self._root is None:
            return
        with path.open("ab") as fh:
            fh.write(canonical.canonical_bytes(doc) + b"\n")

    # -- operations ------------------------------------------------------

    def register_did(self, doc: DidDocument) -> dict:
        doc.check_invariants()
        with self._lock:
            if doc.did in self._dids:
                raise DuplicateDid(f"{doc.did} already registered")
            self._dids[doc.did] = doc
            self._append_line(self._dids_file(), doc.to_dict())
        return {"registered": doc.did}

    def resolve_did(self, did: str) -> DidDocument:
        doc = self._dids.get(did)
        if doc is None:
            raise UnknownDid(f"{did} is not registered")
        return doc

    def has_did(self, did: str) -> bool:
        return did in self._dids

    def revoke_credential(
        self,
        credential_id: str,
        reason: RevocationReason,
        issuer_private_key: bytes,
        issuer_did: str,
    ) -> RevocationEntry:
        issuer = self.resolve_did(issuer_did)
        if issuer.role not in self.REVOKER_ROLES:
            raise UnauthorizedIssuer(f"role {issuer.role.value} may not write revocations")
        with self._lock:
            if credential_id in self._revocations:
                raise AlreadyRevoked(f"{credential_id} already has a status entry")
            entry = RevocationEntry(
                credential_id=credential_id,
                reason=RevocationReason(reason),
                recorded_at=self._clock(),
                issuer_did=issuer_did,
                issuer_signature=b"",
            )
            entry.issuer_signature = keys.sign(issuer_private_key, entry.signing_payload())
            if not keys.verify(issuer.signing_key, entry.issuer_signature, entry.signing_payload()):
                raise UnauthorizedIssuer("signing key does not match the registered key")
            self._revocations[credential_id] = entry
            self._append_line(self._revocations_file(), entry.to_dict())
        return entry

    def revocation_entry(self, credential_id: str) -> Optional[RevocationEntry]:
        return self._revocations.get(credential_id)

    def credential_status(
        self,
        credential_id: str,
        now: datetime,
        expires_at: Optional[datetime] = None,
    ) -> CredentialStatus:
        """Revoked beats Expired; expiry comes from an entry or expires_at."""
        entry = self._revocations.get(credential_id)
        if entry is not None and entry.reason is RevocationReason.REVOKED:
            return CredentialStatus.REVOKED
        if entry is not None and entry.reason is RevocationReason.EXPIRED:
            return CredentialStatus.EXPIRED
        if expires_at is not None and expires_at < now:
            return CredentialStatus.EXPIRED
        return CredentialStatus.ACTIVE

    def all_dids(self) -> list[DidDocument]:
        return list(self._dids.values())
