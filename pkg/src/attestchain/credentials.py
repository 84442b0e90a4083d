"""Micro-credentials, the aggregate credential, and presentations.

A micro-credential proves one completed attestation phase; the aggregate
credential links every micro-credential id in phase order and marks the
attestation complete. Proof signatures cover the canonical encoding of the
credential document minus its ``proof`` member. Presentations bundle whole
credentials under a holder signature bound to a verifier challenge nonce.
"""

from __future__ import annotations

import enum
import json
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional

from . import canonical, keys
from .errors import (
    BadExpiry,
    ClaimWhitelistViolation,
    EmptyMicroSet,
    PhaseGap,
    SchemaViolation,
    UnauthorizedIssuer,
    UnknownCredential,
    UnknownDid,
    UnverifiedMicro,
)
from .registry import CredentialStatus, Registry, Role

MICRO_ID_PREFIX = "urn:attest:mc:"
AGGREGATE_ID_PREFIX = "urn:attest:vc:"

# Closed set of non-confidential step facts a micro-credential may claim.
CLAIM_KEYS = frozenset(
    {"step_outcome", "policy_ref", "office_code", "destination_country", "document_kind"}
)


class VerifyFailure(str, enum.Enum):
    BAD_SIGNATURE = "BadSignature"
    UNKNOWN_ISSUER = "UnknownIssuer"
    REVOKED = "Revoked"
    EXPIRED = "Expired"
    WRONG_ROLE = "WrongRole"
    PHASE_GAP = "PhaseGap"
    UNVERIFIED_MICRO = "UnverifiedMicro"
    NONCE_MISMATCH = "NonceMismatch"
    NONCE_REPLAYED = "NonceReplayed"
    BAD_HOLDER_SIGNATURE = "BadHolderSignature"
    MALFORMED = "Malformed"


@dataclass
class VerificationResult:
    ok: bool
    reason: Optional[VerifyFailure] = None
    detail: Optional[str] = None

    @classmethod
    def success(cls) -> "VerificationResult":
        return cls(True)

    @classmethod
    def failure(cls, reason: VerifyFailure, detail: Optional[str] = None) -> "VerificationResult":
        return cls(False, reason, detail)

    def to_dict(self) -> dict:
        doc: dict = {"ok": self.ok}
        if not self.ok:
            doc["reason"] = self.reason.value
            if self.detail is not None:
                doc["detail"] = self.detail
        return doc


@dataclass
class Proof:
    verification_method: str
    created: datetime
    signature: bytes

    def to_dict(self) -> dict:
        return {
            "verification_method": self.verification_method,
            "created": canonical.format_instant(self.created),
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Proof":
        return cls(
            verification_method=doc["verification_method"],
            created=canonical.parse_instant(doc["created"]),
            signature=bytes.fromhex(doc["signature"]),
        )


def _signing_payload(doc_with_proof: dict) -> bytes:
    body = {k: v for k, v in doc_with_proof.items() if k != "proof"}
    return canonical.canonical_bytes(body)


@dataclass
class MicroCredential:
    id: str
    issuer_did: str
    subject_did: str
    document_id: str
    phase_number: int
    phase_name: str
    issued_at: datetime
    claims: dict[str, str]
    proof: Proof
    expires_at: Optional[datetime] = None

    def to_dict(self) -> dict:
        doc = {
            "id": self.id,
            "issuer_did": self.issuer_did,
            "subject_did": self.subject_did,
            "document_id": self.document_id,
            "phase_number": self.phase_number,
            "phase_name": self.phase_name,
            "issued_at": canonical.format_instant(self.issued_at),
            "claims": dict(self.claims),
        }
        if self.expires_at is not None:
            doc["expires_at"] = canonical.format_instant(self.expires_at)
        doc["proof"] = self.proof.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "MicroCredential":
        return cls(
            id=doc["id"],
            issuer_did=doc["issuer_did"],
            subject_did=doc["subject_did"],
            document_id=doc["document_id"],
            phase_number=doc["phase_number"],
            phase_name=doc["phase_name"],
            issued_at=canonical.parse_instant(doc["issued_at"]),
            claims=dict(doc["claims"]),
            proof=Proof.from_dict(doc["proof"]),
            expires_at=canonical.parse_instant(doc["expires_at"]) if "expires_at" in doc else None,
        )

    def signing_payload(self) -> bytes:
        return _signing_payload(self.to_dict())


@dataclass
class AggregateCredential:
    id: str
    issuer_did: str
    holder_did: str
    holder_public_key: bytes
    micro_credential_ids: list[str]
    activation_date: datetime
    status: str  # issuance-time snapshot; the live registry is authoritative
    revocation_registry_ref: str
    proof: Proof
    expires_at: Optional[datetime] = None

    def to_dict(self) -> dict:
        doc = {
            "id": self.id,
            "issuer_did": self.issuer_did,
            "holder_did": self.holder_did,
            "holder_public_key": self.holder_public_key.hex(),
            "micro_credential_ids": list(self.micro_credential_ids),
            "activation_date": canonical.format_instant(self.activation_date),
            "status": self.status,
            "revocation_registry_ref": self.revocation_registry_ref,
        }
        if self.expires_at is not None:
            doc["expires_at"] = canonical.format_instant(self.expires_at)
        doc["proof"] = self.proof.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "AggregateCredential":
        return cls(
            id=doc["id"],
            issuer_did=doc["issuer_did"],
            holder_did=doc["holder_did"],
            holder_public_key=bytes.fromhex(doc["holder_public_key"]),
            micro_credential_ids=list(doc["micro_credential_ids"]),
            activation_date=canonical.parse_instant(doc["activation_date"]),
            status=doc["status"],
            revocation_registry_ref=doc["revocation_registry_ref"],
            proof=Proof.from_dict(doc["proof"]),
            expires_at=canonical.parse_instant(doc["expires_at"]) if "expires_at" in doc else None,
        )

    def signing_payload(self) -> bytes:
        return _signing_payload(self.to_dict())


@dataclass
class Presentation:
    credentials: list[dict]
    holder_did: str
    challenge_nonce: str
    created_at: datetime
    holder_signature: bytes

    def credential_ids(self) -> list[str]:
        return [doc.get("id", "") for doc in self.credentials]

    def signing_payload(self) -> bytes:
        return canonical.canonical_bytes(
            {
                "credential_ids": self.credential_ids(),
                "challenge_nonce": self.challenge_nonce,
                "created_at": canonical.format_instant(self.created_at),
            }
        )

    def to_dict(self) -> dict:
        return {
            "credentials": [dict(doc) for doc in self.credentials],
            "holder_did": self.holder_did,
            "challenge_nonce": self.challenge_nonce,
            "created_at": canonical.format_instant(self.created_at),
            "holder_signature": self.holder_signature.hex(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Presentation":
        return cls(
            credentials=[dict(c) for c in doc["credentials"]],
            holder_did=doc["holder_did"],
            challenge_nonce=doc["challenge_nonce"],
            created_at=canonical.parse_instant(doc["created_at"]),
            holder_signature=bytes.fromhex(doc["holder_signature"]),
        )


def validate_claims(claims: dict) -> None:
    if not isinstance(claims, dict):
        raise ClaimWhitelistViolation("claims must be a string-to-string map")
    for key, value in claims.items():
        if key not in CLAIM_KEYS:
            raise ClaimWhitelistViolation(f"claim key {key!r} is outside the whitelist")
        if not isinstance(value, str):
            raise ClaimWhitelistViolation(f"claim {key!r} must be a string")


def new_micro_id() -> str:
    return MICRO_ID_PREFIX + secrets.token_hex(16)


def new_aggregate_id() -> str:
    return AGGREGATE_ID_PREFIX + secrets.token_hex(16)


def issue_micro_credential(
    issuer_private_key: bytes,
    issuer_did: str,
    subject_did: str,
    document_id: str,
    phase_number: int,
    phase_name: str,
    claims: dict[str, str],
    registry: Registry,
    expires_at: Optional[datetime] = None,
    clock: Callable[[], datetime] = canonical.utc_now,
) -> MicroCredential:
    try:
        issuer = registry.resolve_did(issuer_did)
    except UnknownDid:
        raise UnauthorizedIssuer(f"{issuer_did} is not registered") from None
    if issuer.role is not Role.ATTESTING_ENTITY:
        raise UnauthorizedIssuer(f"role {issuer.role.value} may not issue micro-credentials")
    validate_claims(claims)
    if isinstance(phase_number, bool) or not isinstance(phase_number, int) or phase_number < 1:
        raise SchemaViolation("phase_number must be an integer >= 1")

    issued_at = clock()
    if expires_at is not None and expires_at <= issued_at:
        raise BadExpiry("expires_at must be strictly after issued_at")
    cred = MicroCredential(
        id=new_micro_id(),
        issuer_did=issuer_did,
        subject_did=subject_did,
        document_id=document_id,
        phase_number=phase_number,
        phase_name=phase_name,
        issued_at=issued_at,
        claims=dict(claims),
        expires_at=expires_at,
        proof=Proof(verification_method=f"{issuer_did}#key-1", created=issued_at, signature=b""),
    )
    cred.proof.signature = keys.sign(issuer_private_key, cred.signing_payload())
    return cred


def verify_micro_credential(
    cred: MicroCredential, registry: Registry, now: datetime
) -> VerificationResult:
    try:
        issuer = registry.resolve_did(cred.issuer_did)
    except UnknownDid:
        return VerificationResult.failure(VerifyFailure.UNKNOWN_ISSUER, cred.id)
    if not keys.verify(issuer.signing_key, cred.proof.signature, cred.signing_payload()):
        return VerificationResult.failure(VerifyFailure.BAD_SIGNATURE, cred.id)
    if issuer.role is not Role.ATTESTING_ENTITY:
        return VerificationResult.failure(VerifyFailure.WRONG_ROLE, cred.id)
    status = registry.credential_status(cred.id, now, cred.expires_at)
    if status is CredentialStatus.REVOKED:
        return VerificationResult.failure(VerifyFailure.REVOKED, cred.id)
    if status is CredentialStatus.EXPIRED:
        return VerificationResult.failure(VerifyFailure.EXPIRED, cred.id)
    return VerificationResult.success()


def _phases_complete(micros: list[MicroCredential]) -> bool:
    return [m.phase_number for m in micros] == list(range(1, len(micros) + 1))


def issue_aggregate_credential(
    issuer_private_key: bytes,
    issuer_did: str,
    holder_did: str,
    holder_public_key: bytes,
    micro_ids: list[str],
    micro_lookup: Callable[[str], Optional[MicroCredential]],
    registry: Registry,
    expires_at: Optional[datetime] = None,
    clock: Callable[[], datetime] = canonical.utc_now,
) -> AggregateCredential:
    if not micro_ids:
        raise EmptyMicroSet("an aggregate credential must reference at least one micro-credential")
    now = clock()
    micros: list[MicroCredential] = []
    for micro_id in micro_ids:
        micro = micro_lookup(micro_id)
        if micro is None:
            raise UnverifiedMicro(f"{micro_id} is not a known micro-credential")
        result = verify_micro_credential(micro, registry, now)
        if not result.ok:
            raise UnverifiedMicro(f"{micro_id} fails verification: {result.reason.value}")
        micros.append(micro)
    micros.sort(key=lambda m: m.phase_number)
    if len({m.id for m in micros}) != len(micros) or not _phases_complete(micros):
        raise PhaseGap("micro-credentials must cover phases 1..n exactly once")

    final = micros[-1]
    if final.issuer_did != issuer_did:
        raise UnauthorizedIssuer("only the final-phase attester may issue the aggregate credential")
    issuer = registry.resolve_did(issuer_did)

    cred = AggregateCredential(
        id=new_aggregate_id(),
        issuer_did=issuer_did,
        holder_did=holder_did,
        holder_public_key=holder_public_key,
        micro_credential_ids=[m.id for m in micros],
        activation_date=now,
        status="Valid",
        revocation_registry_ref=issuer.revocation_registry_ref or "registry/revocations",
        expires_at=expires_at,
        proof=Proof(verification_method=f"{issuer_did}#key-1", created=now, signature=b""),
    )
    cred.proof.signature = keys.sign(issuer_private_key, cred.signing_payload())
    return cred


def verify_aggregate_credential(
    cred: AggregateCredential,
    micro_lookup: Callable[[str], Optional[MicroCredential]],
    registry: Registry,
    now: datetime,
) -> VerificationResult:
    try:
        issuer = registry.resolve_did(cred.issuer_did)
    except UnknownDid:
        return VerificationResult.failure(VerifyFailure.UNKNOWN_ISSUER, cred.id)
    if not keys.verify(issuer.signing_key, cred.proof.signature, cred.signing_payload()):
        return VerificationResult.failure(VerifyFailure.BAD_SIGNATURE, cred.id)
    if issuer.role is not Role.ATTESTING_ENTITY:
        return VerificationResult.failure(VerifyFailure.WRONG_ROLE, cred.id)

    # Aggregate status first: a revoked aggregate fails even with clean micros.
    status = registry.credential_status(cred.id, now, cred.expires_at)
    if status is CredentialStatus.REVOKED:
        return VerificationResult.failure(VerifyFailure.REVOKED, cred.id)
    if status is CredentialStatus.EXPIRED:
        return VerificationResult.failure(VerifyFailure.EXPIRED, cred.id)

    if not cred.micro_credential_ids:
        return VerificationResult.failure(VerifyFailure.PHASE_GAP, cred.id)
    micros = []
    for micro_id in cred.micro_credential_ids:
        micro = micro_lookup(micro_id)
        if micro is None:
            return VerificationResult.failure(VerifyFailure.UNVERIFIED_MICRO, micro_id)
        result = verify_micro_credential(micro, registry, now)
        if not result.ok:
            return VerificationResult.failure(result.reason, micro_id)
        micros.append(micro)
    if len({m.id for m in micros}) != len(micros) or not _phases_complete(micros):
        return VerificationResult.failure(VerifyFailure.PHASE_GAP, cred.id)
    return VerificationResult.success()


def create_presentation(
    wallet,
    credential_ids: list[str],
    holder_private_key: bytes,
    challenge_nonce: str,
    clock: Callable[[], datetime] = canonical.utc_now,
) -> Presentation:
    """Bundle wallet credentials under a nonce-bound holder signature.

    The wallet records the disclosure (consent trail) before the
    presentation leaves it.
    """
    docs = []
    for cred_id in credential_ids:
        doc = wallet.credential_doc(cred_id)
        if doc is None:
            raise UnknownCredential(f"{cred_id} is not in the wallet")
        docs.append(doc)
    presentation = Presentation(
        credentials=docs,
        holder_did=wallet.owner_did,
        challenge_nonce=challenge_nonce,
        created_at=clock(),
        holder_signature=b"",
    )
    presentation.holder_signature = keys.sign(holder_private_key, presentation.signing_payload())
    wallet.record_disclosure(challenge_nonce, credential_ids)
    return presentation


def verify_presentation(
    presentation: Presentation,
    expected_nonce: str,
    registry: Registry,
    micro_lookup: Callable[[str], Optional[MicroCredential]],
    now: datetime,
    session: "VerifierSession",
) -> VerificationResult:
    if presentation.challenge_nonce != expected_nonce:
        return VerificationResult.failure(VerifyFailure.NONCE_MISMATCH)
    if session.is_used(expected_nonce):
        return VerificationResult.failure(VerifyFailure.NONCE_REPLAYED)
    try:
        holder = registry.resolve_did(presentation.holder_did)
    except UnknownDid:
        return VerificationResult.failure(VerifyFailure.BAD_HOLDER_SIGNATURE)
    if not keys.verify(holder.signing_key, presentation.holder_signature, presentation.signing_payload()):
        return VerificationResult.failure(VerifyFailure.BAD_HOLDER_SIGNATURE)

    # Micros embedded alongside an aggregate take precedence over the
    # caller-provided lookup so a presentation can stand on its own.
    embedded: dict[str, MicroCredential] = {}
    for doc in presentation.credentials:
        if str(doc.get("id", "")).startswith(MICRO_ID_PREFIX):
            try:
                micro = MicroCredential.from_dict(doc)
            except (KeyError, ValueError, TypeError):
                return VerificationResult.failure(VerifyFailure.MALFORMED, doc.get("id"))
            embedded[micro.id] = micro

    def lookup(micro_id: str) -> Optional[MicroCredential]:
        return embedded.get(micro_id) or micro_lookup(micro_id)

    for doc in presentation.credentials:
        cred_id = str(doc.get("id", ""))
        try:
            if cred_id.startswith(MICRO_ID_PREFIX):
                result = verify_micro_credential(MicroCredential.from_dict(doc), registry, now)
            elif cred_id.startswith(AGGREGATE_ID_PREFIX):
                result = verify_aggregate_credential(AggregateCredential.from_dict(doc), lookup, registry, now)
            else:
                return VerificationResult.failure(VerifyFailure.MALFORMED, cred_id or None)
        except (KeyError, ValueError, TypeError):
            return VerificationResult.failure(VerifyFailure.MALFORMED, cred_id or None)
        if not result.ok:
            return VerificationResult.failure(result.reason, result.detail or cred_id)

    session.mark_used(expected_nonce)
    return VerificationResult.success()


class VerifierSession:
    """Single-use challenge nonces for one verifier, persisted when rooted.

    A nonce is consumed by the first successful verification; replaying it
    is rejected outright.
    """

    def __init__(self, path: Optional[Path] = None):
        self._used: set[str] = set()
        self._path = path
        self._lock = threading.Lock()
        if path is not None and path.exists():
            self._used.update(
                line.strip() for line in path.read_text("utf-8").splitlines() if line.strip()
            )

    @staticmethod
    def new_nonce() -> str:
        return secrets.token_hex(16)

    def is_used(self, nonce: str) -> bool:
        return nonce in self._used

    def mark_used(self, nonce: str) -> None:
        with self._lock:
            self._used.add(nonce)
            if self._path is not None:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(nonce + "\n")


class CredentialStore:
    """Append-only record of every credential this deployment issued."""

    def __init__(self, path: Optional[Path] = None):
        self._docs: dict[str, dict] = {}
        self._path = path
        self._lock = threading.Lock()
        if path is not None and path.exists():
            for line in path.read_text("utf-8").splitlines():
                if line.strip():
                    doc = json.loads(line)
                    self._docs[doc["id"]] = doc

    def add(self, credential: MicroCredential | AggregateCredential) -> None:
        doc = credential.to_dict()
        with self._lock:
            self._docs[doc["id"]] = doc
            if self._path is not None:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with self._path.open("ab") as fh:
                    fh.write(canonical.canonical_bytes(doc) + b"\n")

    def micro(self, credential_id: str) -> Optional[MicroCredential]:
        doc = self._docs.get(credential_id)
        if doc is None or not credential_id.startswith(MICRO_ID_PREFIX):
            return None
        return MicroCredential.from_dict(doc)

    def aggregate(self, credential_id: str) -> Optional[AggregateCredential]:
        doc = self._docs.get(credential_id)
        if doc is None or not credential_id.startswith(AGGREGATE_ID_PREFIX):
            return None
        return AggregateCredential.from_dict(doc)

    def get_doc(self, credential_id: str) -> Optional[dict]:
        doc = self._docs.get(credential_id)
        return dict(doc) if doc is not None else None
