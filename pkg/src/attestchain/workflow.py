"""Attestation workflow: intake, duplicate detection, phase sequencing,
finalization, revocation, and the expiry sweep.

The contract rules run as deterministic native validation gating every
ledger append: one live request per (document, destination), phases in
strict 1..n order, each phase signed by an authorized attesting entity,
finalization only when complete. Requests persist one JSON file each and
are reconstructible by folding their chain (see ``replay_chain``).
"""

from __future__ import annotations

import enum
import json
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Optional

from . import canonical
from .agents import InboxStore, Wallet, offer_credential
from .credentials import (
    CredentialStore,
    MicroCredential,
    issue_aggregate_credential,
    issue_micro_credential,
)
from .errors import (
    AlreadyFinalized,
    AlreadyRevoked,
    AttestError,
    DuplicateRequest,
    NotFinalized,
    PhasesIncomplete,
    RequestNotActive,
    SkippedStep,
    UnauthorizedAttester,
    UnauthorizedIssuer,
    UnknownHolder,
    UnknownRequest,
    UnknownTemplate,
)
from .ledger import AttestationBlock, BlockKind, BlockPayload, LedgerStore
from .registry import Registry, RevocationReason, Role


class RequestState(str, enum.Enum):
    OPEN = "Open"
    IN_PROGRESS = "InProgress"
    FINALIZED = "Finalized"
    REVOKED = "Revoked"
    EXPIRED = "Expired"


@dataclass
class Phase:
    phase_number: int
    phase_name: str
    authorized_dids: Optional[list[str]] = None  # None: any registered attesting entity

    def to_dict(self) -> dict:
        doc = {"phase_number": self.phase_number, "phase_name": self.phase_name}
        if self.authorized_dids is not None:
            doc["authorized_dids"] = list(self.authorized_dids)
        return doc


@dataclass
class WorkflowTemplate:
    template_id: str
    phases: list[Phase]
    validity_days: Optional[int] = None

    def __post_init__(self):
        numbers = [p.phase_number for p in self.phases]
        if numbers != list(range(1, len(self.phases) + 1)) or not self.phases:
            raise UnknownTemplate(f"template {self.template_id!r} phases must be exactly 1..n")

    @property
    def phase_count(self) -> int:
        return len(self.phases)

    def phase(self, number: int) -> Phase:
        return self.phases[number - 1]

    def validity_period(self) -> Optional[timedelta]:
        return timedelta(days=self.validity_days) if self.validity_days else None

    def to_dict(self) -> dict:
        doc: dict = {"template_id": self.template_id, "phases": [p.to_dict() for p in self.phases]}
        if self.validity_days is not None:
            doc["validity_days"] = self.validity_days
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "WorkflowTemplate":
        return cls(
            template_id=doc["template_id"],
            phases=[
                Phase(p["phase_number"], p["phase_name"], p.get("authorized_dids"))
                for p in doc["phases"]
            ],
            validity_days=doc.get("validity_days"),
        )


def default_template() -> WorkflowTemplate:
    """Conventional 5-step legalization chain, two-year validity."""
    names = [
        "Notary verification",
        "State authority verification",
        "Ministry of foreign affairs attestation",
        "Embassy attestation",
        "Destination ministry attestation",
    ]
    return WorkflowTemplate(
        template_id="legalization-5",
        phases=[Phase(i + 1, name) for i, name in enumerate(names)],
        validity_days=730,
    )


def load_templates(template_dir: Path | str) -> dict[str, WorkflowTemplate]:
    templates: dict[str, WorkflowTemplate] = {}
    template_dir = Path(template_dir)
    if template_dir.is_dir():
        for path in sorted(template_dir.glob("*.json")):
            template = WorkflowTemplate.from_dict(json.loads(path.read_text("utf-8")))
            templates[template.template_id] = template
    return templates


@dataclass
class AttestationRequest:
    request_id: str  # doubles as the ledger chain id
    document_id: str
    destination_country: str
    holder_did: str
    template_id: str
    state: RequestState
    created_at: datetime
    micro_ids_by_phase: dict[int, str] = field(default_factory=dict)
    aggregate_credential_id: Optional[str] = None
    aggregate_expires_at: Optional[datetime] = None

    def next_phase(self) -> int:
        return len(self.micro_ids_by_phase) + 1

    def is_active(self) -> bool:
        return self.state in (RequestState.OPEN, RequestState.IN_PROGRESS)

    def to_dict(self) -> dict:
        doc = {
            "request_id": self.request_id,
            "document_id": self.document_id,
            "destination_country": self.destination_country,
            "holder_did": self.holder_did,
            "template_id": self.template_id,
            "state": self.state.value,
            "created_at": canonical.format_instant(self.created_at),
            "micro_ids_by_phase": {str(k): v for k, v in sorted(self.micro_ids_by_phase.items())},
        }
        if self.aggregate_credential_id is not None:
            doc["aggregate_credential_id"] = self.aggregate_credential_id
        if self.aggregate_expires_at is not None:
            doc["aggregate_expires_at"] = canonical.format_instant(self.aggregate_expires_at)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "AttestationRequest":
        return cls(
            request_id=doc["request_id"],
            document_id=doc["document_id"],
            destination_country=doc["destination_country"],
            holder_did=doc["holder_did"],
            template_id=doc["template_id"],
            state=RequestState(doc["state"]),
            created_at=canonical.parse_instant(doc["created_at"]),
            micro_ids_by_phase={int(k): v for k, v in doc.get("micro_ids_by_phase", {}).items()},
            aggregate_credential_id=doc.get("aggregate_credential_id"),
            aggregate_expires_at=(
                canonical.parse_instant(doc["aggregate_expires_at"])
                if "aggregate_expires_at" in doc
                else None
            ),
        )


def replay_chain(blocks: list[AttestationBlock]) -> tuple[RequestState, dict[int, str]]:
    """Fold a request's chain back into (state, micro ids by phase)."""
    state = RequestState.OPEN
    micro_ids: dict[int, str] = {}
    for block in blocks:
        kind = block.payload.kind
        if kind is BlockKind.STEP_COMPLETED:
            micro_ids[block.payload.phase_number] = block.payload.micro_credential_id
            state = RequestState.IN_PROGRESS
        elif kind is BlockKind.ATTESTATION_FINALIZED:
            state = RequestState.FINALIZED
        elif kind is BlockKind.ATTESTATION_REVOKED:
            state = RequestState.REVOKED
        elif kind is BlockKind.ATTESTATION_EXPIRED:
            state = RequestState.EXPIRED
    return state, micro_ids


class WorkflowEngine:
    """Drives requests through their template, gating every ledger append."""

    def __init__(
        self,
        registry: Registry,
        ledger: LedgerStore,
        credential_store: CredentialStore,
        templates: dict[str, WorkflowTemplate],
        state_dir: Path | str,
        gateway_wallet: Wallet,
        inbox: Optional[InboxStore] = None,
        revocation_authorities: Optional[list[str]] = None,
        clock: Callable[[], datetime] = canonical.utc_now,
    ):
        self.registry = registry
        self.ledger = ledger
        self.credentials = credential_store
        self.templates = dict(templates)
        self.gateway_wallet = gateway_wallet
        self.inbox = inbox
        self.revocation_authorities = list(revocation_authorities or [])
        self._clock = clock
        self._state_dir = Path(state_dir)
        self._state_dir.mkdir(parents=True, exist_ok=True)
        self._requests: dict[str, AttestationRequest] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._create_lock = threading.Lock()
        for path in sorted(self._state_dir.glob("*.json")):
            request = AttestationRequest.from_dict(json.loads(path.read_text("utf-8")))
            self._requests[request.request_id] = request

    # -- helpers ----------------------------------------------------------

    def _persist(self, request: AttestationRequest) -> None:
        path = self._state_dir / f"{request.request_id}.json"
        path.write_bytes(canonical.canonical_bytes(request.to_dict()))

    def _request_lock(self, request_id: str) -> threading.Lock:
        with self._create_lock:
            return self._locks.setdefault(request_id, threading.Lock())

    def get_request(self, request_id: str) -> AttestationRequest:
        request = self._requests.get(request_id)
        if request is None:
            raise UnknownRequest(f"no request {request_id!r}")
        return request

    def requests(self) -> list[AttestationRequest]:
        return list(self._requests.values())

    def _template_for(self, request: AttestationRequest) -> WorkflowTemplate:
        template = self.templates.get(request.template_id)
        if template is None:
            raise UnknownTemplate(f"template {request.template_id!r} is not configured")
        return template

    def _deliver_offer(self, issuer_wallet: Wallet, holder_did: str, credential_doc: dict) -> None:
        if self.inbox is None:
            return
        offer_credential(
            issuer_wallet,
            holder_did,
            credential_doc,
            self.registry,
            deliver=lambda msg: self.inbox.post(msg.to_dict()),
            micro_lookup=self.credentials.micro,
            clock=self._clock,
        )
        if issuer_wallet.path is not None:
            issuer_wallet.save()

    # -- operations --------------------------------------------------------

    def submit_request(
        self,
        document_id: str,
        destination_country: str,
        holder_did: str,
        template_id: str,
        holder_wallet: Wallet,
    ) -> AttestationRequest:
        if not self.registry.has_did(holder_did):
            raise UnknownHolder(f"{holder_did} is not registered")
        if template_id not in self.templates:
            raise UnknownTemplate(f"no template {template_id!r}")
        if holder_wallet.owner_did != holder_did:
            raise UnauthorizedAttester("submitting wallet does not belong to the holder")

        with self._create_lock:
            for other in self._requests.values():
                if (
                    other.document_id == document_id
                    and other.destination_country == destination_country
                    and other.state not in (RequestState.REVOKED, RequestState.EXPIRED)
                ):
                    raise DuplicateRequest(
                        f"live request {other.request_id} already covers "
                        f"({document_id}, {destination_country})"
                    )
            request_id = "req-" + secrets.token_hex(12)
            payload = BlockPayload(
                kind=BlockKind.REQUEST_OPENED,
                document_id=document_id,
                subject_did=holder_did,
                attester_did=holder_did,
                destination_country=destination_country,
                policy_refs=[],
            )
            self.ledger.append_block(request_id, payload, holder_wallet.signing.private, holder_did)
            request = AttestationRequest(
                request_id=request_id,
                document_id=document_id,
                destination_country=destination_country,
                holder_did=holder_did,
                template_id=template_id,
                state=RequestState.OPEN,
                created_at=self._clock(),
            )
            self._requests[request_id] = request
            self._persist(request)
            return request

    def record_step(
        self,
        request_id: str,
        phase_number: int,
        attester_wallet: Wallet,
        claims: dict[str, str],
        policy_refs: Optional[list[str]] = None,
    ) -> tuple[AttestationBlock, MicroCredential]:
        request = self.get_request(request_id)
        with self._request_lock(request_id):
            if not request.is_active():
                raise RequestNotActive(f"request is {request.state.value}")
            template = self._template_for(request)
            if phase_number != request.next_phase() or phase_number > template.phase_count:
                raise SkippedStep(
                    f"expected phase {request.next_phase()}, got {phase_number}"
                )
            attester_did = attester_wallet.owner_did
            attester_doc = self.registry.resolve_did(attester_did) if self.registry.has_did(attester_did) else None
            if attester_doc is None or attester_doc.role is not Role.ATTESTING_ENTITY:
                raise UnauthorizedAttester(f"{attester_did} is not a registered attesting entity")
            phase = template.phase(phase_number)
            if phase.authorized_dids is not None and attester_did not in phase.authorized_dids:
                raise UnauthorizedAttester(f"{attester_did} is not authorized for phase {phase_number}")

            # Credential first: the block references its id. A failed append
            # revokes the just-issued credential so neither survives alone.
            micro = issue_micro_credential(
                attester_wallet.signing.private,
                attester_did,
                request.holder_did,
                request.document_id,
                phase_number,
                phase.phase_name,
                claims,
                self.registry,
                clock=self._clock,
            )
            self.credentials.add(micro)
            payload = BlockPayload(
                kind=BlockKind.STEP_COMPLETED,
                document_id=request.document_id,
                subject_did=request.holder_did,
                attester_did=attester_did,
                micro_credential_id=micro.id,
                phase_number=phase_number,
                policy_refs=list(policy_refs or []),
            )
            try:
                block = self.ledger.append_block(
                    request_id, payload, attester_wallet.signing.private, attester_did
                )
            except AttestError:
                self.registry.revoke_credential(
                    micro.id, RevocationReason.REVOKED, attester_wallet.signing.private, attester_did
                )
                raise
            request.micro_ids_by_phase[phase_number] = micro.id
            request.state = RequestState.IN_PROGRESS
            self._persist(request)
            self._deliver_offer(attester_wallet, request.holder_did, micro.to_dict())
            return block, micro

    def finalize_attestation(self, request_id: str, final_attester_wallet: Wallet):
        request = self.get_request(request_id)
        with self._request_lock(request_id):
            if request.state in (RequestState.FINALIZED, RequestState.REVOKED, RequestState.EXPIRED):
                raise AlreadyFinalized(f"request is {request.state.value}")
            template = self._template_for(request)
            completed = sorted(request.micro_ids_by_phase)
            if completed != list(range(1, template.phase_count + 1)):
                raise PhasesIncomplete(
                    f"phases {completed} completed of {template.phase_count}"
                )
            final_micro = self.credentials.micro(request.micro_ids_by_phase[template.phase_count])
            if final_micro is None or final_micro.issuer_did != final_attester_wallet.owner_did:
                raise UnauthorizedIssuer("only the final-phase attester may finalize")

            holder = self.registry.resolve_did(request.holder_did)
            validity = template.validity_period()
            expires_at = self._clock() + validity if validity else None
            micro_ids = [request.micro_ids_by_phase[n] for n in range(1, template.phase_count + 1)]
            aggregate = issue_aggregate_credential(
                final_attester_wallet.signing.private,
                final_attester_wallet.owner_did,
                request.holder_did,
                holder.signing_key,
                micro_ids,
                self.credentials.micro,
                self.registry,
                expires_at=expires_at,
                clock=self._clock,
            )
            self.credentials.add(aggregate)
            payload = BlockPayload(
                kind=BlockKind.ATTESTATION_FINALIZED,
                document_id=request.document_id,
                subject_did=request.holder_did,
                attester_did=final_attester_wallet.owner_did,
                aggregate_credential_id=aggregate.id,
                policy_refs=[],
            )
            try:
                block = self.ledger.append_block(
                    request_id, payload, final_attester_wallet.signing.private, final_attester_wallet.owner_did
                )
            except AttestError:
                self.registry.revoke_credential(
                    aggregate.id,
                    RevocationReason.REVOKED,
                    final_attester_wallet.signing.private,
                    final_attester_wallet.owner_did,
                )
                raise
            request.state = RequestState.FINALIZED
            request.aggregate_credential_id = aggregate.id
            request.aggregate_expires_at = expires_at
            self._persist(request)
            self._deliver_offer(final_attester_wallet, request.holder_did, aggregate.to_dict())
            return aggregate, block

    def revoke_attestation(self, request_id: str, issuer_wallet: Wallet, reason_text: str = "") -> AttestationBlock:
        request = self.get_request(request_id)
        with self._request_lock(request_id):
            if request.state is not RequestState.FINALIZED:
                raise NotFinalized(f"request is {request.state.value}")
            issuer_did = issuer_wallet.owner_did
            final_micro = self.credentials.micro(request.micro_ids_by_phase[max(request.micro_ids_by_phase)])
            final_attester = final_micro.issuer_did if final_micro else None
            if issuer_did != final_attester and issuer_did not in self.revocation_authorities:
                raise UnauthorizedIssuer(f"{issuer_did} may not revoke this attestation")

            payload = BlockPayload(
                kind=BlockKind.ATTESTATION_REVOKED,
                document_id=request.document_id,
                subject_did=request.holder_did,
                attester_did=issuer_did,
                aggregate_credential_id=request.aggregate_credential_id,
                policy_refs=[reason_text] if reason_text else [],
            )
            block = self.ledger.append_block(request_id, payload, issuer_wallet.signing.private, issuer_did)
            try:
                self.registry.revoke_credential(
                    request.aggregate_credential_id,
                    RevocationReason.REVOKED,
                    issuer_wallet.signing.private,
                    issuer_did,
                )
            except AlreadyRevoked:
                pass  # direct registry revocation raced ahead; the chain still records it
            request.state = RequestState.REVOKED
            self._persist(request)
            return block

    def expire_sweep(self, now: Optional[datetime] = None) -> list[str]:
        """Transition every Finalized request whose aggregate is past
        expiry; idempotent for the same instant."""
        now = now if now is not None else self._clock()
        expired: list[str] = []
        for request in list(self._requests.values()):
            if request.state is not RequestState.FINALIZED:
                continue
            if request.aggregate_expires_at is None or request.aggregate_expires_at >= now:
                continue
            with self._request_lock(request.request_id):
                if request.state is not RequestState.FINALIZED:
                    continue
                try:
                    self.registry.revoke_credential(
                        request.aggregate_credential_id,
                        RevocationReason.EXPIRED,
                        self.gateway_wallet.signing.private,
                        self.gateway_wallet.owner_did,
                    )
                except AlreadyRevoked:
                    continue  # an explicit revocation got there first
                payload = BlockPayload(
                    kind=BlockKind.ATTESTATION_EXPIRED,
                    document_id=request.document_id,
                    subject_did=request.holder_did,
                    attester_did=self.gateway_wallet.owner_did,
                    aggregate_credential_id=request.aggregate_credential_id,
                    policy_refs=[],
                )
                self.ledger.append_block(
                    request.request_id, payload, self.gateway_wallet.signing.private, self.gateway_wallet.owner_did
                )
                request.state = RequestState.EXPIRED
                self._persist(request)
                expired.append(request.request_id)
        return expired

    def attestation_status(self, document_id: str, destination_country: Optional[str] = None) -> list[dict]:
        """Timeline views built from ledger blocks; template names the
        pending phase, credential claims are never consulted."""
        views = []
        for chain_id, blocks in self.ledger.chain_for_document(document_id, destination_country):
            request = self._requests.get(chain_id)
            template = self.templates.get(request.template_id) if request else None
            state, micro_ids = replay_chain(blocks)
            genesis = blocks[0].payload
            completed = []
            aggregate_id = None
            finalized_at = None
            for block in blocks:
                payload = block.payload
                if payload.kind is BlockKind.STEP_COMPLETED:
                    entry = {
                        "phase_number": payload.phase_number,
                        "timestamp": canonical.format_instant(payload.timestamp),
                        "attester_did": payload.attester_did,
                    }
                    if template is not None and payload.phase_number <= template.phase_count:
                        entry["phase_name"] = template.phase(payload.phase_number).phase_name
                    completed.append(entry)
                elif payload.kind is BlockKind.ATTESTATION_FINALIZED:
                    aggregate_id = payload.aggregate_credential_id
                    finalized_at = canonical.format_instant(payload.timestamp)
            view: dict = {
                "request_id": chain_id,
                "document_id": document_id,
                "destination_country": genesis.destination_country,
                "state": state.value,
                "opened_at": canonical.format_instant(genesis.timestamp),
                "completed_phases": completed,
                "block_count": len(blocks),
            }
            next_phase = max(micro_ids, default=0) + 1
            if state in (RequestState.OPEN, RequestState.IN_PROGRESS) and template is not None:
                if next_phase <= template.phase_count:
                    view["pending_phase"] = {
                        "phase_number": next_phase,
                        "phase_name": template.phase(next_phase).phase_name,
                    }
            if aggregate_id is not None:
                view["aggregate_credential_id"] = aggregate_id
                view["finalized_at"] = finalized_at
            views.append(view)
        return views
