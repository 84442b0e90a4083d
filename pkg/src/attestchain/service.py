"""HTTP gateway: authentication, workflow endpoints, registry, inbox,
presentation verification, and the offline transaction queue.

Every body in and out is canonical JSON. Sessions are bearer tokens issued
against a signed challenge; the caller's role is re-resolved from the
registry on every request, never trusted from the token. Wallets live under
the service data directory and are unlocked per operation with the
passphrase carried in the request body (the SSI agents run server-side).
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Callable, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import canonical, keys
from .agents import InboxStore, SecureMessage, Wallet, process_inbox, respond_to_offer
from .credentials import (
    CredentialStore,
    Presentation,
    VerifierSession,
    verify_presentation,
)
from .errors import (
    AttestError,
    BadSignature,
    Forbidden,
    SchemaViolation,
    ServiceOffline,
    Unauthorized,
    WalletLocked,
)
from .ledger import LedgerStore, verify_chain
from .registry import DidDocument, Registry, RevocationReason, Role, create_did
from .workflow import WorkflowEngine, default_template, load_templates

AUTH_CONTEXT = b"attest:auth:"
SESSION_TTL = timedelta(minutes=30)
CHALLENGE_TTL = timedelta(minutes=5)

QUEUEABLE_OPERATIONS = ("submit_request", "record_step", "finalize", "revoke")


class CanonicalJSONResponse(JSONResponse):
    """Responses in canonical form: sorted keys, no insignificant whitespace."""

    def render(self, content: Any) -> bytes:
        return canonical.canonical_bytes(content)


@dataclass
class ServiceConfig:
    listen_address: str = "127.0.0.1:8530"
    data_dir: str = "data"
    template_dir: str = "config/templates"
    offline: bool = False
    revocation_authority_dids: list[str] = None
    gateway_passphrase: str = "gateway-passphrase"

    def __post_init__(self):
        if self.revocation_authority_dids is None:
            self.revocation_authority_dids = []

    @classmethod
    def load(cls, path: Path | str) -> "ServiceConfig":
        doc = json.loads(Path(path).read_text("utf-8"))
        return cls(**{k: v for k, v in doc.items() if k in cls.__dataclass_fields__})


@dataclass
class ApiSession:
    token: str
    caller_did: str
    issued_at: datetime
    expiry: datetime


class SessionStore:
    def __init__(self, clock: Callable[[], datetime]):
        self._clock = clock
        self._sessions: dict[str, ApiSession] = {}
        self._challenges: dict[str, tuple[str, datetime]] = {}
        self._lock = threading.Lock()

    def new_challenge(self, did: str) -> str:
        challenge = secrets.token_hex(32)
        with self._lock:
            self._challenges[did] = (challenge, self._clock() + CHALLENGE_TTL)
        return challenge

    def take_challenge(self, did: str) -> Optional[str]:
        with self._lock:
            entry = self._challenges.pop(did, None)
        if entry is None or entry[1] < self._clock():
            return None
        return entry[0]

    def issue(self, did: str) -> ApiSession:
        now = self._clock()
        session = ApiSession(secrets.token_hex(32), did, now, now + SESSION_TTL)
        with self._lock:
            self._sessions[session.token] = session
        return session

    def get(self, token: str) -> Optional[ApiSession]:
        session = self._sessions.get(token)
        if session is None or session.expiry < self._clock():
            return None
        return session


class OfflineQueue:
    """Durable FIFO of workflow operations recorded while the ledger is
    unreachable; flushed through the normal validation path, exactly once
    per entry (checkpointed by sequence number)."""

    def __init__(self, root: Path):
        self._file = root / "offline_queue.jsonl"
        self._checkpoint = root / "offline_queue.checkpoint"
        self._lock = threading.Lock()
        self._entries: list[dict] = []
        self._next_seq = 1
        applied = 0
        if self._checkpoint.exists():
            applied = int(self._checkpoint.read_text().strip() or 0)
        if self._file.exists():
            for line in self._file.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                self._next_seq = max(self._next_seq, entry["sequence"] + 1)
                if entry["sequence"] > applied:
                    self._entries.append(entry)

    def enqueue(self, operation: str, payload: dict, queued_at: datetime) -> int:
        if operation not in QUEUEABLE_OPERATIONS:
            raise SchemaViolation(f"operation {operation!r} cannot be queued")
        with self._lock:
            entry = {
                "sequence": self._next_seq,
                "operation": operation,
                "payload": payload,
                "queued_at": canonical.format_instant(queued_at),
            }
            self._next_seq += 1
            self._entries.append(entry)
            with self._file.open("ab") as fh:
                fh.write(canonical.canonical_bytes(entry) + b"\n")
            return entry["sequence"]

    def pending(self) -> list[dict]:
        with self._lock:
            return [dict(e) for e in self._entries]

    def flush(self, apply: Callable[[dict], dict]) -> list[dict]:
        results = []
        with self._lock:
            entries, self._entries = self._entries, []
        for entry in entries:
            try:
                outcome = {"ok": True, "result": apply(entry)}
            except AttestError as exc:
                outcome = {"ok": False, "error": exc.to_dict()["error"]}
            results.append({"sequence": entry["sequence"], "operation": entry["operation"], **outcome})
            self._checkpoint.write_text(str(entry["sequence"]))
        return results


class AttestationService:
    """Owns every component; the FastAPI app is a thin routing layer."""

    def __init__(self, config: ServiceConfig, clock: Callable[[], datetime] = canonical.utc_now):
        self.config = config
        self.clock = clock
        data_dir = Path(config.data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        self.data_dir = data_dir
        self.wallets_dir = data_dir / "wallets"
        self.wallets_dir.mkdir(exist_ok=True)

        self.registry = Registry(data_dir / "registry", clock=clock)
        self.ledger = LedgerStore(data_dir / "chains", self.registry, clock=clock)
        self.credentials = CredentialStore(data_dir / "credentials.jsonl")
        self.inbox = InboxStore(data_dir / "inbox")
        self.sessions = SessionStore(clock)
        self.queue = OfflineQueue(data_dir)
        self.offline = bool(config.offline)
        self._verifier_sessions: dict[str, VerifierSession] = {}
        self._verifier_lock = threading.Lock()

        template_dir = Path(config.template_dir)
        templates = load_templates(template_dir)
        if not templates:
            template = default_template()
            template_dir.mkdir(parents=True, exist_ok=True)
            (template_dir / f"{template.template_id}.json").write_bytes(
                canonical.canonical_bytes(template.to_dict())
            )
            templates = {template.template_id: template}

        self.gateway = self._bootstrap_gateway()
        self.engine = WorkflowEngine(
            registry=self.registry,
            ledger=self.ledger,
            credential_store=self.credentials,
            templates=templates,
            state_dir=data_dir / "requests",
            gateway_wallet=self.gateway,
            inbox=self.inbox,
            revocation_authorities=config.revocation_authority_dids,
            clock=clock,
        )

    def _bootstrap_gateway(self) -> Wallet:
        path = self.wallets_dir / "gateway.wallet"
        if path.exists():
            wallet = Wallet.load(path, self.config.gateway_passphrase, clock=self.clock)
        else:
            wallet = Wallet.create(clock=self.clock)
            wallet.save(path, self.config.gateway_passphrase)
        if not self.registry.has_did(wallet.owner_did):
            self.registry.register_did(
                create_did(
                    wallet.signing.public,
                    wallet.agreement.public,
                    Role.CREDENTIAL_ISSUER,
                    clock=self.clock,
                )
            )
        return wallet

    # -- helpers -----------------------------------------------------------

    def wallet_path(self, did: str) -> Path:
        return self.wallets_dir / f"{did}.wallet"

    def open_wallet(self, did: str, passphrase: str) -> Wallet:
        path = self.wallet_path(did)
        if not path.exists():
            raise WalletLocked(f"no wallet on file for {did}")
        try:
            return Wallet.load(path, passphrase, clock=self.clock)
        except AttestError:
            raise WalletLocked(f"wallet for {did} did not unlock") from None
        except (ValueError, KeyError):
            raise WalletLocked(f"wallet file for {did} is unreadable") from None

    def role_of(self, did: str) -> Role:
        return self.registry.resolve_did(did).role

    def verifier_session(self, verifier_did: str) -> VerifierSession:
        with self._verifier_lock:
            session = self._verifier_sessions.get(verifier_did)
            if session is None:
                safe = verifier_did.replace(":", "_")
                session = VerifierSession(self.data_dir / "nonces" / f"{safe}.log")
                self._verifier_sessions[verifier_did] = session
            return session

    # -- queued operation application ---------------------------------------

    def apply_queued(self, entry: dict) -> dict:
        if self.offline:
            raise ServiceOffline("ledger still unavailable; cannot flush")
        payload = entry["payload"]
        op = entry["operation"]
        if op == "submit_request":
            wallet = self.open_wallet(payload["holder_did"], payload["wallet_passphrase"])
            request = self.engine.submit_request(
                payload["document_id"],
                payload["destination_country"],
                payload["holder_did"],
                payload["template_id"],
                wallet,
            )
            return {"request": request.to_dict()}
        if op == "record_step":
            wallet = self.open_wallet(payload["attester_did"], payload["wallet_passphrase"])
            block, micro = self.engine.record_step(
                payload["request_id"],
                payload["phase_number"],
                wallet,
                payload.get("claims", {}),
                payload.get("policy_refs"),
            )
            return {"block": block.to_dict(), "micro_credential": micro.to_dict()}
        if op == "finalize":
            wallet = self.open_wallet(payload["attester_did"], payload["wallet_passphrase"])
            aggregate, block = self.engine.finalize_attestation(payload["request_id"], wallet)
            return {"aggregate_credential": aggregate.to_dict(), "block": block.to_dict()}
        if op == "revoke":
            wallet = self.open_wallet(payload["issuer_did"], payload["wallet_passphrase"])
            block = self.engine.revoke_attestation(
                payload["request_id"], wallet, payload.get("reason_text", "")
            )
            return {"block": block.to_dict()}
        raise SchemaViolation(f"unknown queued operation {op!r}")


def _field(body: dict, name: str, kind=str, required: bool = True, default=None):
    value = body.get(name, default)
    if value is None and not required:
        return None
    if not isinstance(value, kind):
        raise SchemaViolation(f"body field {name!r} must be {getattr(kind, '__name__', kind)}")
    return value


def create_app(
    config: ServiceConfig | str | Path | None = None,
    clock: Callable[[], datetime] = canonical.utc_now,
    ui_dir: Path | str | None = None,
) -> FastAPI:
    if config is None:
        config = ServiceConfig()
    elif not isinstance(config, ServiceConfig):
        config = ServiceConfig.load(config)
    service = AttestationService(config, clock=clock)

    app = FastAPI(title="attestchain", default_response_class=CanonicalJSONResponse)
    app.state.service = service

    @app.exception_handler(AttestError)
    def attest_error_handler(_request: Request, exc: AttestError):
        return CanonicalJSONResponse(exc.to_dict(), status_code=exc.http_status)

    # -- auth ----------------------------------------------------------------

    def current_session(request: Request) -> ApiSession:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise Unauthorized("missing bearer token")
        session = service.sessions.get(header[7:].strip())
        if session is None:
            raise Unauthorized("session unknown or expired")
        return session

    def require_role(session: ApiSession, *roles: Role) -> Role:
        role = service.role_of(session.caller_did)  # registry, not the token
        if roles and role not in roles:
            raise Forbidden(f"role {role.value} may not call this endpoint")
        return role

    @app.post("/auth/challenge")
    async def auth_challenge(request: Request):
        body = await request.json()
        did = _field(body, "did")
        service.registry.resolve_did(did)
        return {"did": did, "challenge": service.sessions.new_challenge(did)}

    def _issue_session(did: str) -> dict:
        session = service.sessions.issue(did)
        return {
            "token": session.token,
            "did": did,
            "role": service.role_of(did).value,
            "expires_at": canonical.format_instant(session.expiry),
        }

    @app.post("/auth/verify")
    async def auth_verify(request: Request):
        body = await request.json()
        did = _field(body, "did")
        challenge = _field(body, "challenge")
        signature = _field(body, "signature")
        doc = service.registry.resolve_did(did)
        expected = service.sessions.take_challenge(did)
        if expected is None or expected != challenge:
            raise BadSignature("challenge unknown, expired, or already used")
        try:
            sig_bytes = bytes.fromhex(signature)
        except ValueError:
            raise BadSignature("signature is not hex") from None
        if not keys.verify(doc.signing_key, sig_bytes, AUTH_CONTEXT + bytes.fromhex(challenge)):
            raise BadSignature("challenge signature does not verify")
        return _issue_session(did)

    @app.post("/auth/login")
    async def auth_login(request: Request):
        # Passphrase login for the web console: the server-side agent signs
        # its own challenge with the unlocked wallet.
        body = await request.json()
        did = _field(body, "did")
        passphrase = _field(body, "wallet_passphrase")
        service.registry.resolve_did(did)
        wallet = service.open_wallet(did, passphrase)
        challenge = service.sessions.new_challenge(did)
        signature = keys.sign(wallet.signing.private, AUTH_CONTEXT + bytes.fromhex(challenge))
        doc = service.registry.resolve_did(did)
        service.sessions.take_challenge(did)
        if not keys.verify(doc.signing_key, signature, AUTH_CONTEXT + bytes.fromhex(challenge)):
            raise BadSignature("wallet key does not match the registered key")
        return _issue_session(did)

    # -- public discovery ------------------------------------------------------

    @app.get("/info")
    def info():
        return {
            "service": "attestchain",
            "offline": service.offline,
            "wallets_dir": str(service.wallets_dir.resolve()),
            "templates": sorted(service.engine.templates),
            "gateway_did": service.gateway.owner_did,
        }

    # -- registry ---------------------------------------------------------------

    @app.post("/registry/dids")
    async def register_did(request: Request):
        body = await request.json()
        try:
            doc = DidDocument.from_dict(body)
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(f"not a DID document: {exc}") from None
        return service.registry.register_did(doc)

    @app.get("/registry/dids/{did}")
    def resolve_did(did: str):
        return service.registry.resolve_did(did).to_dict()

    @app.post("/registry/revocations")
    async def revoke_credential(request: Request):
        body = await request.json()
        session = current_session(request)
        require_role(session, Role.ATTESTING_ENTITY, Role.CREDENTIAL_ISSUER)
        wallet = service.open_wallet(session.caller_did, _field(body, "wallet_passphrase"))
        reason = _field(body, "reason", required=False, default="Revoked")
        try:
            reason = RevocationReason(reason)
        except ValueError:
            raise SchemaViolation(f"reason must be one of {[r.value for r in RevocationReason]}") from None
        entry = service.registry.revoke_credential(
            _field(body, "credential_id"), reason, wallet.signing.private, session.caller_did
        )
        return entry.to_dict()

    # -- workflow ----------------------------------------------------------------

    def _queue_or(request_offline_payload: tuple[str, dict], apply: Callable[[], dict]):
        operation, payload = request_offline_payload
        if service.offline:
            seq = service.queue.enqueue(operation, payload, service.clock())
            return CanonicalJSONResponse({"queued": True, "sequence": seq, "operation": operation}, status_code=202)
        return apply()

    @app.post("/requests")
    async def submit_request(request: Request):
        body = await request.json()
        session = current_session(request)
        require_role(session, Role.HOLDER)
        passphrase = _field(body, "wallet_passphrase")
        payload = {
            "document_id": _field(body, "document_id"),
            "destination_country": _field(body, "destination_country"),
            "template_id": _field(body, "template_id"),
            "holder_did": session.caller_did,
            "wallet_passphrase": passphrase,
        }

        def apply():
            wallet = service.open_wallet(session.caller_did, passphrase)
            created = service.engine.submit_request(
                payload["document_id"],
                payload["destination_country"],
                session.caller_did,
                payload["template_id"],
                wallet,
            )
            genesis = service.ledger.chain(created.request_id)[0]
            return {"request": created.to_dict(), "genesis_block": genesis.to_dict()}

        return _queue_or(("submit_request", payload), apply)

    @app.post("/requests/{request_id}/steps")
    async def record_step(request_id: str, request: Request):
        body = await request.json()
        session = current_session(request)
        require_role(session, Role.ATTESTING_ENTITY)
        passphrase = _field(body, "wallet_passphrase")
        phase_number = _field(body, "phase_number", kind=int)
        claims = _field(body, "claims", kind=dict, required=False, default={})
        policy_refs = _field(body, "policy_refs", kind=list, required=False)
        payload = {
            "request_id": request_id,
            "phase_number": phase_number,
            "claims": claims,
            "policy_refs": policy_refs,
            "attester_did": session.caller_did,
            "wallet_passphrase": passphrase,
        }

        def apply():
            wallet = service.open_wallet(session.caller_did, passphrase)
            block, micro = service.engine.record_step(
                request_id, phase_number, wallet, claims, policy_refs
            )
            return {"block": block.to_dict(), "micro_credential": micro.to_dict()}

        return _queue_or(("record_step", payload), apply)

    @app.post("/requests/{request_id}/finalize")
    async def finalize(request_id: str, request: Request):
        body = await request.json()
        session = current_session(request)
        require_role(session, Role.ATTESTING_ENTITY)
        passphrase = _field(body, "wallet_passphrase")
        payload = {
            "request_id": request_id,
            "attester_did": session.caller_did,
            "wallet_passphrase": passphrase,
        }

        def apply():
            wallet = service.open_wallet(session.caller_did, passphrase)
            aggregate, block = service.engine.finalize_attestation(request_id, wallet)
            return {"aggregate_credential": aggregate.to_dict(), "block": block.to_dict()}

        return _queue_or(("finalize", payload), apply)

    @app.post("/requests/{request_id}/revoke")
    async def revoke(request_id: str, request: Request):
        body = await request.json()
        session = current_session(request)
        require_role(session, Role.ATTESTING_ENTITY, Role.CREDENTIAL_ISSUER)
        passphrase = _field(body, "wallet_passphrase")
        reason_text = _field(body, "reason_text", required=False, default="")
        payload = {
            "request_id": request_id,
            "issuer_did": session.caller_did,
            "reason_text": reason_text,
            "wallet_passphrase": passphrase,
        }

        def apply():
            wallet = service.open_wallet(session.caller_did, passphrase)
            block = service.engine.revoke_attestation(request_id, wallet, reason_text)
            return {"block": block.to_dict()}

        return _queue_or(("revoke", payload), apply)

    # -- public views --------------------------------------------------------------

    @app.get("/status/{document_id}")
    def status(document_id: str, destination: Optional[str] = None):
        return {
            "document_id": document_id,
            "requests": service.engine.attestation_status(document_id, destination),
        }

    @app.get("/chains/{document_id}")
    def chains(document_id: str, destination: Optional[str] = None, verify: bool = False):
        found = service.ledger.chain_for_document(document_id, destination)
        out = []
        for chain_id, blocks in found:
            entry: dict = {"chain_id": chain_id, "blocks": [b.to_dict() for b in blocks]}
            if verify:
                entry["verification"] = verify_chain(blocks, service.registry).to_dict()
            out.append(entry)
        return {"document_id": document_id, "chains": out}

    # -- inbox -----------------------------------------------------------------------

    @app.post("/inbox/{did}")
    async def post_inbox(did: str, request: Request):
        body = await request.json()
        session = current_session(request)
        require_role(session)
        try:
            msg = SecureMessage.from_dict(body)
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(f"not a secure message: {exc}") from None
        if msg.recipient_did != did:
            raise SchemaViolation("path DID and recipient_did disagree")
        if msg.sender_did != session.caller_did:
            raise Forbidden("sender_did must match the authenticated caller")
        service.registry.resolve_did(did)
        service.inbox.post(msg.to_dict())
        return {"delivered": True, "recipient_did": did}

    @app.get("/inbox/{did}")
    def read_inbox(did: str, request: Request):
        session = current_session(request)
        require_role(session)
        if session.caller_did != did:
            raise Forbidden("an inbox can only be read by its owner")
        return {"messages": service.inbox.drain(did)}

    # -- wallet agent (for the browser console, which cannot read wallet
    # files; the CLI talks to the same files directly instead) ---------------

    def _wallet_view(wallet: Wallet) -> dict:
        return {
            "did": wallet.owner_did,
            "credentials": {cid: doc for cid, doc in wallet.credentials.items()},
            "pending_offers": wallet.pending_offers(),
            "audit_log": wallet.audit_log,
        }

    @app.post("/wallet/sync")
    async def wallet_sync(request: Request):
        body = await request.json()
        session = current_session(request)
        require_role(session)
        wallet = service.open_wallet(session.caller_did, _field(body, "wallet_passphrase"))
        raw = service.inbox.drain(session.caller_did)
        messages = [SecureMessage.from_dict(doc) for doc in raw]
        events = process_inbox(wallet, messages, service.registry)
        wallet.save()
        plain = [e for e in events if e["type"] != "credential_offer"]
        return {**_wallet_view(wallet), "new_messages": plain}

    @app.post("/wallet/offers/{offer_id}/respond")
    async def wallet_respond(offer_id: str, request: Request):
        body = await request.json()
        session = current_session(request)
        require_role(session)
        decision = _field(body, "decision")
        if decision not in ("accept", "reject"):
            raise SchemaViolation("decision must be 'accept' or 'reject'")
        wallet = service.open_wallet(session.caller_did, _field(body, "wallet_passphrase"))
        offer = respond_to_offer(
            wallet,
            offer_id,
            decision == "accept",
            service.registry,
            deliver=lambda msg: service.inbox.post(msg.to_dict()),
            clock=service.clock,
        )
        wallet.save()
        return {
            "offer_id": offer_id,
            "status": offer["status"],
            "credential_id": offer["credential"].get("id"),
            **_wallet_view(wallet),
        }

    # -- request queue (attester console) ---------------------------------------------

    @app.get("/requests")
    def list_requests(request: Request):
        session = current_session(request)
        require_role(session, Role.ATTESTING_ENTITY, Role.CREDENTIAL_ISSUER)
        out = []
        for req in service.engine.requests():
            template = service.engine.templates.get(req.template_id)
            entry: dict = {
                "request_id": req.request_id,
                "document_id": req.document_id,
                "destination_country": req.destination_country,
                "state": req.state.value,
                "template_id": req.template_id,
                "completed_phases": sorted(req.micro_ids_by_phase),
            }
            if req.is_active() and template is not None and req.next_phase() <= template.phase_count:
                entry["pending_phase"] = {
                    "phase_number": req.next_phase(),
                    "phase_name": template.phase(req.next_phase()).phase_name,
                }
            if req.aggregate_credential_id:
                entry["aggregate_credential_id"] = req.aggregate_credential_id
            out.append(entry)
        return {"requests": out}

    # -- presentations ------------------------------------------------------------------

    @app.post("/presentations/verify")
    async def presentations_verify(request: Request):
        body = await request.json()
        session = current_session(request)
        require_role(session)
        expected_nonce = _field(body, "expected_nonce")
        try:
            presentation = Presentation.from_dict(_field(body, "presentation", kind=dict))
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(f"not a presentation: {exc}") from None
        result = verify_presentation(
            presentation,
            expected_nonce,
            service.registry,
            service.credentials.micro,
            service.clock(),
            service.verifier_session(session.caller_did),
        )
        return result.to_dict()

    # -- offline queue / sweep ------------------------------------------------------------

    @app.post("/offline/flush")
    def offline_flush(request: Request):
        session = current_session(request)
        require_role(session)
        return {"results": service.queue.flush(service.apply_queued)}

    @app.post("/expire/sweep")
    def expire_sweep(request: Request):
        session = current_session(request)
        require_role(session, Role.ATTESTING_ENTITY, Role.CREDENTIAL_ISSUER)
        return {"expired": service.engine.expire_sweep()}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def main() -> None:  # pragma: no cover - thin uvicorn launcher
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="attestchain service")
    parser.add_argument("--config", default="config/service.json")
    args = parser.parse_args()
    config_path = Path(args.config)
    config = ServiceConfig.load(config_path) if config_path.exists() else ServiceConfig()
    ui = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    app = create_app(config, ui_dir=ui if ui.is_dir() else None)
    host, _, port = config.listen_address.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8530))


if __name__ == "__main__":  # pragma: no cover
    main()
