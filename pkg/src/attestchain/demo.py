"""Scripted end-to-end scenario: one holder, five attesting officers, one
verifier, a full request-to-presentation pass on the default template.

Wallets are written into the service's wallets directory (discovered via
GET /info) so the server-side agents can co-sign with the same files.
"""

from __future__ import annotations

import secrets
from pathlib import Path

from . import keys
from .agents import SecureMessage, Wallet, process_inbox, respond_to_offer
from .cli import ApiClient, CliContext, note
from .credentials import VerifierSession, create_presentation
from .ledger import AttestationBlock, verify_chain
from .registry import DidDocument, Role, create_did
from .service import AUTH_CONTEXT


class _RegistryOverApi:
    def __init__(self, api: ApiClient):
        self._api = api
        self._cache: dict[str, DidDocument] = {}

    def resolve_did(self, did: str) -> DidDocument:
        from .errors import UnknownDid

        if did not in self._cache:
            from .cli import CliError

            try:
                self._cache[did] = DidDocument.from_dict(self._api.call("GET", f"/registry/dids/{did}"))
            except CliError:
                raise UnknownDid(did) from None
        return self._cache[did]

    def has_did(self, did: str) -> bool:
        from .errors import UnknownDid

        try:
            self.resolve_did(did)
            return True
        except UnknownDid:
            return False


def _authenticate(base: ApiClient, wallet: Wallet) -> ApiClient:
    challenge = base.call("POST", "/auth/challenge", {"did": wallet.owner_did})["challenge"]
    signature = keys.sign(wallet.signing.private, AUTH_CONTEXT + bytes.fromhex(challenge))
    session = base.call(
        "POST",
        "/auth/verify",
        {"did": wallet.owner_did, "challenge": challenge, "signature": signature.hex()},
    )
    return ApiClient(base.base_url, session["token"])


def _make_identity(api: ApiClient, wallets_dir: Path, passphrase: str, role: Role) -> Wallet:
    wallet = Wallet.create()
    wallet.save(wallets_dir / f"{wallet.owner_did}.wallet", passphrase)
    doc = create_did(wallet.signing.public, wallet.agreement.public, role)
    api.call("POST", "/registry/dids", doc.to_dict())
    return wallet


def _pull_offers(api_base: ApiClient, wallet: Wallet, registry_view) -> list[dict]:
    session = _authenticate(api_base, wallet)
    raw = session.call("GET", f"/inbox/{wallet.owner_did}")["messages"]
    messages = [SecureMessage.from_dict(doc) for doc in raw]
    events = process_inbox(wallet, messages, registry_view)
    wallet.save()
    return [e for e in events if e["type"] == "credential_offer"]


def run_demo(ctx: CliContext, document_id: str | None = None) -> dict:
    api = ctx.api()
    info = api.call("GET", "/info")
    wallets_dir = Path(info["wallets_dir"])
    registry_view = _RegistryOverApi(api)
    passphrase = secrets.token_hex(12)
    document_id = document_id or f"DOC-DEMO-{secrets.token_hex(6)}"

    note(ctx.__dict__, "creating identities (holder, 5 officers, verifier)")
    holder = _make_identity(api, wallets_dir, passphrase, Role.HOLDER)
    officers = [_make_identity(api, wallets_dir, passphrase, Role.ATTESTING_ENTITY) for _ in range(5)]
    verifier = _make_identity(api, wallets_dir, passphrase, Role.VERIFIER)

    note(ctx.__dict__, f"submitting request for {document_id} -> AE")
    holder_api = _authenticate(api, holder)
    submitted = holder_api.call(
        "POST",
        "/requests",
        {
            "document_id": document_id,
            "destination_country": "AE",
            "template_id": "legalization-5",
            "wallet_passphrase": passphrase,
        },
    )
    request_id = submitted["request"]["request_id"]

    micro_ids = []
    for phase, officer in enumerate(officers, start=1):
        officer_api = _authenticate(api, officer)
        stepped = officer_api.call(
            "POST",
            f"/requests/{request_id}/steps",
            {
                "phase_number": phase,
                "claims": {"step_outcome": "approved", "office_code": f"OFFICE-{phase}"},
                "policy_refs": [f"policy:demo:phase-{phase}"],
                "wallet_passphrase": passphrase,
            },
        )
        micro_ids.append(stepped["micro_credential"]["id"])
        note(ctx.__dict__, f"phase {phase} recorded by {officer.owner_did}")

    offers = _pull_offers(api, holder, registry_view)
    for offer in offers:
        respond_to_offer(
            holder, offer["offer_id"], True, registry_view,
            deliver=lambda msg: _authenticate(api, holder).call("POST", f"/inbox/{msg.recipient_did}", msg.to_dict()),
        )
    holder.save()
    note(ctx.__dict__, f"holder accepted {len(offers)} micro-credential offers")

    final_api = _authenticate(api, officers[-1])
    finalized = final_api.call(
        "POST", f"/requests/{request_id}/finalize", {"wallet_passphrase": passphrase}
    )
    aggregate_id = finalized["aggregate_credential"]["id"]
    note(ctx.__dict__, f"finalized: aggregate credential {aggregate_id}")

    for offer in _pull_offers(api, holder, registry_view):
        respond_to_offer(
            holder, offer["offer_id"], True, registry_view,
            deliver=lambda msg: _authenticate(api, holder).call("POST", f"/inbox/{msg.recipient_did}", msg.to_dict()),
        )
    holder.save()

    nonce = VerifierSession.new_nonce()
    presentation = create_presentation(
        holder, micro_ids + [aggregate_id], holder.signing.private, nonce
    )
    holder.save()
    verifier_api = _authenticate(api, verifier)
    verdict = verifier_api.call(
        "POST", "/presentations/verify", {"presentation": presentation.to_dict(), "expected_nonce": nonce}
    )

    chains = api.call("GET", f"/chains/{document_id}")["chains"]
    blocks = [AttestationBlock.from_dict(b, validate=False) for b in chains[0]["blocks"]]
    chain_report = verify_chain(blocks, registry_view)

    status = api.call("GET", f"/status/{document_id}")["requests"][0]

    return {
        "document_id": document_id,
        "request_id": request_id,
        "holder_did": holder.owner_did,
        "aggregate_credential_id": aggregate_id,
        "micro_credential_ids": micro_ids,
        "chain_length": len(blocks),
        "chain_valid": chain_report.valid,
        "presentation_verified": bool(verdict.get("ok")),
        "state": status["state"],
        "wallet_credentials": sorted(holder.credentials),
    }
