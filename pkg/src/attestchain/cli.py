"""Operator CLI. Every command prints one canonical-JSON object on stdout
and exits 0 on success, nonzero with a machine-readable error otherwise.

Wallet-touching commands read the wallet file directly (shared desk
filesystem); server-side signing operations send the wallet passphrase so
the service agent can unlock the same file.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

from . import canonical, keys
from .agents import SecureMessage, Wallet, process_inbox, respond_to_offer, send_message
from .credentials import VerifierSession, create_presentation
from .errors import AttestError
from .ledger import AttestationBlock, verify_chain
from .registry import DidDocument, Role, create_did
from .service import AUTH_CONTEXT

PROFILE_FILE = Path.home() / ".attestchain" / "profiles.json"


class CliError(Exception):
    def __init__(self, code: str, message: str, status: int | None = None, exit_code: int = 1):
        super().__init__(message)
        self.payload = {"error": {"code": code, "message": message}}
        if status is not None:
            self.payload["error"]["http_status"] = status
        self.exit_code = exit_code


def emit(obj, exit_code: int = 0):
    click.echo(canonical.canonical_text(obj))
    if exit_code:
        sys.exit(exit_code)


def note(ctx_obj: dict, text: str):
    if not ctx_obj.get("quiet"):
        click.echo(text, err=True)


class ApiClient:
    def __init__(self, base_url: str, token: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.token = token

    def call(self, method: str, path: str, body=None, params=None) -> dict:
        headers = {"authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            response = httpx.request(
                method,
                self.base_url + path,
                content=canonical.canonical_bytes(body) if body is not None else None,
                headers={**headers, "content-type": "application/json"} if body is not None else headers,
                params=params,
                timeout=30.0,
            )
        except httpx.HTTPError as exc:
            raise CliError("ConnectionError", f"{method} {path}: {exc}", exit_code=2) from exc
        if response.status_code >= 400:
            try:
                error = response.json()["error"]
            except (ValueError, KeyError):
                error = {"code": "HttpError", "message": response.text[:200]}
            raise CliError(error.get("code", "HttpError"), error.get("message", ""), response.status_code)
        return response.json() if response.content else {}


class CliContext:
    def __init__(self, service_url, wallet, passphrase_file, profile, quiet):
        profile_doc = {}
        self.profile_missing = False
        if profile:
            profiles = json.loads(PROFILE_FILE.read_text()) if PROFILE_FILE.exists() else {}
            # a missing profile only matters once a command needs values from it
            self.profile_missing = profile not in profiles
            profile_doc = profiles.get(profile, {})
        self.profile = profile
        self.service_url = service_url or profile_doc.get("service_url") or "http://127.0.0.1:8530"
        self.wallet_path = Path(wallet) if wallet else (
            Path(profile_doc["wallet"]) if profile_doc.get("wallet") else None
        )
        self.passphrase_file = Path(passphrase_file) if passphrase_file else (
            Path(profile_doc["passphrase_file"]) if profile_doc.get("passphrase_file") else None
        )
        self.quiet = quiet
        self._wallet = None

    def api(self, token=None) -> ApiClient:
        return ApiClient(self.service_url, token)

    @property
    def passphrase(self) -> str:
        if self.passphrase_file is None:
            raise CliError("MissingPassphrase", "provide --passphrase-file (or a profile that sets one)")
        return self.passphrase_file.read_text("utf-8").strip()

    def wallet(self) -> Wallet:
        if self._wallet is None:
            if self.wallet_path is None:
                if self.profile_missing:
                    raise CliError("UnknownProfile", f"profile {self.profile!r} not in {PROFILE_FILE}")
                raise CliError("MissingWallet", "provide --wallet (or a profile that sets one)")
            try:
                self._wallet = Wallet.load(self.wallet_path, self.passphrase)
            except FileNotFoundError:
                raise CliError("MissingWallet", f"no wallet file at {self.wallet_path}") from None
            except AttestError as exc:
                raise CliError(exc.code, exc.message) from None
        return self._wallet

    def authenticated(self) -> ApiClient:
        wallet = self.wallet()
        api = self.api()
        challenge = api.call("POST", "/auth/challenge", {"did": wallet.owner_did})["challenge"]
        signature = keys.sign(wallet.signing.private, AUTH_CONTEXT + bytes.fromhex(challenge))
        session = api.call(
            "POST",
            "/auth/verify",
            {"did": wallet.owner_did, "challenge": challenge, "signature": signature.hex()},
        )
        return self.api(session["token"])

    def save_profile(self, did: str):
        if not self.profile:
            return
        PROFILE_FILE.parent.mkdir(parents=True, exist_ok=True)
        profiles = json.loads(PROFILE_FILE.read_text()) if PROFILE_FILE.exists() else {}
        profiles[self.profile] = {
            "service_url": self.service_url,
            "wallet": str(self.wallet_path),
            "did": did,
            "passphrase_file": str(self.passphrase_file) if self.passphrase_file else None,
        }
        PROFILE_FILE.write_text(json.dumps(profiles, indent=2, sort_keys=True))


def run_guarded(fn):
    try:
        fn()
    except CliError as exc:
        emit(exc.payload, exc.exit_code)
    except AttestError as exc:
        emit(exc.to_dict(), 1)


@click.group()
@click.option("--profile", default=None, help="named profile from ~/.attestchain/profiles.json")
@click.option("--service-url", default=None, help="service base URL")
@click.option("--wallet", default=None, type=click.Path(), help="wallet file path")
@click.option("--passphrase-file", default=None, type=click.Path(), help="file holding the wallet passphrase")
@click.option("--quiet", is_flag=True, help="suppress all non-JSON text")
@click.pass_context
def main(ctx, profile, service_url, wallet, passphrase_file, quiet):
    """attestchain: document attestation chains, credentials, and wallets."""
    try:
        ctx.obj = CliContext(service_url, wallet, passphrase_file, profile, quiet)
    except CliError as exc:
        emit(exc.payload, exc.exit_code)


# -- identity ---------------------------------------------------------------


@main.group()
def identity():
    """Create and register DIDs."""


@identity.command("create")
@click.pass_obj
def identity_create(ctx):
    """Generate keys and an encrypted wallet file."""

    def run():
        if ctx.wallet_path is None:
            raise CliError("MissingWallet", "provide --wallet for the new wallet file")
        if ctx.wallet_path.exists():
            raise CliError("WalletExists", f"{ctx.wallet_path} already exists")
        wallet = Wallet.create()
        wallet.save(ctx.wallet_path, ctx.passphrase)
        ctx.save_profile(wallet.owner_did)
        emit({"did": wallet.owner_did, "wallet": str(ctx.wallet_path)})

    run_guarded(run)


@identity.command("register")
@click.option("--role", type=click.Choice([r.value for r in Role]), required=True)
@click.option("--service-endpoint", default=None)
@click.pass_obj
def identity_register(ctx, role, service_endpoint):
    """Register this wallet's DID document with the service registry."""

    def run():
        wallet = ctx.wallet()
        doc = create_did(wallet.signing.public, wallet.agreement.public, Role(role), service_endpoint)
        result = ctx.api().call("POST", "/registry/dids", doc.to_dict())
        emit({**result, "role": role})

    run_guarded(run)


# -- requests -----------------------------------------------------------------


@main.group()
def request():
    """Submit and track attestation requests."""


@request.command("submit")
@click.option("--document", "document_id", required=True)
@click.option("--destination", required=True, help="ISO-3166 alpha-2 destination country")
@click.option("--template", "template_id", default="legalization-5", show_default=True)
@click.pass_obj
def request_submit(ctx, document_id, destination, template_id):
    def run():
        api = ctx.authenticated()
        emit(
            api.call(
                "POST",
                "/requests",
                {
                    "document_id": document_id,
                    "destination_country": destination,
                    "template_id": template_id,
                    "wallet_passphrase": ctx.passphrase,
                },
            )
        )

    run_guarded(run)


@request.command("status")
@click.option("--document", "document_id", required=True)
@click.option("--destination", default=None)
@click.pass_obj
def request_status(ctx, document_id, destination):
    def run():
        params = {"destination": destination} if destination else None
        emit(ctx.api().call("GET", f"/status/{document_id}", params=params))

    run_guarded(run)


@main.command("step")
@click.argument("action", type=click.Choice(["record"]))
@click.option("--request", "request_id", required=True)
@click.option("--phase", type=int, required=True)
@click.option("--claim", "claims", multiple=True, help="claim as key=value; whitelist keys only")
@click.option("--policy-ref", "policy_refs", multiple=True)
@click.pass_obj
def step(ctx, action, request_id, phase, claims, policy_refs):
    """Record a completed attestation phase."""

    def run():
        claim_map = {}
        for item in claims:
            key, sep, value = item.partition("=")
            if not sep:
                raise CliError("BadClaim", f"claim {item!r} is not key=value")
            claim_map[key] = value
        api = ctx.authenticated()
        emit(
            api.call(
                "POST",
                f"/requests/{request_id}/steps",
                {
                    "phase_number": phase,
                    "claims": claim_map,
                    "policy_refs": list(policy_refs),
                    "wallet_passphrase": ctx.passphrase,
                },
            )
        )

    run_guarded(run)


@main.command("finalize")
@click.option("--request", "request_id", required=True)
@click.pass_obj
def finalize(ctx, request_id):
    """Issue the aggregate credential for a completed request."""

    def run():
        api = ctx.authenticated()
        emit(api.call("POST", f"/requests/{request_id}/finalize", {"wallet_passphrase": ctx.passphrase}))

    run_guarded(run)


@main.command("revoke")
@click.option("--request", "request_id", required=True)
@click.option("--reason", default="", help="policy reference recorded on-chain")
@click.pass_obj
def revoke(ctx, request_id, reason):
    """Revoke a finalized attestation."""

    def run():
        api = ctx.authenticated()
        emit(
            api.call(
                "POST",
                f"/requests/{request_id}/revoke",
                {"reason_text": reason, "wallet_passphrase": ctx.passphrase},
            )
        )

    run_guarded(run)


# -- chain ---------------------------------------------------------------------


@main.group()
def chain():
    """Inspect and verify attestation chains."""


@chain.command("show")
@click.argument("document_id")
@click.option("--destination", default=None)
@click.pass_obj
def chain_show(ctx, document_id, destination):
    def run():
        params = {"destination": destination} if destination else None
        emit(ctx.api().call("GET", f"/chains/{document_id}", params=params))

    run_guarded(run)


@chain.command("verify")
@click.argument("document_id")
@click.option("--destination", default=None)
@click.pass_obj
def chain_verify(ctx, document_id, destination):
    """Client-side verification over the public chain and registry views."""

    def run():
        api = ctx.api()
        params = {"destination": destination} if destination else None
        chains = api.call("GET", f"/chains/{document_id}", params=params)["chains"]

        class RemoteRegistry:
            def __init__(self):
                self._cache = {}

            def resolve_did(self, did):
                from .errors import UnknownDid

                if did not in self._cache:
                    try:
                        doc = api.call("GET", f"/registry/dids/{did}")
                    except CliError as exc:
                        raise UnknownDid(did) from exc
                    self._cache[did] = DidDocument.from_dict(doc)
                return self._cache[did]

        registry_view = RemoteRegistry()
        reports = []
        all_valid = True
        for entry in chains:
            blocks = [AttestationBlock.from_dict(b, validate=False) for b in entry["blocks"]]
            report = verify_chain(blocks, registry_view)
            all_valid = all_valid and report.valid
            reports.append({"chain_id": entry["chain_id"], **report.to_dict()})
        result = {"document_id": document_id, "valid": all_valid and bool(chains), "chains": reports}
        if not chains:
            result["valid"] = True  # vacuous: nothing to dispute
        emit(result, 0 if result["valid"] else 3)

    run_guarded(run)


# -- wallet ---------------------------------------------------------------------


@main.group()
def wallet():
    """Offers, stored credentials, and the audit log."""


def _sync_inbox(ctx) -> list[dict]:
    w = ctx.wallet()
    api = ctx.authenticated()
    raw = api.call("GET", f"/inbox/{w.owner_did}")["messages"]
    messages = [SecureMessage.from_dict(doc) for doc in raw]

    class RegistryView:
        def resolve_did(self, did):
            return DidDocument.from_dict(api.call("GET", f"/registry/dids/{did}"))

        def has_did(self, did):
            try:
                api.call("GET", f"/registry/dids/{did}")
                return True
            except CliError:
                return False

    events = process_inbox(w, messages, RegistryView())
    w.save()
    return events


@wallet.command("offers")
@click.pass_obj
def wallet_offers(ctx):
    """Pull the inbox and list pending credential offers."""

    def run():
        _sync_inbox(ctx)
        emit({"pending_offers": ctx.wallet().pending_offers()})

    run_guarded(run)


def _respond(ctx, offer_id, accept: bool):
    w = ctx.wallet()
    api = ctx.authenticated()

    class RegistryView:
        def resolve_did(self, did):
            return DidDocument.from_dict(api.call("GET", f"/registry/dids/{did}"))

    def deliver(msg: SecureMessage):
        api.call("POST", f"/inbox/{msg.recipient_did}", msg.to_dict())

    offer = respond_to_offer(w, offer_id, accept, RegistryView(), deliver)
    w.save()
    emit({"offer_id": offer_id, "status": offer["status"], "credential_id": offer["credential"].get("id")})


@wallet.command("accept")
@click.option("--offer", "offer_id", required=True)
@click.pass_obj
def wallet_accept(ctx, offer_id):
    run_guarded(lambda: _respond(ctx, offer_id, True))


@wallet.command("reject")
@click.option("--offer", "offer_id", required=True)
@click.pass_obj
def wallet_reject(ctx, offer_id):
    run_guarded(lambda: _respond(ctx, offer_id, False))


@wallet.command("list")
@click.option("--audit", is_flag=True, help="include the audit log")
@click.pass_obj
def wallet_list(ctx, audit):
    def run():
        w = ctx.wallet()
        out = {"did": w.owner_did, "credentials": sorted(w.credentials)}
        if audit:
            out["audit_log"] = w.audit_log
        emit(out)

    run_guarded(run)


# -- messages ----------------------------------------------------------------------


@main.group()
def message():
    """Encrypted peer-to-peer messages."""


@message.command("send")
@click.option("--to", "recipient", required=True)
@click.option("--text", required=True)
@click.pass_obj
def message_send(ctx, recipient, text):
    def run():
        w = ctx.wallet()
        api = ctx.authenticated()

        class RegistryView:
            def resolve_did(self, did):
                return DidDocument.from_dict(api.call("GET", f"/registry/dids/{did}"))

        msg = send_message(w, recipient, text.encode("utf-8"), RegistryView())
        api.call("POST", f"/inbox/{recipient}", msg.to_dict())
        w.save()
        emit({"delivered": True, "recipient_did": recipient, "nonce": msg.nonce.hex()})

    run_guarded(run)


@message.command("read")
@click.pass_obj
def message_read(ctx):
    def run():
        events = _sync_inbox(ctx)
        emit({"messages": events})

    run_guarded(run)


# -- presentations -------------------------------------------------------------------


@main.group("present")
def present():
    """Create and verify credential presentations."""


@present.command("create")
@click.option("--credential", "credential_ids", multiple=True, required=True)
@click.option("--nonce", required=True, help="challenge nonce issued by the verifier")
@click.pass_obj
def present_create(ctx, credential_ids, nonce):
    def run():
        w = ctx.wallet()
        presentation = create_presentation(w, list(credential_ids), w.signing.private, nonce)
        w.save()
        emit({"presentation": presentation.to_dict()})

    run_guarded(run)


@present.command("verify")
@click.option("--nonce", required=True)
@click.option("--file", "file_path", type=click.Path(exists=True), default=None, help="presentation JSON (default: stdin)")
@click.pass_obj
def present_verify(ctx, nonce, file_path):
    def run():
        raw = Path(file_path).read_text("utf-8") if file_path else sys.stdin.read()
        doc = json.loads(raw)
        presentation = doc.get("presentation", doc)
        api = ctx.authenticated()
        result = api.call("POST", "/presentations/verify", {"presentation": presentation, "expected_nonce": nonce})
        emit(result, 0 if result.get("ok") else 3)

    run_guarded(run)


@present.command("nonce")
@click.pass_obj
def present_nonce(ctx):
    """Mint a fresh challenge nonce (verifier side)."""
    emit({"nonce": VerifierSession.new_nonce()})


# -- offline / expiry -----------------------------------------------------------------


@main.command("offline")
@click.argument("action", type=click.Choice(["flush"]))
@click.pass_obj
def offline(ctx, action):
    """Flush the queued offline transactions through normal validation."""

    def run():
        emit(ctx.authenticated().call("POST", "/offline/flush"))

    run_guarded(run)


@main.command("expire")
@click.argument("action", type=click.Choice(["sweep"]))
@click.pass_obj
def expire(ctx, action):
    """Expire every finalized attestation past its validity period."""

    def run():
        emit(ctx.authenticated().call("POST", "/expire/sweep"))

    run_guarded(run)


# -- demo ---------------------------------------------------------------------------


@main.command("demo")
@click.argument("action", type=click.Choice(["run"]))
@click.option("--document", "document_id", default=None, help="document id (default: random)")
@click.pass_obj
def demo(ctx, action, document_id):
    """End-to-end scenario: request, five phases, finalize, present, verify."""

    def run():
        from .demo import run_demo

        emit(run_demo(ctx, document_id))

    run_guarded(run)


if __name__ == "__main__":  # pragma: no cover
    main()
