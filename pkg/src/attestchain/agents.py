"""SSI agents: wallets, encrypted peer-to-peer messages, credential offers.

A wallet is a single-writer encrypted file holding the owner's key pairs,
accepted credentials, pending offers, and an append-only audit log. Messages
are sealed to the recipient's key-agreement key (ephemeral-static X25519 +
AES-GCM) and signed by the sender's registered signing key, so the store-
and-forward inbox only ever sees ciphertext.
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
    AlreadyResolved,
    BadSignature,
    InvariantViolation,
    UnknownDid,
    UnknownOffer,
    UnknownRecipient,
    WrongRecipient,
)
from .registry import Registry

OFFER_MESSAGE_TYPE = "credential_offer"
OFFER_RESPONSE_TYPE = "offer_response"

_wallet_locks: dict[str, threading.Lock] = {}
_wallet_locks_guard = threading.Lock()


def _lock_for(path: Path) -> threading.Lock:
    with _wallet_locks_guard:
        return _wallet_locks.setdefault(str(path), threading.Lock())


class AuditEvent(str, enum.Enum):
    OFFER_RECEIVED = "OfferReceived"
    OFFER_ACCEPTED = "OfferAccepted"
    OFFER_REJECTED = "OfferRejected"
    DISCLOSED = "Disclosed"
    MESSAGE_SENT = "MessageSent"
    MESSAGE_RECEIVED = "MessageReceived"


@dataclass
class SecureMessage:
    sender_did: str
    recipient_did: str
    nonce: bytes
    ciphertext: bytes
    sender_signature: bytes
    sent_at: datetime

    def signing_payload(self) -> bytes:
        return self.recipient_did.encode("utf-8") + self.nonce + self.ciphertext

    def to_dict(self) -> dict:
        return {
            "sender_did": self.sender_did,
            "recipient_did": self.recipient_did,
            "nonce": self.nonce.hex(),
            "ciphertext": self.ciphertext.hex(),
            "sender_signature": self.sender_signature.hex(),
            "sent_at": canonical.format_instant(self.sent_at),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SecureMessage":
        return cls(
            sender_did=doc["sender_did"],
            recipient_did=doc["recipient_did"],
            nonce=bytes.fromhex(doc["nonce"]),
            ciphertext=bytes.fromhex(doc["ciphertext"]),
            sender_signature=bytes.fromhex(doc["sender_signature"]),
            sent_at=canonical.parse_instant(doc["sent_at"]),
        )


def _message_aad(sender_did: str, recipient_did: str) -> bytes:
    return canonical.canonical_bytes([sender_did, recipient_did])


class Wallet:
    """Holder of keys, credentials, offers, and the consent/audit trail.

    Single-writer: callers serialize mutations per wallet file (the module
    keeps per-path locks for in-process use). The audit log is append-only;
    ``seq`` makes the ordering strict even when second-precision timestamps
    collide.
    """

    def __init__(
        self,
        owner_did: str,
        signing: keys.SigningKeyPair,
        agreement: keys.AgreementKeyPair,
        clock: Callable[[], datetime] = canonical.utc_now,
    ):
        self.owner_did = owner_did
        self.signing = signing
        self.agreement = agreement
        self.credentials: dict[str, dict] = {}
        self.offers: dict[str, dict] = {}
        self.audit_log: list[dict] = []
        self._audit_seq = 0
        self._clock = clock
        self.path: Optional[Path] = None
        self._passphrase: Optional[str] = None

    # -- construction / persistence --------------------------------------

    @classmethod
    def create(cls, clock: Callable[[], datetime] = canonical.utc_now) -> "Wallet":
        from .registry import derive_did

        signing = keys.generate_signing_keypair()
        agreement = keys.generate_agreement_keypair()
        return cls(derive_did(signing.public), signing, agreement, clock)

    def to_inner_dict(self) -> dict:
        return {
            "owner_did": self.owner_did,
            "signing_private_key": self.signing.private.hex(),
            "signing_public_key": self.signing.public.hex(),
            "agreement_private_key": self.agreement.private.hex(),
            "agreement_public_key": self.agreement.public.hex(),
            "credentials": self.credentials,
            "offers": self.offers,
            "audit_log": self.audit_log,
            "audit_seq": self._audit_seq,
        }

    @classmethod
    def from_inner_dict(cls, doc: dict, clock: Callable[[], datetime] = canonical.utc_now) -> "Wallet":
        wallet = cls(
            owner_did=doc["owner_did"],
            signing=keys.SigningKeyPair(
                private=bytes.fromhex(doc["signing_private_key"]),
                public=bytes.fromhex(doc["signing_public_key"]),
            ),
            agreement=keys.AgreementKeyPair(
                private=bytes.fromhex(doc["agreement_private_key"]),
                public=bytes.fromhex(doc["agreement_public_key"]),
            ),
            clock=clock,
        )
        wallet.credentials = dict(doc.get("credentials", {}))
        wallet.offers = dict(doc.get("offers", {}))
        wallet.audit_log = list(doc.get("audit_log", []))
        wallet._audit_seq = doc.get("audit_seq", len(wallet.audit_log))
        return wallet

    def save(self, path: Optional[Path] = None, passphrase: Optional[str] = None) -> Path:
        path = Path(path) if path is not None else self.path
        passphrase = passphrase if passphrase is not None else self._passphrase
        if path is None or passphrase is None:
            raise InvariantViolation("wallet save needs a path and passphrase")
        envelope = keys.encrypt_with_passphrase(passphrase, canonical.canonical_bytes(self.to_inner_dict()))
        envelope["format"] = "attestchain-wallet-v1"
        with _lock_for(path):
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(canonical.canonical_bytes(envelope))
        self.path, self._passphrase = path, passphrase
        return path

    @classmethod
    def load(
        cls, path: Path | str, passphrase: str, clock: Callable[[], datetime] = canonical.utc_now
    ) -> "Wallet":
        path = Path(path)
        envelope = json.loads(path.read_text("utf-8"))
        inner = json.loads(keys.decrypt_with_passphrase(passphrase, envelope))
        wallet = cls.from_inner_dict(inner, clock)
        wallet.path, wallet._passphrase = path, passphrase
        return wallet

    # -- audit trail ------------------------------------------------------

    def _audit(self, event: AuditEvent, counterparty_did: str, subject_ids: list[str]) -> dict:
        self._audit_seq += 1
        entry = {
            "seq": self._audit_seq,
            "event": event.value,
            "counterparty_did": counterparty_did,
            "timestamp": canonical.format_instant(self._clock()),
            "subject_ids": list(subject_ids),
        }
        self.audit_log.append(entry)
        return entry

    def record_disclosure(self, challenge_nonce: str, credential_ids: list[str]) -> dict:
        return self._audit(AuditEvent.DISCLOSED, f"nonce:{challenge_nonce}", credential_ids)

    # -- credentials / offers ---------------------------------------------

    def credential_doc(self, credential_id: str) -> Optional[dict]:
        doc = self.credentials.get(credential_id)
        return dict(doc) if doc is not None else None

    def _store_credential(self, doc: dict) -> None:
        if doc.get("subject_did") != self.owner_did and doc.get("holder_did") != self.owner_did:
            raise InvariantViolation("credential subject/holder is not the wallet owner")
        self.credentials[doc["id"]] = dict(doc)

    def ingest_offer(self, offer_id: str, credential_doc: dict, from_did: str) -> bool:
        """Record a pending offer; idempotent by offer id. True if new."""
        if offer_id in self.offers:
            return False
        self.offers[offer_id] = {
            "offer_id": offer_id,
            "credential": dict(credential_doc),
            "from_did": from_did,
            "status": "pending",
        }
        self._audit(AuditEvent.OFFER_RECEIVED, from_did, [credential_doc.get("id", "")])
        return True

    def pending_offers(self) -> list[dict]:
        return [dict(o) for o in self.offers.values() if o["status"] == "pending"]

    def respond_to_offer(self, offer_id: str, accept: bool) -> dict:
        offer = self.offers.get(offer_id)
        if offer is None:
            raise UnknownOffer(f"no offer {offer_id!r}")
        if offer["status"] != "pending":
            raise AlreadyResolved(f"offer {offer_id!r} was already {offer['status']}")
        credential_id = offer["credential"].get("id", "")
        if accept:
            # Consent gate: the acceptance entry precedes the stored credential.
            self._audit(AuditEvent.OFFER_ACCEPTED, offer["from_did"], [credential_id])
            self._store_credential(offer["credential"])
            offer["status"] = "accepted"
        else:
            self._audit(AuditEvent.OFFER_REJECTED, offer["from_did"], [credential_id])
            offer["status"] = "rejected"
        return dict(offer)


# -- messaging -------------------------------------------------------------


def send_message(
    wallet: Wallet,
    recipient_did: str,
    plaintext: bytes,
    registry: Registry,
    clock: Callable[[], datetime] = canonical.utc_now,
) -> SecureMessage:
    try:
        recipient = registry.resolve_did(recipient_did)
    except UnknownDid:
        raise UnknownRecipient(f"{recipient_did} is not registered") from None
    nonce, ciphertext = keys.seal(
        recipient.key_agreement_key, plaintext, _message_aad(wallet.owner_did, recipient_did)
    )
    msg = SecureMessage(
        sender_did=wallet.owner_did,
        recipient_did=recipient_did,
        nonce=nonce,
        ciphertext=ciphertext,
        sender_signature=b"",
        sent_at=clock(),
    )
    msg.sender_signature = keys.sign(wallet.signing.private, msg.signing_payload())
    wallet._audit(AuditEvent.MESSAGE_SENT, recipient_did, [])
    return msg


def open_message(wallet: Wallet, msg: SecureMessage, registry: Registry, audit: bool = True) -> bytes:
    """Unseal a message addressed to this wallet; logs MessageReceived."""
    if msg.recipient_did != wallet.owner_did:
        raise WrongRecipient(f"message is addressed to {msg.recipient_did}")
    try:
        sender = registry.resolve_did(msg.sender_did)
    except UnknownDid:
        raise BadSignature(f"sender {msg.sender_did} is not registered") from None
    if not keys.verify(sender.signing_key, msg.sender_signature, msg.signing_payload()):
        raise BadSignature("sender signature does not verify")
    plaintext = keys.open_sealed(
        wallet.agreement.private, msg.nonce, msg.ciphertext, _message_aad(msg.sender_did, msg.recipient_did)
    )
    if audit:
        wallet._audit(AuditEvent.MESSAGE_RECEIVED, msg.sender_did, [])
    return plaintext


def offer_credential(
    issuer_wallet: Wallet,
    holder_did: str,
    credential_doc: dict,
    registry: Registry,
    deliver: Callable[[SecureMessage], None],
    micro_lookup: Optional[Callable] = None,
    clock: Callable[[], datetime] = canonical.utc_now,
) -> str:
    """Verify issuer-side, then deliver the credential as a sealed offer."""
    from . import credentials as creds

    cred_id = str(credential_doc.get("id", ""))
    if cred_id.startswith(creds.MICRO_ID_PREFIX):
        result = creds.verify_micro_credential(creds.MicroCredential.from_dict(credential_doc), registry, clock())
    elif cred_id.startswith(creds.AGGREGATE_ID_PREFIX):
        result = creds.verify_aggregate_credential(
            creds.AggregateCredential.from_dict(credential_doc), micro_lookup or (lambda _id: None), registry, clock()
        )
    else:
        raise InvariantViolation(f"not a credential document: {cred_id!r}")
    if not result.ok:
        raise BadSignature(f"credential fails issuer-side verification: {result.reason.value}")

    if not registry.has_did(holder_did):
        raise UnknownRecipient(f"{holder_did} is not registered")
    offer_id = "offer-" + secrets.token_hex(8)
    plaintext = canonical.canonical_bytes(
        {"type": OFFER_MESSAGE_TYPE, "offer_id": offer_id, "credential": credential_doc}
    )
    deliver(send_message(issuer_wallet, holder_did, plaintext, registry, clock))
    return offer_id


def process_inbox(
    wallet: Wallet, messages: list[SecureMessage], registry: Registry
) -> list[dict]:
    """Drain inbox messages into the wallet: offers become pending entries,
    everything else is surfaced with a MessageReceived audit entry."""
    results = []
    for msg in messages:
        plaintext = open_message(wallet, msg, registry, audit=False)
        kind = None
        body = None
        try:
            body = json.loads(plaintext)
            kind = body.get("type") if isinstance(body, dict) else None
        except (ValueError, UnicodeDecodeError):
            pass
        if kind == OFFER_MESSAGE_TYPE:
            wallet.ingest_offer(body["offer_id"], body["credential"], msg.sender_did)
            results.append({"type": OFFER_MESSAGE_TYPE, "offer_id": body["offer_id"], "from_did": msg.sender_did})
        else:
            wallet._audit(AuditEvent.MESSAGE_RECEIVED, msg.sender_did, [])
            results.append(
                {
                    "type": kind or "message",
                    "from_did": msg.sender_did,
                    "body": body if body is not None else plaintext.decode("utf-8", "replace"),
                }
            )
    return results


def respond_to_offer(
    wallet: Wallet,
    offer_id: str,
    accept: bool,
    registry: Registry,
    deliver: Callable[[SecureMessage], None],
    clock: Callable[[], datetime] = canonical.utc_now,
) -> dict:
    """Accept or reject a pending offer and notify the issuing agent."""
    offer = wallet.respond_to_offer(offer_id, accept)
    notice = canonical.canonical_bytes(
        {"type": OFFER_RESPONSE_TYPE, "offer_id": offer_id, "decision": "accept" if accept else "reject"}
    )
    try:
        deliver(send_message(wallet, offer["from_did"], notice, registry, clock))
    except UnknownRecipient:
        pass  # issuer vanished from the registry; the local decision stands
    return offer


class InboxStore:
    """Store-and-forward mailbox per DID, persisted as JSONL when rooted."""

    def __init__(self, root: Optional[Path] = None):
        self._root = Path(root) if root is not None else None
        self._queues: dict[str, list[dict]] = {}
        self._lock = threading.Lock()
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)
            for path in self._root.glob("*.inbox.jsonl"):
                did = path.name[: -len(".inbox.jsonl")]
                self._queues[did] = [
                    json.loads(line) for line in path.read_text("utf-8").splitlines() if line.strip()
                ]

    def _path(self, did: str) -> Optional[Path]:
        return self._root / f"{did}.inbox.jsonl" if self._root is not None else None

    def post(self, msg_doc: dict) -> None:
        did = msg_doc["recipient_did"]
        with self._lock:
            self._queues.setdefault(did, []).append(dict(msg_doc))
            path = self._path(did)
            if path is not None:
                with path.open("ab") as fh:
                    fh.write(canonical.canonical_bytes(msg_doc) + b"\n")

    def drain(self, did: str) -> list[dict]:
        with self._lock:
            messages = self._queues.pop(did, [])
            path = self._path(did)
            if path is not None and path.exists():
                path.unlink()
            return messages

    def peek(self, did: str) -> list[dict]:
        with self._lock:
            return [dict(m) for m in self._queues.get(did, [])]
