"""Cryptographic primitives: Ed25519 signatures, X25519 agreement, AES-GCM.

Raw 32-byte key encodings throughout; hex at the serialization boundary.
Signing is deterministic (Ed25519), which keeps golden vectors stable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from .errors import DecryptionFailure, MalformedKey

KEY_LEN = 32
SIGNATURE_LEN = 64
MESSAGE_NONCE_LEN = 24  # 192-bit per-message value; first 12 bytes feed AES-GCM
_HKDF_INFO = b"attestchain/secure-message/v1"


@dataclass(frozen=True)
class SigningKeyPair:
    private: bytes
    public: bytes


@dataclass(frozen=True)
class AgreementKeyPair:
    private: bytes
    public: bytes


def generate_signing_keypair() -> SigningKeyPair:
    key = Ed25519PrivateKey.generate()
    return SigningKeyPair(
        private=key.private_bytes_raw(),
        public=key.public_key().public_bytes_raw(),
    )


def generate_agreement_keypair() -> AgreementKeyPair:
    key = X25519PrivateKey.generate()
    return AgreementKeyPair(
        private=key.private_bytes_raw(),
        public=key.public_key().public_bytes_raw(),
    )


def load_verify_key(public: bytes) -> Ed25519PublicKey:
    if not isinstance(public, bytes) or len(public) != KEY_LEN:
        raise MalformedKey("signing key must be 32 raw bytes")
    try:
        return Ed25519PublicKey.from_public_bytes(public)
    except Exception as exc:
        raise MalformedKey(f"not an Ed25519 public key: {exc}") from exc


def load_agreement_key(public: bytes) -> X25519PublicKey:
    if not isinstance(public, bytes) or len(public) != KEY_LEN:
        raise MalformedKey("key-agreement key must be 32 raw bytes")
    try:
        return X25519PublicKey.from_public_bytes(public)
    except Exception as exc:
        raise MalformedKey(f"not an X25519 public key: {exc}") from exc


def sign(private: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(private).sign(message)


def verify(public: bytes, signature: bytes, message: bytes) -> bool:
    try:
        load_verify_key(public).verify(signature, message)
        return True
    except (InvalidSignature, MalformedKey, ValueError, TypeError):
        return False


def signing_public_key(private: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(private).public_key().public_bytes_raw()


def _message_key(shared_secret: bytes, nonce: bytes) -> bytes:
    return HKDF(algorithm=SHA256(), length=32, salt=nonce, info=_HKDF_INFO).derive(shared_secret)


def seal(recipient_agreement_public: bytes, plaintext: bytes, aad: bytes) -> tuple[bytes, bytes]:
    """Ephemeral-static X25519 + AES-GCM. Returns (nonce, ciphertext).

    The ephemeral public key rides as the first 32 bytes of the ciphertext;
    the 24-byte nonce salts the KDF and its first 12 bytes are the GCM nonce.
    """
    recipient = load_agreement_key(recipient_agreement_public)
    ephemeral = X25519PrivateKey.generate()
    shared = ephemeral.exchange(recipient)
    nonce = os.urandom(MESSAGE_NONCE_LEN)
    key = _message_key(shared, nonce)
    sealed = AESGCM(key).encrypt(nonce[:12], plaintext, aad)
    return nonce, ephemeral.public_key().public_bytes_raw() + sealed


def open_sealed(recipient_agreement_private: bytes, nonce: bytes, ciphertext: bytes, aad: bytes) -> bytes:
    if len(ciphertext) < KEY_LEN or len(nonce) != MESSAGE_NONCE_LEN:
        raise DecryptionFailure("ciphertext or nonce malformed")
    ephemeral_public, sealed = ciphertext[:KEY_LEN], ciphertext[KEY_LEN:]
    try:
        shared = X25519PrivateKey.from_private_bytes(recipient_agreement_private).exchange(
            X25519PublicKey.from_public_bytes(ephemeral_public)
        )
        key = _message_key(shared, nonce)
        return AESGCM(key).decrypt(nonce[:12], sealed, aad)
    except (InvalidTag, ValueError) as exc:
        raise DecryptionFailure("authenticated decryption failed") from exc


def derive_file_key(passphrase: str, salt: bytes) -> bytes:
    """Scrypt KDF for wallet files at rest. Parameters sized for desk scale."""
    kdf = Scrypt(salt=salt, length=32, n=2**14, r=8, p=1)
    return kdf.derive(passphrase.encode("utf-8"))


def encrypt_with_passphrase(passphrase: str, plaintext: bytes) -> dict:
    salt = os.urandom(16)
    nonce = os.urandom(12)
    key = derive_file_key(passphrase, salt)
    ct = AESGCM(key).encrypt(nonce, plaintext, None)
    return {
        "kdf": "scrypt-n14-r8-p1",
        "salt": salt.hex(),
        "nonce": nonce.hex(),
        "ciphertext": ct.hex(),
    }


def decrypt_with_passphrase(passphrase: str, envelope: dict) -> bytes:
    try:
        key = derive_file_key(passphrase, bytes.fromhex(envelope["salt"]))
        return AESGCM(key).decrypt(
            bytes.fromhex(envelope["nonce"]), bytes.fromhex(envelope["ciphertext"]), None
        )
    except (InvalidTag, KeyError, ValueError) as exc:
        raise DecryptionFailure("wrong passphrase or corrupted file") from exc
