"""Error hierarchy. Every error carries a stable machine-readable code.

The API and CLI surface errors as ``{"error": {"code": ..., "message": ...}}``;
the code strings below are the contract, the messages are for humans.
"""

from __future__ import annotations


class AttestError(Exception):
    """Base class; ``code`` is the wire-visible identifier."""

    code = "AttestError"
    http_status = 400

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code

    def to_dict(self) -> dict:
        return {"error": {"code": self.code, "message": self.message}}


def _define(name: str, status: int = 400) -> type[AttestError]:
    return type(name, (AttestError,), {"code": name, "http_status": status})


# canonical encoding / schema
EncodingError = _define("EncodingError")
SchemaViolation = _define("SchemaViolation")

# ledger
UnknownChain = _define("UnknownChain", 404)
UnresolvableSigner = _define("UnresolvableSigner")

# registry
MalformedKey = _define("MalformedKey")
DuplicateDid = _define("DuplicateDid", 409)
InvariantViolation = _define("InvariantViolation")
UnknownDid = _define("UnknownDid", 404)
AlreadyRevoked = _define("AlreadyRevoked", 409)
UnauthorizedIssuer = _define("UnauthorizedIssuer", 403)

# credentials
ClaimWhitelistViolation = _define("ClaimWhitelistViolation")
BadExpiry = _define("BadExpiry")
EmptyMicroSet = _define("EmptyMicroSet")
PhaseGap = _define("PhaseGap")
UnverifiedMicro = _define("UnverifiedMicro")
UnknownCredential = _define("UnknownCredential", 404)

# workflow
DuplicateRequest = _define("DuplicateRequest", 409)
UnknownHolder = _define("UnknownHolder", 404)
UnknownTemplate = _define("UnknownTemplate", 404)
UnknownRequest = _define("UnknownRequest", 404)
SkippedStep = _define("SkippedStep")
UnauthorizedAttester = _define("UnauthorizedAttester", 403)
RequestNotActive = _define("RequestNotActive", 409)
PhasesIncomplete = _define("PhasesIncomplete", 409)
AlreadyFinalized = _define("AlreadyFinalized", 409)
NotFinalized = _define("NotFinalized", 409)

# agents / messaging
UnknownRecipient = _define("UnknownRecipient", 404)
BadSignature = _define("BadSignature", 403)
DecryptionFailure = _define("DecryptionFailure")
WrongRecipient = _define("WrongRecipient")
UnknownOffer = _define("UnknownOffer", 404)
AlreadyResolved = _define("AlreadyResolved", 409)
WalletLocked = _define("WalletLocked", 403)

# service
Unauthorized = _define("Unauthorized", 401)
Forbidden = _define("Forbidden", 403)
ServiceOffline = _define("ServiceOffline", 503)
