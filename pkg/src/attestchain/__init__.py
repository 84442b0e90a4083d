"""attestchain: desk-scale document attestation on a tamper-evident ledger.

Hash-linked per-request attestation chains, a verifiable data registry of
DIDs and revocations, micro-credentials per attestation phase, an aggregate
credential on completion, SSI agent wallets with encrypted messaging, and an
HTTP service + CLI tying it together.
"""

__version__ = "0.1.0"
