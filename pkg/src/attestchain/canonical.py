"""Canonical JSON encoding, hashing, base58, and timestamp helpers.

Every signature and digest in the system is computed over canonical bytes:
lexicographically sorted keys, no insignificant whitespace, UTF-8, integers
as unquoted decimals, timestamps as RFC 3339 UTC strings with seconds
precision. Absent optional fields are omitted (never null). Floats are
rejected outright; no schema in the system carries one.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone

from .errors import EncodingError

RFC3339_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

_BASE58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_BASE58_INDEX = {c: i for i, c in enumerate(_BASE58_ALPHABET)}


def _check_encodable(obj):
    if obj is None or isinstance(obj, (str, bool)):
        return
    if isinstance(obj, float):
        raise EncodingError("floats are not representable in canonical form")
    if isinstance(obj, int):
        return
    if isinstance(obj, dict):
        for k, v in obj.items():
            if not isinstance(k, str):
                raise EncodingError("object keys must be strings")
            _check_encodable(v)
        return
    if isinstance(obj, (list, tuple)):
        for item in obj:
            _check_encodable(item)
        return
    raise EncodingError(f"type {type(obj).__name__} is not representable in canonical form")


def canonical_bytes(obj) -> bytes:
    """Serialize a JSON-safe object to its canonical byte form.

    Pure and deterministic: equal values yield identical bytes regardless
    of dict construction order.
    """
    _check_encodable(obj)
    try:
        text = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return text.encode("utf-8")
    except (UnicodeEncodeError, ValueError) as exc:
        raise EncodingError(f"value not encodable as UTF-8 JSON: {exc}") from exc


def canonical_text(obj) -> str:
    return canonical_bytes(obj).decode("utf-8")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def base58_encode(data: bytes) -> str:
    """Bitcoin-alphabet base58; leading zero bytes map to '1'."""
    n = int.from_bytes(data, "big")
    out = []
    while n > 0:
        n, rem = divmod(n, 58)
        out.append(_BASE58_ALPHABET[rem])
    pad = len(data) - len(data.lstrip(b"\x00"))
    return "1" * pad + "".join(reversed(out))


def base58_decode(text: str) -> bytes:
    n = 0
    for c in text:
        if c not in _BASE58_INDEX:
            raise EncodingError(f"invalid base58 character {c!r}")
        n = n * 58 + _BASE58_INDEX[c]
    body = n.to_bytes((n.bit_length() + 7) // 8, "big") if n else b""
    pad = len(text) - len(text.lstrip("1"))
    return b"\x00" * pad + body


def utc_now() -> datetime:
    """Current UTC instant truncated to seconds precision."""
    return datetime.now(timezone.utc).replace(microsecond=0)


def format_instant(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0).strftime(RFC3339_FORMAT)


def parse_instant(text: str) -> datetime:
    try:
        dt = datetime.strptime(text, RFC3339_FORMAT).replace(tzinfo=timezone.utc)
    except (ValueError, TypeError) as exc:
        raise EncodingError(f"not an RFC 3339 UTC seconds-precision instant: {text!r}") from exc
    # strptime matches literals case-insensitively ('z' for 'Z'); only the
    # exact canonical spelling round-trips, everything else is rejected.
    if dt.strftime(RFC3339_FORMAT) != text:
        raise EncodingError(f"not in canonical RFC 3339 form: {text!r}")
    return dt


def is_instant(text) -> bool:
    if not isinstance(text, str):
        return False
    try:
        parse_instant(text)
        return True
    except EncodingError:
        return False
