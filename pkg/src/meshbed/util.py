"""Small shared helpers: canonical JSON and seed derivation.

Everything that ends up on disk or on the wire goes through canonical_json,
so equal values always produce identical bytes regardless of dict build
order. Seeds for independent random substreams are derived with SHA-256 so
they are stable across processes (unlike the builtin hash()).
"""

import hashlib
import json


def canonical_json(obj) -> str:
    """Serialize to the canonical single-line JSON form (sorted keys)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)


def derive_seed(*parts) -> int:
    """Derive a 64-bit RNG seed from an arbitrary key tuple, stably."""
    key = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
