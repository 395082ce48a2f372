"""Canonical serialisation and fingerprints for configs and results."""

import hashlib
import json


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def fingerprint(payload) -> str:
    """Stable SHA-256 hex digest of ``payload`` in canonical JSON form."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
