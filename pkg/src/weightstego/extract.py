from __future__ import annotations

import hashlib
import hmac

from .container import ModelContainer
from .embed import Manifest, Payload
from .exceptions import PlanError
from .floatcodec import recover_bits


def extract_payload(c: ModelContainer, m: Manifest) -> Payload:
    """Reassemble the payload described by ``m``.

    Integrity is not checked here; compare ``payload.sha256`` with the
    manifest (or call :func:`verify`) and decide what to do on mismatch.
    """
    m.plan.validate(c)
    parts = []
    for seg in m.segments:
        bits = c.bits(seg.tensor)[seg.start_param:seg.start_param + seg.param_count]
        parts.append(recover_bits(bits, m.method))
    stream = b"".join(parts)
    if len(stream) < m.payload_length:
        raise PlanError(f"manifest segments hold {len(stream)} bytes, payload_length is {m.payload_length}")
    return Payload(stream[:m.payload_length])


def verify(p: Payload | bytes, expected_sha256: str | bytes) -> bool:
    data = p.data if isinstance(p, Payload) else bytes(p)
    if isinstance(expected_sha256, str):
        try:
            expected_sha256 = bytes.fromhex(expected_sha256)
        except ValueError:
            return False
    return hmac.compare_digest(hashlib.sha256(data).digest(), expected_sha256)
