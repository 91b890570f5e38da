from __future__ import annotations

import hashlib
import json
import math
from typing import Any


def round_half_away(x: float) -> int:
    """Round to the nearest integer, halves away from zero (2.5 -> 3, -2.5 -> -3)."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def stable_seed(*parts: Any) -> int:
    """64-bit seed from a sorted-key textual serialization of ``parts``.

    Independent of PYTHONHASHSEED and platform.
    """
    digest = hashlib.blake2b(canonical_json(list(parts)).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
