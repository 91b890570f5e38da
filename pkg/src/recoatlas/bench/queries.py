"""Benchmark query instances and bundle cleaning."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import QueryFileError
from ..records import read_jsonl, write_jsonl

TASK_TYPES = ("comparative_shopping", "bundle")
BUNDLE_MIN, BUNDLE_MAX = 3, 7


@dataclass(frozen=True)
class QueryInstance:
    key: str
    query: str
    task_type: str
    target_item: str
    bundle_items: tuple[str, ...] | None = None

    @property
    def truth(self) -> tuple[str, ...]:
        """Ground-truth set G: the bundle for bundle tasks, the single target otherwise."""
        return self.bundle_items if self.task_type == "bundle" else (self.target_item,)

    def to_dict(self) -> dict:
        d = {"key": self.key, "query": self.query, "task_type": self.task_type, "target_item": self.target_item}
        if self.bundle_items is not None:
            d["bundle_items"] = list(self.bundle_items)
        return d

    @classmethod
    def from_dict(cls, d: dict, where: str = "?") -> "QueryInstance":
        key = d.get("key") if isinstance(d, dict) else None
        label = key if isinstance(key, str) else where

        def bad(field: str, why: str):
            return QueryFileError(f"instance {label!r}: field {field!r} {why}", key=label, field=field)

        if not isinstance(d, dict):
            raise bad("<record>", "must be an object")
        for name in ("key", "query", "target_item"):
            if not isinstance(d.get(name), str) or not d[name].strip():
                raise bad(name, "must be a non-empty string")
        if d.get("task_type") not in TASK_TYPES:
            raise bad("task_type", f"must be one of {TASK_TYPES}")
        bundle = d.get("bundle_items")
        if d["task_type"] == "bundle":
            if not isinstance(bundle, list) or not all(isinstance(b, str) for b in bundle):
                raise bad("bundle_items", "is required for bundle instances and must be a list of ids")
            if len(set(bundle)) != len(bundle):
                raise bad("bundle_items", "contains duplicates")
            if not BUNDLE_MIN <= len(bundle) <= BUNDLE_MAX:
                raise bad("bundle_items", f"must hold {BUNDLE_MIN}-{BUNDLE_MAX} items, got {len(bundle)}")
            if d["target_item"] not in bundle:
                raise bad("bundle_items", "must contain target_item")
            bundle = tuple(bundle)
        elif bundle is not None:
            if not isinstance(bundle, list) or bundle not in ([], [d["target_item"]]):
                raise bad("bundle_items", "comparative instances have a single target")
            bundle = None
        return cls(d["key"], d["query"], d["task_type"], d["target_item"], bundle)


def load_query_file(path: str | Path) -> list[QueryInstance]:
    out: list[QueryInstance] = []
    seen: set[str] = set()
    for n, rec in enumerate(read_jsonl(path), start=1):
        inst = QueryInstance.from_dict(rec, where=f"line {n}")
        if inst.key in seen:
            raise QueryFileError(f"duplicate key {inst.key!r} on line {n}", key=inst.key, field="key")
        seen.add(inst.key)
        out.append(inst)
    return out


def save_query_file(path: str | Path, instances: Iterable[QueryInstance]) -> None:
    write_jsonl(path, (i.to_dict() for i in instances))


def validate_bundle(proposed: Sequence[str], anchor: str, pool: Iterable[str],
                    min_size: int = BUNDLE_MIN, max_size: int = BUNDLE_MAX) -> list[str] | None:
    """Clean a proposed bundle; returns ``None`` when it ends up smaller than ``min_size``.

    Order: drop unknown ids, deduplicate keeping first occurrence, prepend the
    anchor when absent, reject if too small, truncate to ``max_size``. An
    anchor listed past the cut survives truncation in place of the last slot,
    so the result always contains it and the function is idempotent.
    """
    known = set(pool) | {anchor}
    kept = [i for i in proposed if i in known]
    kept = list(dict.fromkeys(kept))
    if anchor not in kept:
        kept.insert(0, anchor)
    if len(kept) < min_size:
        return None
    out = kept[:max_size]
    if anchor not in out:
        out[-1] = anchor
    return out
