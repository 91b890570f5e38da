"""Catalog ingestion: filtering, product text construction and user-level splits."""

from __future__ import annotations

import logging
import math
import random
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional

from .errors import CannotSplitError, EmptyCatalogError, InsufficientDescriptionError
from .utils import round_half_away

log = logging.getLogger(__name__)

POSITIVE_RATING = 4.0
TITLE_MAX_CHARS = 200
DESC_MAX_CHARS = 500
_TEXT_PREFIX = "Title: "
_TEXT_SEP = " | Description: "
_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class RawItem:
    item_id: str
    title: str
    description_fragments: list[str]
    price: Optional[float]
    category_path: list[str]

    @classmethod
    def from_dict(cls, d: dict) -> "RawItem":
        frags = d.get("description_fragments", d.get("description", []))
        if isinstance(frags, str):
            frags = [frags]
        return cls(
            item_id=str(d["item_id"]),
            title=d.get("title") or "",
            description_fragments=list(frags or []),
            price=d.get("price"),
            category_path=list(d.get("category_path") or []),
        )


@dataclass(frozen=True)
class RawReview:
    user_id: str
    item_id: str
    rating: float
    timestamp: int
    text: str = ""

    def __post_init__(self):
        if not 1.0 <= self.rating <= 5.0:
            raise ValueError(f"rating {self.rating} outside [1,5]")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")

    @classmethod
    def from_dict(cls, d: dict) -> "RawReview":
        return cls(
            user_id=str(d["user_id"]),
            item_id=str(d["item_id"]),
            rating=float(d["rating"]),
            timestamp=int(d["timestamp"]),
            text=d.get("text") or "",
        )


@dataclass(frozen=True)
class CatalogItem:
    item_id: str
    title: str
    description: str
    price: float
    subcategory: str
    product_text: str

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CatalogItem":
        return cls(**{k: d[k] for k in ("item_id", "title", "description", "price", "subcategory", "product_text")})


@dataclass
class FilterConfig:
    price_min: float = 0.99
    price_max: float = 10000.0
    min_review_chars: int = 20
    min_desc_chars: int = 15
    heldout_user_frac: float = 0.10
    split_seed: int = 42
    max_users: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.price_min < self.price_max:
            raise ValueError("need 0 < price_min < price_max")
        if not 0 < self.heldout_user_frac < 1:
            raise ValueError("heldout_user_frac must lie in (0, 1)")


class Catalog:
    """Immutable item universe keyed by item id, iterated in ascending id order."""

    def __init__(self, items: Iterable[CatalogItem]):
        by_id = {}
        for it in items:
            if it.item_id in by_id:
                raise ValueError(f"duplicate item id {it.item_id!r}")
            by_id[it.item_id] = it
        self._items = {k: by_id[k] for k in sorted(by_id)}
        self.ids: list[str] = list(self._items)
        self.index: dict[str, int] = {k: i for i, k in enumerate(self.ids)}
        self.subcategory: dict[str, str] = {k: v.subcategory for k, v in self._items.items()}

    @property
    def items(self) -> dict[str, CatalogItem]:
        return self._items

    def __len__(self):
        return len(self._items)

    def __contains__(self, item_id) -> bool:
        return isinstance(item_id, str) and item_id in self._items

    def __getitem__(self, item_id: str) -> CatalogItem:
        return self._items[item_id]

    def __iter__(self):
        return iter(self._items.values())

    def subcategories(self) -> dict[str, list[str]]:
        groups: dict[str, list[str]] = {}
        for k, it in self._items.items():
            groups.setdefault(it.subcategory, []).append(k)
        return groups

    def to_records(self) -> list[dict]:
        return [it.to_dict() for it in self._items.values()]

    @classmethod
    def from_records(cls, rows: Iterable[dict]) -> "Catalog":
        return cls(CatalogItem.from_dict(r) for r in rows)


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    rating: float
    timestamp: int

    @property
    def positive(self) -> bool:
        return self.rating >= POSITIVE_RATING


@dataclass
class InteractionTable:
    rows: list[Interaction] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    @property
    def positives(self) -> list[Interaction]:
        return [r for r in self.rows if r.positive]

    def users(self) -> list[str]:
        return sorted({r.user_id for r in self.rows})

    def to_records(self) -> list[dict]:
        return [dict(asdict(r), positive=r.positive) for r in self.rows]

    @classmethod
    def from_records(cls, rows: Iterable[dict]) -> "InteractionTable":
        return cls([Interaction(str(r["user_id"]), str(r["item_id"]), float(r["rating"]), int(r["timestamp"])) for r in rows])


def is_english(text: str, min_ratio: float = 0.9) -> bool:
    """Cheap English check: ASCII share among alphabetic characters."""
    letters = [ch for ch in text if ch.isalpha()]
    if not letters:
        return False
    ascii_letters = sum(1 for ch in letters if ch.isascii())
    return ascii_letters / len(letters) >= min_ratio


def clean_text(fragments: Iterable[str]) -> str:
    return _WS.sub(" ", " ".join(str(f) for f in fragments)).strip()


def build_product_text(raw: RawItem, min_desc_chars: int = 15) -> CatalogItem:
    title = _WS.sub(" ", raw.title).strip()[:TITLE_MAX_CHARS]
    desc = clean_text(raw.description_fragments)
    if len(desc) < min_desc_chars:
        raise InsufficientDescriptionError(
            f"item {raw.item_id!r}: description has {len(desc)} chars after cleaning, need {min_desc_chars}"
        )
    desc = desc[:DESC_MAX_CHARS]
    subcat = raw.category_path[-1] if raw.category_path else ""
    return CatalogItem(
        item_id=raw.item_id,
        title=title,
        description=desc,
        price=_parse_price(raw.price) or 0.0,
        subcategory=subcat,
        product_text=f"{_TEXT_PREFIX}{title}{_TEXT_SEP}{desc}",
    )


def parse_product_text(text: str) -> tuple[str, str]:
    if not text.startswith(_TEXT_PREFIX) or _TEXT_SEP not in text:
        raise ValueError("not a product text")
    title, desc = text[len(_TEXT_PREFIX):].split(_TEXT_SEP, 1)
    return title, desc


def _parse_price(price) -> Optional[float]:
    if price is None or isinstance(price, bool):
        return None
    if isinstance(price, str):
        price = price.strip().lstrip("$").replace(",", "")
    try:
        value = float(price)
    except (TypeError, ValueError):
        return None
    return value if math.isfinite(value) else None


def filter_catalog(
    raw_items: Iterable[RawItem],
    raw_reviews: Iterable[RawReview],
    cfg: FilterConfig | None = None,
    english: Callable[[str], bool] = is_english,
) -> Catalog:
    cfg = cfg or FilterConfig()
    raw_items = list(raw_items)
    raw_reviews = list(raw_reviews)
    if not raw_items or not raw_reviews:
        raise EmptyCatalogError("raw item and review tables must be non-empty")
    seen = set()
    for it in raw_items:
        if not it.item_id:
            raise ValueError("empty item_id in raw dump")
        if it.item_id in seen:
            raise ValueError(f"duplicate raw item_id {it.item_id!r}")
        seen.add(it.item_id)

    reviewed = {
        r.item_id
        for r in raw_reviews
        if len(r.text.strip()) >= cfg.min_review_chars and english(r.text)
    }
    kept = []
    for it in raw_items:
        price = _parse_price(it.price)
        if price is None or not cfg.price_min <= price <= cfg.price_max:
            continue
        if not it.category_path or not str(it.category_path[-1]).strip():
            continue
        if it.item_id not in reviewed:
            continue
        try:
            kept.append(build_product_text(it, cfg.min_desc_chars))
        except InsufficientDescriptionError:
            continue
    if not kept:
        raise EmptyCatalogError("no items survived catalog filtering")
    return Catalog(kept)


def filter_interactions(raw_reviews: Iterable[RawReview], catalog: Catalog, cfg: FilterConfig | None = None) -> InteractionTable:
    cfg = cfg or FilterConfig()
    rows = [
        Interaction(r.user_id, r.item_id, float(r.rating), int(r.timestamp))
        for r in raw_reviews
        if r.item_id in catalog
    ]
    if cfg.max_users is not None:
        counts = Counter(r.user_id for r in rows)
        ranked = sorted(counts, key=lambda u: (-counts[u], u))
        keep = set(ranked[: cfg.max_users])
        rows = [r for r in rows if r.user_id in keep]
    rows.sort(key=lambda r: (r.user_id, r.timestamp, r.item_id, r.rating))
    if not rows:
        log.warning("interaction table is empty after filtering")
    return InteractionTable(rows)


def split_users(tbl: InteractionTable, cfg: FilterConfig | None = None) -> tuple[InteractionTable, InteractionTable]:
    """Partition rows by user; a seeded shuffle of the sorted user list picks the held-out side."""
    cfg = cfg or FilterConfig()
    users = tbl.users()
    if len(users) < 2:
        raise CannotSplitError(f"cannot split {len(users)} user(s); need at least 2")
    random.Random(cfg.split_seed).shuffle(users)
    n_held = min(max(round_half_away(cfg.heldout_user_frac * len(users)), 1), len(users) - 1)
    held = set(users[:n_held])
    train = InteractionTable([r for r in tbl.rows if r.user_id not in held])
    heldout = InteractionTable([r for r in tbl.rows if r.user_id in held])
    return train, heldout
