"""Synthetic shopping world with planted complement kits.

Structure:

* a *project* (hobby) times a *role* (product type) is a subcategory;
* a *kit* is 3-5 items of one project in distinct roles. Kit members share
  a code word that is specific to (role, code), so kit mates have no token
  in common beyond the project name. Raw cosine cannot tell a kit mate from
  any other item of the project, but the code-to-code mapping is shared by
  every project and a trained complement model can learn it from
  co-purchases;
* queries describe items through attribute synonyms ("small" for
  "compact"), which only a trained query head can map back;
* standalone items (never part of a kit) may have near-duplicate color
  variants for the substitute tool to prune.

Users buy kits on a single day and buy standalone items on separate days,
so only kit purchases form co-purchase pairs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..behavior.training import QueryPair
from ..catalog import InteractionTable, RawItem, RawReview
from .queries import QueryInstance

PROJECTS = (
    "aquarium", "pottery", "camping", "birding", "baking", "cycling", "knitting", "painting", "gardening",
    "climbing", "fishing", "woodworking", "calligraphy", "astronomy", "photography", "archery", "beekeeping",
    "sailing", "surfing", "quilting",
)
ROLES = (
    ("brush", "applicator"), ("case", "carrier"), ("lamp", "illuminator"), ("manual", "handbook"),
    ("stand", "holder"), ("cleaner", "cleanser"), ("gloves", "mitts"), ("scale", "balance"),
)
ATTRIBUTES = (
    ("compact", "small"), ("durable", "sturdy"), ("waterproof", "watertight"), ("adjustable", "tunable"),
    ("foldable", "collapsible"), ("heavy", "weighty"), ("quiet", "silent"), ("bright", "luminous"),
    ("ergonomic", "comfortable"), ("premium", "luxury"), ("cheap", "affordable"), ("wooden", "timber"),
    ("metal", "steel"), ("rechargeable", "cordless"), ("portable", "travel"), ("vintage", "retro"),
    ("modern", "contemporary"), ("reinforced", "strengthened"), ("washable", "cleanable"),
    ("magnetic", "magnet"), ("padded", "cushioned"), ("transparent", "clear"), ("wide", "broad"),
    ("slim", "thin"),
)
COLORS = ("red", "blue", "green", "black", "white", "orange", "purple", "yellow")

COMPARATIVE_TEMPLATES = (
    "i am looking for a {a1} {a2} {role} for {project}",
    "need something {a1} and {a2} for {project}, ideally a {role}",
    "which {role} is {a1} and {a2}? it is for {project}",
    "recommend a {a1} {role} for {project} that is also {a2}",
)
BUNDLE_TEMPLATES = (
    "everything i need to get started with {project}, beginning with a {a1} {a2} {role}",
    "help me get started with {project}: i already picked a {a1} {a2} {role}",
)

_CONS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
DAY = 86400
EPOCH = 1_600_000_000


@dataclass
class WorldConfig:
    seed: int = 0
    n_projects: int = 20
    n_roles: int = 6
    n_codes: int = 8
    kit_min: int = 3
    kit_max: int = 5
    standalone_per_group: int = 2
    variant_prob: float = 0.35
    max_variants: int = 2
    buyers_per_kit: int = 8
    single_buyers: int = 300
    extra_purchases: tuple[int, int] = (0, 3)
    n_invalid: int = 12

    def __post_init__(self):
        if not 1 <= self.n_projects <= len(PROJECTS):
            raise ValueError(f"n_projects must lie in [1, {len(PROJECTS)}]")
        if not self.kit_min <= self.kit_max <= self.n_roles <= len(ROLES):
            raise ValueError("need kit_min <= kit_max <= n_roles <= available roles")


@dataclass
class ItemSpec:
    item_id: str
    project: str
    role: str
    attrs: tuple[str, str]
    kit: str | None = None
    variant_of: str | None = None


@dataclass
class World:
    config: WorldConfig
    raw_items: list[RawItem]
    raw_reviews: list[RawReview]
    specs: dict[str, ItemSpec]
    kits: dict[str, list[str]]
    invalid_ids: list[str] = field(default_factory=list)

    def kit_of(self, item_id: str) -> list[str] | None:
        spec = self.specs.get(item_id)
        return self.kits[spec.kit] if spec is not None and spec.kit else None


def _pseudo_words(rng: random.Random, n: int, syllables: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_CONS) + rng.choice(_VOWELS) for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def generate_world(cfg: WorldConfig | None = None) -> World:
    cfg = cfg or WorldConfig()
    rng = random.Random(cfg.seed)
    taken = set(PROJECTS) | {r for pair in ROLES for r in pair} | {a for pair in ATTRIBUTES for a in pair}
    projects = PROJECTS[: cfg.n_projects]
    roles = [r for r, _ in ROLES[: cfg.n_roles]]
    code_words = _pseudo_words(rng, cfg.n_roles * cfg.n_codes, 3, taken)
    code_word = {(r, c): code_words[i * cfg.n_codes + c] for i, r in enumerate(roles) for c in range(cfg.n_codes)}
    brands = _pseudo_words(rng, 12, 2, taken)
    attr_words = [a for a, _ in ATTRIBUTES]

    raw_items: list[RawItem] = []
    specs: dict[str, ItemSpec] = {}
    kits: dict[str, list[str]] = {}
    counter = 0

    def add_item(project, role, attrs, text_extra, kit=None) -> str:
        nonlocal counter
        counter += 1
        iid = f"P{counter:05d}"
        brand = brands[counter % len(brands)]
        model = f"m{rng.randrange(1000, 9999)}"
        title = f"{brand} {project} {role} {model}"
        desc = [f"{attrs[0]} {role} for {project}", f"{attrs[1]} build {text_extra}".strip()]
        price = round(rng.uniform(5, 400), 2)
        raw_items.append(RawItem(iid, title, desc, price, ["Hobbies", project.title(), f"{project.title()} {role.title()}"]))
        specs[iid] = ItemSpec(iid, project, role, tuple(attrs), kit)
        return iid

    for project in projects:
        for c in range(cfg.n_codes):
            size = rng.randint(cfg.kit_min, cfg.kit_max)
            kit_roles = sorted(rng.sample(roles, size), key=roles.index)
            kit_id = f"{project}-{c}"
            kits[kit_id] = [
                add_item(project, r, rng.sample(attr_words, 2), f"with {code_word[(r, c)]} fittings", kit=kit_id)
                for r in kit_roles
            ]
        for r in roles:
            for _ in range(cfg.standalone_per_group):
                attrs = rng.sample(attr_words, 2)
                base = add_item(project, r, attrs, "")
                src = raw_items[-1]
                if rng.random() < cfg.variant_prob:
                    for color in rng.sample(COLORS, rng.randint(1, cfg.max_variants)):
                        # same text as the base plus a color word
                        counter += 1
                        vid = f"P{counter:05d}"
                        raw_items.append(RawItem(vid, f"{src.title} {color}", list(src.description_fragments),
                                                 src.price, list(src.category_path)))
                        specs[vid] = ItemSpec(vid, project, r, tuple(attrs), None, base)

    invalid = []
    for n in range(cfg.n_invalid):
        counter += 1
        iid = f"P{counter:05d}"
        project, role = rng.choice(projects), rng.choice(roles)
        kind = n % 4
        if kind == 0:
            item = RawItem(iid, f"budget {project} {role}", [f"plain {role} for {project}"], 0.5, ["Hobbies", project.title(), f"{project.title()} {role.title()}"])
        elif kind == 1:
            item = RawItem(iid, f"tiny {project} {role}", ["ok"], 20.0, ["Hobbies", project.title(), f"{project.title()} {role.title()}"])
        elif kind == 2:
            item = RawItem(iid, f"luxury {project} {role}", [f"gold {role} for {project}"], 25000.0, ["Hobbies", project.title(), f"{project.title()} {role.title()}"])
        else:
            item = RawItem(iid, f"unreviewed {project} {role}", [f"quiet {role} for {project}"], 30.0, ["Hobbies", project.title(), f"{project.title()} {role.title()}"])
        raw_items.append(item)
        invalid.append(iid)

    reviews = _purchases(cfg, rng, specs, kits, invalid)
    return World(cfg, raw_items, reviews, specs, kits, invalid)


def _review_text(spec: ItemSpec, rng: random.Random) -> str:
    return rng.choice((
        f"this {spec.role} works well for my {spec.project} projects",
        f"solid {spec.role}, exactly what my {spec.project} hobby needed",
        f"the {spec.role} arrived quickly and does the job for {spec.project}",
    ))


def _purchases(cfg: WorldConfig, rng: random.Random, specs: dict[str, ItemSpec], kits: dict[str, list[str]],
               invalid: list[str]) -> list[RawReview]:
    singles = [i for i, s in specs.items() if s.kit is None]
    everything = sorted(specs)
    reviews: list[RawReview] = []
    user_no = 0

    def new_user() -> str:
        nonlocal user_no
        user_no += 1
        return f"U{user_no:05d}"

    def buy(user: str, item: str, day: int, rating: float | None = None) -> None:
        ts = EPOCH + day * DAY + rng.randrange(0, 6 * 3600)
        if rating is None:
            rating = float(rng.choice((4, 5, 5, 5)))
        reviews.append(RawReview(user, item, rating, ts, _review_text(specs[item], rng)))

    def extras(user: str, day: int) -> None:
        for j in range(rng.randint(*cfg.extra_purchases)):
            pool = singles if rng.random() < 0.7 else everything
            buy(user, rng.choice(pool), day + 3 * (j + 1), float(rng.choice((1, 2, 3, 4, 5, 5))))

    for kit_id in sorted(kits):
        members = kits[kit_id]
        for _ in range(cfg.buyers_per_kit):
            user = new_user()
            day = rng.randrange(0, 2000)
            bought = rng.sample(members, rng.randint(2, len(members)))
            for item in bought:
                buy(user, item, day)
            extras(user, day)
    for _ in range(cfg.single_buyers):
        user = new_user()
        day = rng.randrange(0, 2000)
        buy(user, rng.choice(singles), day)
        extras(user, day)

    # reviews that the filters must reject: non-English text, too short, and an invalid item's only review
    for iid in invalid[0::4] + invalid[1::4] + invalid[2::4]:
        reviews.append(RawReview(new_user(), iid, 5.0, EPOCH, "works great for this hobby, recommended"))
    for iid in invalid[3::4]:
        reviews.append(RawReview(new_user(), iid, 5.0, EPOCH, "ótimo produto, muito útil, recomendo à família"))
        reviews.append(RawReview(new_user(), iid, 4.0, EPOCH + DAY, "ok"))
    return reviews


# ---------------------------------------------------------------- queries

_SYNONYM = dict(ATTRIBUTES)
_ROLE_SYNONYM = dict(ROLES)


def describe(spec: ItemSpec, rng: random.Random, templates=COMPARATIVE_TEMPLATES, role_synonym_prob: float = 0.5) -> str:
    a1, a2 = (_SYNONYM[a] for a in spec.attrs)
    if rng.random() < 0.5:
        a1, a2 = a2, a1
    role = _ROLE_SYNONYM[spec.role] if rng.random() < role_synonym_prob else spec.role
    return rng.choice(templates).format(a1=a1, a2=a2, role=role, project=spec.project)


def query_pairs(world: World, interactions: InteractionTable, seed: int = 0, bundle_prob: float = 0.5) -> list[QueryPair]:
    """One synthetic query per positive interaction; kit purchases sometimes get a bundle-style query."""
    rng = random.Random(seed)
    out = []
    for row in interactions.positives:
        spec = world.specs.get(row.item_id)
        if spec is None:
            continue
        templates = BUNDLE_TEMPLATES if spec.kit and rng.random() < bundle_prob else COMPARATIVE_TEMPLATES
        out.append(QueryPair(describe(spec, rng, templates), row.item_id, row.user_id))
    return out


def make_tasks(world: World, heldout: InteractionTable, catalog_ids, n_bundle: int = 120,
               n_comparative: int = 120, seed: int = 0) -> list[QueryInstance]:
    """Bundle tasks from held-out kit purchases and comparative tasks from held-out positives."""
    rng = random.Random(seed)
    in_catalog = set(catalog_ids)
    by_user: dict[str, list] = {}
    for row in heldout.positives:
        by_user.setdefault(row.user_id, []).append(row)

    bundle, comparative = [], []
    used_kits, used_targets = set(), set()
    for user in sorted(by_user):
        rows = sorted(by_user[user], key=lambda r: (r.timestamp, r.item_id))
        for row in rows:
            spec = world.specs.get(row.item_id)
            if spec is None or row.item_id not in in_catalog:
                continue
            kit = world.kits.get(spec.kit) if spec.kit else None
            if kit and spec.kit not in used_kits and all(i in in_catalog for i in kit):
                used_kits.add(spec.kit)
                query = describe(spec, rng, BUNDLE_TEMPLATES)
                bundle.append(QueryInstance(f"bundle-{user}-{row.item_id}", query, "bundle", row.item_id, tuple(kit)))
            elif spec.variant_of is None and row.item_id not in used_targets:
                used_targets.add(row.item_id)
                query = describe(spec, rng)
                comparative.append(QueryInstance(f"comparative-{user}-{row.item_id}", query,
                                                 "comparative_shopping", row.item_id))
    rng.shuffle(bundle)
    rng.shuffle(comparative)
    return sorted(bundle[:n_bundle], key=lambda q: q.key) + sorted(comparative[:n_comparative], key=lambda q: q.key)
