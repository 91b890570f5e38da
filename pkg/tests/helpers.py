"""Fixture builders shared by the test modules."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from recoatlas.catalog import Catalog, CatalogItem
from recoatlas.embeddings import ItemMatrix


def item(item_id: str, subcategory: str = "s0", title: str | None = None, description: str | None = None,
         price: float = 10.0) -> CatalogItem:
    title = title if title is not None else f"item {item_id}"
    description = description if description is not None else f"plain description of item {item_id}"
    return CatalogItem(item_id, title, description, price, subcategory, f"Title: {title} | Description: {description}")


def catalog_from(vectors: dict[str, list[float]], subcats: dict[str, str]) -> tuple[Catalog, ItemMatrix]:
    catalog = Catalog(item(i, subcats[i]) for i in vectors)
    matrix = ItemMatrix.from_vectors(catalog.ids, np.array([vectors[i] for i in catalog.ids], dtype=float))
    return catalog, matrix


def random_fixture(seed: int, max_items: int = 200):
    """Clustered random catalog with a few planted exact duplicates.

    Returns ``(catalog, matrix, rng)``; ids are zero-padded so catalog order equals creation order.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_items + 1))
    d = int(rng.integers(3, 17))
    n_sub = int(rng.integers(1, 9))
    centers = rng.normal(size=(n_sub, d))
    if rng.random() < 0.5:  # nearby clusters so centroid scopes overlap
        centers = centers[0] + 0.3 * centers
    subs = rng.integers(0, n_sub, size=n)
    spread = rng.uniform(0.2, 1.5)
    vecs = centers[subs] * 2.0 + spread * rng.normal(size=(n, d))
    for _ in range(int(rng.integers(0, 4))):
        a, b = rng.integers(0, n, size=2)
        vecs[b] = vecs[a]
        subs[b] = subs[a]
    ids = [f"i{k:04d}" for k in range(n)]
    catalog = Catalog(item(i, f"c{s}") for i, s in zip(ids, subs))
    return catalog, ItemMatrix.from_vectors(ids, vecs), rng


class TableEmbedder:
    """Embedding provider backed by a fixed text-to-vector table."""

    def __init__(self, table: dict[str, list[float]]):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.dim = len(next(iter(self.table.values())))

    def embed(self, texts, max_len: int = 512) -> np.ndarray:
        return np.array([self.table[t] for t in texts])


def scorer_oracle_errors(seed: int) -> dict[str, float]:
    """Largest absolute gap between each scorer and its brute-force oracle on one random fixture."""
    import oracles
    from recoatlas.behavior.heads import ProjectionPair, QueryHead
    from recoatlas.scoring import build_centroid_index, complementarity_reward, diversity_reward, relevance_reward

    cat, matrix, rng = random_fixture(seed)
    pair = ProjectionPair.init(matrix.dim, seed, hidden=8, out=5) if seed % 2 else ProjectionPair.identity()
    index = build_centroid_index(cat, matrix, pair, QueryHead.identity())
    E = {i: matrix.row(i).tolist() for i in cat.ids}
    HA = dict(zip(cat.ids, pair.project_anchor(matrix.vectors).tolist()))
    HC = dict(zip(cat.ids, pair.project_complement(matrix.vectors).tolist()))
    K = int(rng.integers(1, 21))
    valid = [str(x) for x in rng.choice(cat.ids, size=int(rng.integers(0, min(K, len(cat)) + 1)), replace=False)]
    z = rng.normal(size=matrix.dim)
    z /= np.linalg.norm(z)
    pairs = {
        "relevance": (relevance_reward(z, valid, index, K), oracles.relevance(z.tolist(), E, valid, K)),
        "complementarity": (complementarity_reward(valid, index, K),
                            oracles.complementarity(HA, HC, cat.subcategory, valid, K)),
        "diversity": (diversity_reward(valid, index, K), oracles.diversity(E, cat.subcategory, valid, K)),
    }
    return {name: max([abs(got.aggregate - exp[1])] + [abs(got.per_item[i] - exp[0][i]) for i in valid])
            for name, (got, exp) in pairs.items()}


def utility_env(seed: int, max_items: int = 200, **kw):
    """Utility-variant ToolEnv over a random fixture; queries "q0".."q2" map to random vectors."""
    from recoatlas.behavior.heads import ProjectionPair, QueryHead
    from recoatlas.tools import ToolEnv

    cat, matrix, rng = random_fixture(seed, max_items)
    head = QueryHead.init(matrix.dim, seed, hidden=8)
    head.net.params["W2"] = rng.normal(scale=0.3, size=head.net.params["W2"].shape)
    pair = ProjectionPair.init(matrix.dim, seed, hidden=8, out=5)
    table = {f"q{n}": rng.normal(size=matrix.dim) for n in range(3)}
    env = ToolEnv(cat, matrix, TableEmbedder(table), "utility", head, pair, **kw)
    return env, rng


def agent_env(seed: int = 0, max_items: int = 120, dim: int = 32):
    """Utility ToolEnv whose provider embeds any text, for driving whole episodes."""
    from recoatlas.behavior.heads import ProjectionPair, QueryHead
    from recoatlas.embeddings import HashingEmbedder, embed_items
    from recoatlas.tools import ToolEnv

    cat, _, _ = random_fixture(seed, max_items)
    provider = HashingEmbedder(seed=seed, dim=dim)
    matrix = embed_items(cat, provider)
    return ToolEnv(cat, matrix, provider, "utility", QueryHead.init(dim, seed, 8), ProjectionPair.init(dim, seed, 8, 6))


class ReplayPolicy:
    """Emits canned decide outputs in order and records every prompt it is shown."""

    name = "replay"

    def __init__(self, outputs, final_output='{"report_explanation": "", "results": []}'):
        self.outputs = list(outputs)
        self.final_output = final_output
        self.seen: list[str] = []

    def decide(self, system_prompt: str, state_block: str) -> str:
        self.seen += [system_prompt, state_block]
        return self.outputs.pop(0) if self.outputs else "not json"

    def finalize(self, messages):
        self.seen += [m["content"] for m in messages]
        return self.final_output


GOLDEN_DIR = Path(__file__).parent / "golden"


def golden(name: str) -> str:
    """Checked-in golden text minus the single trailing newline editors add."""
    text = GOLDEN_DIR.joinpath(name).read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def golden_cases() -> dict[str, tuple[str, str]]:
    """``name -> (rendered, expected)`` for every prompt with a golden file."""
    from recoatlas.agent.prompts import render_finalization_messages, render_system_prompt
    from recoatlas.agent.runtime import CandidateEntry, EpisodeState, render_state_block
    from recoatlas.bench.judge import render_judge_prompts
    from recoatlas.scoring import Report, ReportItem

    state = EpisodeState.start("warm lighting for a reading nook", budget=10, target_count=20)
    state.remaining_tool_calls = 9
    state.task_mode = "comparative_shopping"
    state.candidates["L001"] = CandidateEntry("L001", "Brass Desk Lamp", 1.0, "search_products", 1)
    state.candidates["L002"] = CandidateEntry("L002", "Linen Floor Lamp", 0.41234, "search_products", 1)
    state.last_tool_result = {"tool": "search_products", "results": [
        {"product_id": "L001", "score": 1.0, "title": "Brass Desk Lamp", "text": "Dimmable brass lamp with a warm bulb."},
        {"product_id": "L002", "score": 0.4123, "title": "Linen Floor Lamp", "text": "Tall floor lamp with a linen shade."},
    ]}
    state.history.append({"round": 1, "action": "search_products",
                          "action_input": {"query": "warm reading lamp", "top_k": 2}, "outcome": "2 products"})

    cands = [("E01", "Title: Burr Grinder | Description: Conical burr grinder with 40 settings."),
             ("E02", "Title: Steel Tamper | Description: Calibrated 58 mm tamper."),
             ("E03", "Title: Milk Pitcher | Description: 12 oz stainless frothing pitcher.")]
    fin_system, fin_user = render_finalization_messages("a starter kit for home espresso", cands, 20)

    cat = Catalog([item("E01", "grinder", "Burr Grinder", "Conical burr grinder with 40 settings."),
                   item("E02", "tamper", "Steel Tamper", "Calibrated 58 mm tamper.")])
    report = Report("Cover grinding and tamping first.", [
        ReportItem("E01", "Fresh grinding matters most for espresso."),
        ReportItem("E02", "Even tamping for consistent shots.")])
    quality, explanation = render_judge_prompts("a starter kit for home espresso", report, cat)

    rendered = {
        "system_prompt_k20_r10.txt": render_system_prompt(20, 10),
        "state_block.json": render_state_block(state),
        "finalization_system.txt": fin_system["content"],
        "finalization_user_3cand.txt": fin_user["content"],
        "judge_quality_system.txt": quality[0]["content"],
        "judge_quality_user_2item.txt": quality[1]["content"],
        "judge_explanation_system.txt": explanation[0]["content"],
        "judge_explanation_user_2item.txt": explanation[1]["content"],
    }
    return {name: (text, golden(name)) for name, text in rendered.items()}
