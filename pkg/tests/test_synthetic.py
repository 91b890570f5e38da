import pytest

from recoatlas.bench.queries import QueryInstance
from recoatlas.bench.synthetic import WorldConfig, generate_world, make_tasks, query_pairs
from recoatlas.catalog import FilterConfig, filter_catalog, filter_interactions, split_users

SMALL = WorldConfig(seed=3, n_projects=4, n_codes=4, single_buyers=60)


@pytest.fixture(scope="module")
def world():
    return generate_world(SMALL)


def test_deterministic(world):
    again = generate_world(SMALL)
    assert again.raw_items == world.raw_items and again.raw_reviews == world.raw_reviews
    assert generate_world(WorldConfig(seed=4, n_projects=4, n_codes=4, single_buyers=60)).raw_items != world.raw_items


def test_kits_span_distinct_roles(world):
    for members in world.kits.values():
        roles = [world.specs[i].role for i in members]
        assert SMALL.kit_min <= len(members) <= SMALL.kit_max and len(set(roles)) == len(roles)


def test_invalid_items_filtered(world):
    catalog = filter_catalog(world.raw_items, world.raw_reviews, FilterConfig())
    assert not set(world.invalid_ids) & set(catalog.ids)
    assert all(i in catalog for members in world.kits.values() for i in members)


def test_tasks_are_valid_instances(world):
    cfg = FilterConfig(heldout_user_frac=0.3)
    catalog = filter_catalog(world.raw_items, world.raw_reviews, cfg)
    train, heldout = split_users(filter_interactions(world.raw_reviews, catalog, cfg), cfg)
    tasks = make_tasks(world, heldout, catalog.ids, n_bundle=20, n_comparative=20)
    kinds = {t.task_type for t in tasks}
    assert kinds == {"bundle", "comparative_shopping"}
    for t in tasks:
        assert QueryInstance.from_dict(t.to_dict()) == t
        assert set(t.truth) <= set(catalog.ids)
        assert not any(i in t.query for i in t.truth)
    held_users = set(heldout.users())
    assert all(t.key.split("-")[1] in held_users for t in tasks)
    pairs = query_pairs(world, train)
    assert pairs and {p.user_id for p in pairs} <= set(train.users())


def test_config_validation():
    with pytest.raises(ValueError):
        WorldConfig(kit_min=5, kit_max=3)
    with pytest.raises(ValueError):
        WorldConfig(n_projects=0)
