import json

import pytest

from craftbench.errors import ConfigError, ContractError, ParseError, ValidationError
from craftbench.recipes import (
    EMPTY, SplitSpec, load_recipe_book, lookup_pair, recipe_book_to_json,
    split_from_json, split_recipes, split_to_json,
)


def test_load_mud_book(mud_book):
    assert len(mud_book.entities) == 3
    assert len(mud_book.recipes) == 1
    water, earth, mud = (mud_book.id_of(n) for n in ("water", "earth", "mud"))
    assert mud_book.pair_index[(water, earth)] == {mud}


def test_self_pair_indexed_under_doubled_key(hay_book):
    hay = hay_book.id_of("hay")
    bale = hay_book.id_of("hay bale")
    assert hay_book.pair_index[(hay, hay)] == {bale}


def test_empty_recipe_list_is_valid():
    book = load_recipe_book(json.dumps({
        "entities": ["a", "b", "c", "d"], "recipes": [],
    }))
    assert len(book.entities) == 4
    assert book.pair_index == {}


def test_bundled_dataset_counts(book):
    # Appendix-style example table: 35 result entities, 52 ingredient pairs.
    assert len(book.recipes) == 52
    assert len(book.goal_entities()) == 35
    assert len(book.entities) == 93


def test_names_lowercased_and_tokenized(book):
    santa = book.entities[book.id_of("santa")]
    assert santa.name == "santa"
    bale = book.entities[book.id_of("hay bale")]
    assert bale.tokens == ("hay", "bale")
    assert " ".join(bale.tokens) == bale.name


def test_lookup_pair_order_insensitive(mud_book):
    water, earth, mud = (mud_book.id_of(n) for n in ("water", "earth", "mud"))
    assert lookup_pair(mud_book, water, earth) == {mud}
    assert lookup_pair(mud_book, earth, water) == {mud}


def test_lookup_pair_absent_key(mud_book):
    water = mud_book.id_of("water")
    assert lookup_pair(mud_book, water, water) == frozenset()


def test_lookup_pair_rejects_empty(mud_book):
    with pytest.raises(ContractError):
        lookup_pair(mud_book, EMPTY, mud_book.id_of("water"))


def test_every_recipe_found_by_lookup(book):
    # brute-force inversion check of the pair index
    for r in book.recipes:
        a, b = r.ingredients
        assert r.result in lookup_pair(book, a, b)
        assert (a, b) in book.result_index[r.result]


def test_malformed_record_reports_position():
    bad = json.dumps({"entities": ["a"], "recipes": [{"result": "a"}]})
    with pytest.raises(ParseError, match=r"recipes\[0\]"):
        load_recipe_book(bad)


def test_unknown_entity_reference():
    bad = json.dumps({"entities": ["a", "b"],
                      "recipes": [{"result": "a", "ingredients": ["b", "ghost"]}]})
    with pytest.raises(ValidationError, match="ghost"):
        load_recipe_book(bad)


def test_duplicate_recipe_rejected():
    bad = json.dumps({"entities": ["a", "b", "c"], "recipes": [
        {"result": "c", "ingredients": ["a", "b"]},
        {"result": "c", "ingredients": ["b", "a"]},
    ]})
    with pytest.raises(ValidationError, match="duplicate"):
        load_recipe_book(bad)


def test_duplicate_entity_rejected():
    bad = json.dumps({"entities": ["a", "A"], "recipes": []})
    with pytest.raises(ValidationError):
        load_recipe_book(bad)


def test_roundtrip_preserves_indices(book):
    reloaded = load_recipe_book(recipe_book_to_json(book))
    assert [e.name for e in reloaded.entities] == [e.name for e in book.entities]
    assert reloaded.recipes == book.recipes
    assert reloaded.pair_index == book.pair_index
    assert reloaded.result_index == book.result_index


def _synthetic_book(n_recipes):
    # enough distinct ingredient pairs to host n_recipes distinct results
    n_ing = 1
    while n_ing * (n_ing - 1) // 2 < n_recipes:
        n_ing += 1
    ingredients = [f"ing{i}" for i in range(n_ing)]
    recipes = []
    results = []
    k = 0
    for i in range(n_ing):
        for j in range(i + 1, n_ing):
            if k >= n_recipes:
                break
            recipes.append({"result": f"res{k}", "ingredients": [ingredients[i], ingredients[j]]})
            results.append(f"res{k}")
            k += 1
    return load_recipe_book(json.dumps({"entities": ingredients + results, "recipes": recipes}))


def test_split_sizes_at_full_scale():
    # floor(0.8 * 3417) = 2733 train, 684 test
    book = _synthetic_book(3417)
    split = split_recipes(book, SplitSpec(seed=0, train_ratio=0.8))
    assert len(split.train_recipes) == 2733
    assert len(split.test_recipes) == 684
    assert split.train_recipes | split.test_recipes == frozenset(range(3417))
    assert not split.train_recipes & split.test_recipes


def test_split_seed_sensitivity():
    book = _synthetic_book(10)
    a = split_recipes(book, SplitSpec(seed=1, train_ratio=0.5))
    b = split_recipes(book, SplitSpec(seed=2, train_ratio=0.5))
    assert len(a.train_recipes) == len(b.train_recipes) == 5
    assert a.train_recipes != b.train_recipes


def test_split_deterministic(book):
    spec = SplitSpec(seed=123, train_ratio=0.8)
    runs = [split_recipes(book, spec) for _ in range(3)]
    assert runs[0].train_recipes == runs[1].train_recipes == runs[2].train_recipes


def test_by_goal_split_never_straddles(book):
    for seed in (0, 1, 2, 3):
        split = split_recipes(book, SplitSpec(seed=seed, train_ratio=0.8, mode="by-goal"))
        for goal in book.goal_entities():
            indices = {i for i, r in enumerate(book.recipes) if r.result == goal}
            assert indices <= split.train_recipes or indices <= split.test_recipes
        assert split.train_recipes | split.test_recipes == frozenset(range(len(book.recipes)))


def test_split_ratio_validation(book):
    with pytest.raises(ConfigError):
        split_recipes(book, SplitSpec(seed=0, train_ratio=1.0))
    with pytest.raises(ConfigError):
        split_recipes(book, SplitSpec(seed=0, train_ratio=0.0))


def test_split_export_roundtrip(book):
    split = split_recipes(book, SplitSpec(seed=9, train_ratio=0.8))
    text = split_to_json(split)
    back = split_from_json(text)
    assert back.train_recipes == split.train_recipes
    assert back.test_recipes == split.test_recipes
    doc = json.loads(text)
    assert doc["seed"] == 9 and doc["ratio"] == 0.8 and doc["mode"] == "by-recipe"
