"""Recipe dataset: entities, valid combinations, indices, and train/test splits.

The recipe file is UTF-8 JSON with two top-level keys:

    {"entities": ["water", "earth", ...],
     "recipes": [{"result": "mud", "ingredients": ["water", "earth"]}, ...]}

Entity ids are assigned in file order. Names are lowercased at load and must
be unique. A pair of ingredients may produce several results, and self-pairs
(both ingredients equal) are legal. The loaded book is immutable and safe to
share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigError, ContractError, ParseError, ValidationError

# Sentinel id for "no entity selected". Never a recipe ingredient or result.
EMPTY = -1


@dataclass(frozen=True)
class Entity:
    id: int
    name: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class Recipe:
    ingredients: tuple[int, int]  # canonical (min, max); the two may be equal
    result: int


class RecipeBook:
    """Immutable entity/recipe universe with pair and result indices."""

    def __init__(self, entities: list[Entity], recipes: list[Recipe]):
        self.entities = tuple(entities)
        self.recipes = tuple(recipes)
        self.name_to_id = {e.name: e.id for e in self.entities}

        pair_results: dict[tuple[int, int], list[int]] = {}
        result_index: dict[int, list[tuple[int, int]]] = {}
        for r in self.recipes:
            pair_results.setdefault(r.ingredients, []).append(r.result)
            result_index.setdefault(r.result, []).append(r.ingredients)
        # Sorted result tuples give step() a deterministic append order.
        self._pair_results = {p: tuple(sorted(set(v))) for p, v in pair_results.items()}
        self.pair_index = {p: frozenset(v) for p, v in self._pair_results.items()}
        self.result_index = result_index
        self._sampler_cache: dict = {}

    def __len__(self) -> int:
        return len(self.entities)

    def name(self, eid: int) -> str:
        if eid == EMPTY:
            return "<empty>"
        return self.entities[eid].name

    def id_of(self, name: str) -> int:
        return self.name_to_id[name.lower()]

    def pair_results(self, a: int, b: int) -> tuple[int, ...]:
        """Results of combining a and b (order-insensitive), sorted by id."""
        key = (a, b) if a <= b else (b, a)
        return self._pair_results.get(key, ())

    def goal_entities(self) -> list[int]:
        """Distinct entities that appear as a recipe result, by id order."""
        return sorted(self.result_index)


def lookup_pair(book: RecipeBook, a: int, b: int) -> frozenset[int]:
    """All results of combining entities a and b; empty set if no recipe."""
    if a == EMPTY or b == EMPTY:
        raise ContractError("lookup_pair: EMPTY is not a combinable entity")
    if not (0 <= a < len(book) and 0 <= b < len(book)):
        raise ContractError(f"lookup_pair: unknown entity id {max(a, b)}")
    return frozenset(book.pair_results(a, b))


def _normalize_name(raw, where: str) -> str:
    if not isinstance(raw, str):
        raise ParseError(f"{where}: entity name must be a string, got {type(raw).__name__}")
    name = raw.strip().lower()
    if not name:
        raise ParseError(f"{where}: empty entity name")
    return name


def load_recipe_book(source) -> RecipeBook:
    """Parse and validate a recipe file.

    ``source`` may be a JSON string, an already-parsed mapping, or a path to
    a JSON file.
    """
    if isinstance(source, (dict,)):
        doc = source
    else:
        text = source
        if hasattr(source, "read"):
            text = source.read()
        elif isinstance(source, str) and not source.lstrip().startswith("{"):
            with open(source, "r", encoding="utf-8") as f:
                text = f.read()
        elif not isinstance(source, str):
            with open(source, "r", encoding="utf-8") as f:
                text = f.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"line {e.lineno}: {e.msg}") from e

    if not isinstance(doc, dict) or "entities" not in doc or "recipes" not in doc:
        raise ParseError("recipe file must be an object with 'entities' and 'recipes'")

    entities: list[Entity] = []
    seen: set[str] = set()
    for i, raw in enumerate(doc["entities"]):
        name = _normalize_name(raw, f"entities[{i}]")
        if name in seen:
            raise ValidationError(f"entities[{i}]: duplicate entity name {name!r}")
        seen.add(name)
        entities.append(Entity(id=len(entities), name=name, tokens=tuple(name.split())))
    name_to_id = {e.name: e.id for e in entities}

    recipes: list[Recipe] = []
    seen_recipes: set[tuple[tuple[int, int], int]] = set()
    for i, rec in enumerate(doc["recipes"]):
        where = f"recipes[{i}]"
        if not isinstance(rec, dict) or "result" not in rec or "ingredients" not in rec:
            raise ParseError(f"{where}: expected {{'result', 'ingredients'}}")
        ing = rec["ingredients"]
        if not isinstance(ing, (list, tuple)) or len(ing) != 2:
            raise ParseError(f"{where}: ingredients must be a pair")
        names = [_normalize_name(rec["result"], where)] + [_normalize_name(x, where) for x in ing]
        for name in names:
            if name not in name_to_id:
                raise ValidationError(f"{where}: unknown entity name {name!r}")
        result, a, b = (name_to_id[n] for n in names)
        key = ((a, b) if a <= b else (b, a), result)
        if key in seen_recipes:
            raise ValidationError(f"{where}: duplicate recipe for {rec['result']!r}")
        seen_recipes.add(key)
        recipes.append(Recipe(ingredients=key[0], result=result))

    return RecipeBook(entities, recipes)


def bundled_book() -> RecipeBook:
    """Load the recipe dataset shipped with the package."""
    text = resources.files("craftbench.data").joinpath("recipes.json").read_text("utf-8")
    return load_recipe_book(text)


def recipe_book_to_json(book: RecipeBook) -> str:
    """Serialize a book back to the recipe-file format (id order preserved)."""
    doc = {
        "entities": [e.name for e in book.entities],
        "recipes": [
            {"result": book.name(r.result), "ingredients": [book.name(r.ingredients[0]), book.name(r.ingredients[1])]}
            for r in book.recipes
        ],
    }
    return json.dumps(doc, indent=1)


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    train_ratio: float = 0.8
    mode: str = "by-recipe"  # or "by-goal"


@dataclass(frozen=True)
class RecipeSplit:
    train_recipes: frozenset[int]
    test_recipes: frozenset[int]
    spec: SplitSpec = field(compare=False, default=None)

    def partition_of(self, recipe_index: int) -> str:
        return "train" if recipe_index in self.train_recipes else "test"


def split_recipes(book: RecipeBook, spec: SplitSpec) -> RecipeSplit:
    """Deterministic train/test partition of the recipe list.

    by-recipe: shuffle recipe indices with the seeded generator and take the
    first floor(ratio * N) as train. by-goal: shuffle distinct goal entities
    and mark goals as held out (all their recipes go to test) until the test
    side reaches at least the target size, so no goal straddles the split.
    """
    if not (0.0 < spec.train_ratio < 1.0):
        raise ConfigError(f"train_ratio must be in (0,1), got {spec.train_ratio}")
    if spec.mode not in ("by-recipe", "by-goal"):
        raise ConfigError(f"unknown split mode {spec.mode!r}")
    if not book.recipes:
        raise ConfigError("cannot split an empty recipe list")

    n = len(book.recipes)
    n_train = int(spec.train_ratio * n)
    rng = np.random.Generator(np.random.PCG64(spec.seed))

    if spec.mode == "by-recipe":
        order = rng.permutation(n)
        train = frozenset(int(i) for i in order[:n_train])
    else:
        goals = book.goal_entities()
        order = rng.permutation(len(goals))
        target_test = n - n_train
        test_goals: set[int] = set()
        test_count = 0
        for gi in order:
            if test_count >= target_test:
                break
            g = goals[int(gi)]
            test_goals.add(g)
            test_count += len(book.result_index[g])
        train = frozenset(i for i, r in enumerate(book.recipes) if r.result not in test_goals)

    test = frozenset(range(n)) - train
    return RecipeSplit(train_recipes=train, test_recipes=test, spec=spec)


def split_to_json(split: RecipeSplit) -> str:
    spec = split.spec
    doc = {
        "seed": spec.seed if spec else None,
        "ratio": spec.train_ratio if spec else None,
        "mode": spec.mode if spec else None,
        "train": sorted(split.train_recipes),
        "test": sorted(split.test_recipes),
    }
    return json.dumps(doc)


def split_from_json(text: str) -> RecipeSplit:
    doc = json.loads(text)
    spec = None
    if doc.get("seed") is not None:
        spec = SplitSpec(seed=doc["seed"], train_ratio=doc["ratio"], mode=doc["mode"])
    return RecipeSplit(
        train_recipes=frozenset(doc["train"]),
        test_recipes=frozenset(doc["test"]),
        spec=spec,
    )
