import json

import pytest

from craftbench.recipes import SplitSpec, bundled_book, load_recipe_book, split_recipes


@pytest.fixture(scope="session")
def book():
    return bundled_book()


@pytest.fixture(scope="session")
def split(book):
    return split_recipes(book, SplitSpec(seed=7, train_ratio=0.8, mode="by-recipe"))


@pytest.fixture(scope="session")
def mud_book():
    return load_recipe_book(json.dumps({
        "entities": ["water", "earth", "mud"],
        "recipes": [{"result": "mud", "ingredients": ["water", "earth"]}],
    }))


@pytest.fixture(scope="session")
def hay_book():
    return load_recipe_book(json.dumps({
        "entities": ["hay", "hay bale"],
        "recipes": [{"result": "hay bale", "ingredients": ["hay", "hay"]}],
    }))
