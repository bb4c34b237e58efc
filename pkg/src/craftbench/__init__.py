"""craftbench: a fast crafting-game RL benchmark with KG-guided agents."""

from .recipes import (
    EMPTY, Entity, Recipe, RecipeBook, RecipeSplit, SplitSpec,
    bundled_book, load_recipe_book, lookup_pair, split_recipes,
)
from .env import (
    EnvState, RewardConfig, StepOutcome, TaskSpec,
    default_max_steps, reset, sample_task, shaped_reward_config, step,
)
from .vecenv import BatchRunner, benchmark_throughput

__version__ = "0.1.0"

__all__ = [
    "EMPTY", "Entity", "Recipe", "RecipeBook", "RecipeSplit", "SplitSpec",
    "bundled_book", "load_recipe_book", "lookup_pair", "split_recipes",
    "EnvState", "RewardConfig", "StepOutcome", "TaskSpec",
    "default_max_steps", "reset", "sample_task", "shaped_reward_config", "step",
    "BatchRunner", "benchmark_throughput",
    "__version__",
]
