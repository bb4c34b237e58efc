"""Single-episode crafting MDP.

An episode starts from a sampled task: a goal entity, a table of selectable
entities (the intended recipe tree's leaves plus distractors), and a step
budget. Each action picks one table slot. The first pick becomes the current
selection; the second pick forms a pair with it (picking the same slot again
forms a self-pair). A pair matching one or more recipes appends every result
not already on the table and clears the selection; a non-matching pair just
clears the selection. Ingredients are never consumed, so the table only
grows. The episode ends when the goal entity is created or the step budget
runs out.

Rewards are sparse (1 on success, else 0) or shaped (penalties for failed
pairs and off-tree creations, a bonus per intended intermediate).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError, ContractError, SamplingExhausted
from .recipes import EMPTY, Recipe, RecipeBook, RecipeSplit
from .seeding import SplitmixRng, mix_seeds

# Bounded rejection sampling: attempts before sample_task gives up.
MAX_SAMPLE_ATTEMPTS = 10_000


@dataclass(frozen=True)
class TaskSpec:
    goal: int
    table_init: tuple[int, ...]
    depth: int
    num_distractors: int
    intended_tree: tuple[Recipe, ...]  # final recipe last
    seed: int

    @property
    def intermediates(self) -> frozenset[int]:
        """Results of the non-final tree recipes (depth - 1 of them)."""
        return frozenset(r.result for r in self.intended_tree[:-1])


@dataclass(slots=True)
class EnvState:
    # Treated as an immutable value everywhere; step() returns fresh instances.
    goal: int
    table: tuple[int, ...]
    selected: int  # entity id or EMPTY
    steps_taken: int
    done: bool
    success: bool
    intermediates: frozenset[int] = field(default=frozenset(), compare=False)


@dataclass(frozen=True)
class RewardConfig:
    mode: str = "sparse"  # or "shaped"
    success_reward: float = 1.0
    invalid_combo_penalty: float = -0.1
    irrelevant_creation_penalty: float = -0.1
    intermediate_reward: float = 0.5


def shaped_reward_config(depth: int, **overrides) -> RewardConfig:
    """Shaped rewards with the per-intermediate bonus scaled as 0.5 / depth."""
    kw = dict(mode="shaped", intermediate_reward=0.5 / depth)
    kw.update(overrides)
    return RewardConfig(**kw)


@dataclass(slots=True)
class StepOutcome:
    state: EnvState
    reward: float
    events: tuple


def default_max_steps(depth: int) -> int:
    """Step budget 2*(depth+1): the minimal solve plus one spare attempt."""
    if depth < 1:
        raise ConfigError(f"depth must be >= 1, got {depth}")
    return 2 * (depth + 1)


def reset(task: TaskSpec) -> EnvState:
    """Initial state: table is table_init in a seeded-shuffled order."""
    order = list(task.table_init)
    SplitmixRng(mix_seeds(task.seed, 0x5E7)).shuffle(order)
    return EnvState(
        goal=task.goal,
        table=tuple(order),
        selected=EMPTY,
        steps_taken=0,
        done=False,
        success=False,
        intermediates=task.intermediates,
    )


def step(state: EnvState, action: int, book: RecipeBook, cfg: RewardConfig,
         max_steps: int) -> StepOutcome:
    """Advance one step. Pure function of its inputs; raises on done states."""
    if state.done:
        raise ContractError("step() called on a finished episode")
    table = state.table
    if not 0 <= action < len(table):
        raise ContractError(f"action slot {action} out of range for table size {len(table)}")

    steps = state.steps_taken + 1
    chosen = table[action]
    shaped = cfg.mode == "shaped"
    reward = 0.0
    success = False

    if state.selected == EMPTY:
        selected = chosen
        events = (("selected", chosen),)
    else:
        a, b = state.selected, chosen
        pair = (a, b) if a <= b else (b, a)
        selected = EMPTY
        results = book.pair_results(*pair)
        if results:
            on_table = set(table)
            created = tuple(r for r in results if r not in on_table)
            table = table + created
            success = state.goal in results
            events = (("combined", pair, results),)
            if shaped:
                for r in created:
                    if r == state.goal:
                        continue
                    if r in state.intermediates:
                        reward += cfg.intermediate_reward
                    else:
                        reward += cfg.irrelevant_creation_penalty
            if success:
                reward += cfg.success_reward
                events = events + (("goal",),)
        else:
            events = (("invalid", pair),)
            if shaped:
                reward += cfg.invalid_combo_penalty

    done = success or steps >= max_steps
    new_state = EnvState(
        goal=state.goal,
        table=table,
        selected=selected,
        steps_taken=steps,
        done=done,
        success=success,
        intermediates=state.intermediates,
    )
    return StepOutcome(state=new_state, reward=reward, events=events)


def state_digest(state: EnvState) -> str:
    """Short stable digest of the observable state, for trajectory logs."""
    payload = json.dumps(
        [state.goal, list(state.table), state.selected, state.steps_taken],
        separators=(",", ":"),
    )
    return hashlib.sha1(payload.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Task sampling

def _sampler_plan(book: RecipeBook, split: RecipeSplit, partition: str, depth: int):
    """Cached feasibility tables for (split, partition, depth).

    interior: recipe indices usable anywhere in the tree (train tasks may only
    use train recipes; test tasks only constrain the final recipe).
    sizes[e]: achievable derivation sizes (number of recipes) for entity e
    using interior recipes, capped at depth. finals: recipes that can sit at
    the tree root with the remaining budget split across their ingredients.
    """
    key = (split.train_recipes, partition, depth)
    cached = book._sampler_cache.get(key)
    if cached is not None:
        return cached

    n_recipes = len(book.recipes)
    if partition == "train":
        interior = split.train_recipes
        final_allowed = split.train_recipes
    elif partition == "test":
        interior = frozenset(range(n_recipes))
        final_allowed = split.test_recipes
    else:
        raise ConfigError(f"unknown partition {partition!r}")

    producing: dict[int, list[int]] = {}
    for ri in sorted(interior):
        producing.setdefault(book.recipes[ri].result, []).append(ri)

    sizes: list[set[int]] = [{0} for _ in range(len(book))]
    for _ in range(depth):
        changed = False
        for result, ris in producing.items():
            for ri in ris:
                a, b = book.recipes[ri].ingredients
                for ma in sizes[a]:
                    for mb in sizes[b]:
                        m = 1 + ma + mb
                        if m <= depth and m not in sizes[result]:
                            sizes[result].add(m)
                            changed = True
        if not changed:
            break

    finals = []
    for ri in sorted(final_allowed):
        a, b = book.recipes[ri].ingredients
        budget = depth - 1
        if any(budget - ma in sizes[b] for ma in sizes[a] if ma <= budget):
            finals.append(ri)

    # goal_partners[g][e]: entities that create g when combined with e; used
    # to reject distractors that would finish the task in one accidental step.
    goal_partners: dict[int, dict[int, set[int]]] = {}
    for r in book.recipes:
        a, b = r.ingredients
        entry = goal_partners.setdefault(r.result, {})
        entry.setdefault(a, set()).add(b)
        entry.setdefault(b, set()).add(a)

    plan = {
        "interior": interior,
        "producing": producing,
        "sizes": sizes,
        "finals": finals,
        "goal_partners": goal_partners,
    }
    book._sampler_cache[key] = plan
    return plan


def _expand(book: RecipeBook, plan, entity: int, budget: int, rng: SplitmixRng):
    """Random derivation of `entity` using exactly `budget` interior recipes.

    Returns (recipes in post-order, leaves) or None when no option exists.
    """
    if budget == 0:
        return [], [entity]
    sizes = plan["sizes"]
    options = []
    for ri in plan["producing"].get(entity, ()):
        a, b = book.recipes[ri].ingredients
        for ma in sizes[a]:
            if ma > budget - 1:
                continue
            mb = budget - 1 - ma
            if mb in sizes[b]:
                options.append((ri, ma, mb))
    if not options:
        return None
    ri, ma, mb = options[rng.randrange(len(options))]
    a, b = book.recipes[ri].ingredients
    left = _expand(book, plan, a, ma, rng)
    if left is None:
        return None
    right = _expand(book, plan, b, mb, rng)
    if right is None:
        return None
    return left[0] + right[0] + [ri], left[1] + right[1]


def sample_task(book: RecipeBook, split: RecipeSplit, partition: str, depth: int,
                num_distractors: int, rng_seed: int) -> TaskSpec:
    """Sample a depth-n task with the requested distractor count.

    Train tasks draw every tree recipe from the train partition; test tasks
    require the final recipe to be a test recipe. Distractors are uniform
    over entities that are not the goal, not on the tree, and do not create
    the goal in one step with anything already placed on the table.
    """
    if depth < 1:
        raise ConfigError(f"depth must be >= 1, got {depth}")
    if num_distractors < 0:
        raise ConfigError("num_distractors must be >= 0")
    plan = _sampler_plan(book, split, partition, depth)
    finals = plan["finals"]
    if not finals:
        raise SamplingExhausted(
            f"no depth-{depth} recipe chain exists in the {partition} partition")

    rng = SplitmixRng(rng_seed)
    n_entities = len(book)
    sizes = plan["sizes"]

    for _ in range(MAX_SAMPLE_ATTEMPTS):
        final_ri = finals[rng.randrange(len(finals))]
        final = book.recipes[final_ri]
        goal = final.result
        a, b = final.ingredients
        if depth == 1:
            if goal == a or goal == b:
                continue
            recipes = [final]
            table = [a] if a == b else [a, b]
            table_set = set(table)
        else:
            budget = depth - 1
            splits = [(ma, budget - ma) for ma in sizes[a]
                      if ma <= budget and (budget - ma) in sizes[b]]
            ma, mb = splits[rng.randrange(len(splits))]
            left = _expand(book, plan, a, ma, rng)
            right = _expand(book, plan, b, mb, rng)
            if left is None or right is None:
                continue
            tree = tuple(left[0] + right[0] + [final_ri])
            leaves = left[1] + right[1]

            recipes = [book.recipes[ri] for ri in tree]
            intermediates = [r.result for r in recipes[:-1]]
            leaf_set = set(leaves)
            if len(set(intermediates)) != depth - 1:
                continue
            if goal in intermediates or goal in leaf_set:
                continue
            if leaf_set & set(intermediates):
                continue

            table = list(dict.fromkeys(leaves))
            table_set = set(table)
        tree_entities = table_set | {r.result for r in recipes}
        partners = plan["goal_partners"].get(goal, {})
        ok = True
        for _d in range(num_distractors):
            placed = False
            for _try in range(200):
                d = rng.randrange(n_entities)
                if d == goal or d in tree_entities or d in table_set:
                    continue
                mates = partners.get(d)
                if mates is not None and (d in mates or not mates.isdisjoint(table_set)):
                    continue
                table.append(d)
                table_set.add(d)
                placed = True
                break
            if not placed:
                ok = False
                break
        if not ok:
            continue

        return TaskSpec(
            goal=goal,
            table_init=tuple(table),
            depth=depth,
            num_distractors=num_distractors,
            intended_tree=tuple(recipes),
            seed=rng_seed,
        )

    raise SamplingExhausted(
        f"gave up after {MAX_SAMPLE_ATTEMPTS} attempts "
        f"(partition={partition}, depth={depth}, distractors={num_distractors})")
