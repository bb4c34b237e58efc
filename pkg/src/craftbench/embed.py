"""Entity feature vectors.

Three sources: pretrained word vectors in the standard text format
("word v1 ... vd" per line), seeded random unit vectors, and a deterministic
co-occurrence construction used as a stand-in for distributional vectors when
no pretrained file is available. Every table covers all entities of its book;
the EMPTY placeholder is the all-zeros vector, stored as the last row so that
id -1 indexes it directly.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError
from .recipes import RecipeBook
from .seeding import mix_seeds, string_seed


class EmbeddingTable:
    def __init__(self, dim: int, vectors: np.ndarray, source: str):
        # vectors has len(book)+1 rows; the last row is zeros for EMPTY.
        self.dim = dim
        self.vectors = vectors
        self.source = source

    def vector(self, eid: int) -> np.ndarray:
        return self.vectors[eid]


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def load_pretrained(book: RecipeBook, source) -> EmbeddingTable:
    """Load word vectors and average them per entity token.

    Tokens missing from the file get a deterministic random unit vector
    seeded from the token string, so two loads of the same inputs agree.
    """
    if isinstance(source, str) and "\n" not in source:
        with open(source, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    elif hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        lines = str(source).splitlines()

    wanted: set[str] = set()
    for e in book.entities:
        wanted.update(e.tokens)

    dim = None
    word_vecs: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        word, values = parts[0], parts[1:]
        if dim is None:
            dim = len(values)
            if dim == 0:
                raise ParseError(f"line {lineno}: no vector components")
        elif len(values) != dim:
            raise ParseError(
                f"line {lineno}: expected {dim} components, got {len(values)}")
        if word in wanted and word not in word_vecs:
            word_vecs[word] = np.array([float(v) for v in values], dtype=np.float64)
    if dim is None:
        raise ParseError("empty word-vector file")

    vectors = np.zeros((len(book) + 1, dim), dtype=np.float64)
    for e in book.entities:
        acc = np.zeros(dim, dtype=np.float64)
        for tok in e.tokens:
            vec = word_vecs.get(tok)
            if vec is None:
                rng = np.random.Generator(np.random.PCG64(string_seed(tok)))
                vec = _unit(rng.standard_normal(dim))
            acc += vec
        vectors[e.id] = acc / len(e.tokens)
    return EmbeddingTable(dim=dim, vectors=vectors, source="pretrained")


def random_table(book: RecipeBook, dim: int, seed: int) -> EmbeddingTable:
    """I.i.d. unit-norm gaussian vector per entity; no structure at all."""
    rng = np.random.Generator(np.random.PCG64(seed))
    vectors = np.zeros((len(book) + 1, dim), dtype=np.float64)
    for e in book.entities:
        vectors[e.id] = _unit(rng.standard_normal(dim))
    return EmbeddingTable(dim=dim, vectors=vectors, source=f"random({seed})")


def structured_table(book: RecipeBook, dim: int, seed: int) -> EmbeddingTable:
    """Co-occurrence features: closed-form stand-in for corpus word vectors.

    Each entity's vector is three concatenated blocks over a shared random
    basis: its own basis vector, the mean basis of entities it combines with,
    and the mean basis of entities it is a component of. Keeping the blocks
    in separate subspaces means relatedness stays linearly decodable instead
    of being washed into plain similarity; distributional word vectors carry
    the same kind of information in distributed form. Nothing is fit or
    trained here.
    """
    rng = np.random.Generator(np.random.PCG64(mix_seeds(seed, 0xC0)))
    n = len(book)
    block = dim // 3
    ident_dim = dim - 2 * block
    basis = rng.standard_normal((n, ident_dim))
    basis /= np.linalg.norm(basis, axis=1, keepdims=True)
    mixer = rng.standard_normal((ident_dim, block)) / np.sqrt(ident_dim)

    partners: list[set[int]] = [set() for _ in range(n)]
    results: list[set[int]] = [set() for _ in range(n)]
    for r in book.recipes:
        a, b = r.ingredients
        partners[a].add(b)
        partners[b].add(a)
        results[a].add(r.result)
        results[b].add(r.result)

    def group_mean(members: set[int]) -> np.ndarray:
        if not members:
            return np.zeros(block)
        return _unit(basis[sorted(members)].mean(axis=0) @ mixer)

    vectors = np.zeros((n + 1, dim), dtype=np.float64)
    for i in range(n):
        vectors[i] = _unit(np.concatenate([
            basis[i],
            group_mean(partners[i]),
            group_mean(results[i]),
        ]))
    return EmbeddingTable(dim=dim, vectors=vectors, source=f"structured({seed})")


def build_features(book: RecipeBook, kind: str, dim: int = 300,
                   seed: int = 0) -> EmbeddingTable:
    """Feature factory used by the CLI: kind is 'random', 'structured', or a
    'pretrained:<path>' reference."""
    if kind == "random":
        return random_table(book, dim, seed)
    if kind == "structured":
        return structured_table(book, dim, seed)
    if kind.startswith("pretrained:"):
        return load_pretrained(book, kind.split(":", 1)[1])
    raise ParseError(f"unknown feature kind {kind!r}")
