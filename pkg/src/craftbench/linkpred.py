"""Link prediction over the recipe graph with complex-valued embeddings.

Every recipe {e1, e2} -> e3 expands to four triples: (e1, combinesWith, e2),
(e2, combinesWith, e1), (e1, componentOf, e3), (e2, componentOf, e3). The
model scores a triple as the real part of the tri-linear product
sum_j e_s[j] * e_p[j] * conj(e_o[j]) and is trained with a full-softmax
objective over both the subject and object slot, plus a weighted nuclear
3-norm penalty on the embeddings that appear in each triple.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError
from .recipes import EMPTY, Recipe, RecipeBook

COMBINES_WITH = 0
COMPONENT_OF = 1
RELATION_NAMES = ("combinesWith", "componentOf")


@dataclass(frozen=True)
class Triple:
    s: int
    p: int
    o: int


def recipes_to_triples(recipes: list[Recipe]) -> list[Triple]:
    """Expand recipes into relation triples, removing duplicates."""
    if not recipes:
        raise ContractError("recipes_to_triples: empty recipe list")
    seen: set[Triple] = set()
    out: list[Triple] = []
    for r in recipes:
        a, b = r.ingredients
        c = r.result
        for t in (
            Triple(a, COMBINES_WITH, b),
            Triple(b, COMBINES_WITH, a),
            Triple(a, COMPONENT_OF, c),
            Triple(b, COMPONENT_OF, c),
        ):
            if t not in seen:
                seen.add(t)
                out.append(t)
    return out


def triples_to_jsonl(book: RecipeBook, triples: list[Triple]) -> str:
    lines = [
        json.dumps({"s": book.name(t.s), "p": RELATION_NAMES[t.p], "o": book.name(t.o)})
        for t in triples
    ]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class KGTrainConfig:
    embedding_dim: int = 128
    epochs: int = 200
    lr: float = 0.1
    reg_weight: float = 1e-2
    batch_size: int = 512
    seed: int = 0
    scope: str = "full"  # or "partial"


class LinkModel:
    """Trained (or freshly initialized) complex embedding tables."""

    def __init__(self, ent_re, ent_im, rel_re, rel_im, scope: str = "full",
                 seed: int = 0, loss_history: list[float] | None = None):
        self.ent_re = np.asarray(ent_re, dtype=np.float64)
        self.ent_im = np.asarray(ent_im, dtype=np.float64)
        self.rel_re = np.asarray(rel_re, dtype=np.float64)
        self.rel_im = np.asarray(rel_im, dtype=np.float64)
        self.scope = scope
        self.seed = seed
        self.loss_history = loss_history or []

    @property
    def k(self) -> int:
        return self.ent_re.shape[1]

    @property
    def num_entities(self) -> int:
        return self.ent_re.shape[0]

    def score(self, s: int, p: int, o: int) -> float:
        """Re(<e_s, e_p, conj(e_o)>)."""
        re_s, im_s = self.ent_re[s], self.ent_im[s]
        re_p, im_p = self.rel_re[p], self.rel_im[p]
        re_o, im_o = self.ent_re[o], self.ent_im[o]
        return float(
            (re_s * re_p * re_o).sum()
            + (re_s * im_p * im_o).sum()
            + (im_s * re_p * im_o).sum()
            - (im_s * im_p * re_o).sum()
        )

    def score_objects(self, s: int, p: int) -> np.ndarray:
        """Scores of (s, p, candidate) for every entity as candidate object."""
        sp_re = self.ent_re[s] * self.rel_re[p] - self.ent_im[s] * self.rel_im[p]
        sp_im = self.ent_re[s] * self.rel_im[p] + self.ent_im[s] * self.rel_re[p]
        return self.ent_re @ sp_re + self.ent_im @ sp_im

    def score_subjects(self, p: int, o: int) -> np.ndarray:
        """Scores of (candidate, p, o) for every entity as candidate subject."""
        po_re = self.rel_re[p] * self.ent_re[o] + self.rel_im[p] * self.ent_im[o]
        po_im = self.rel_re[p] * self.ent_im[o] - self.rel_im[p] * self.ent_re[o]
        return self.ent_re @ po_re + self.ent_im @ po_im


def relation_scores(model: LinkModel, candidates, relation: int, anchor: int) -> np.ndarray:
    """score(candidate, relation, anchor) per candidate, candidates as subject.

    An EMPTY anchor means no selection, hence no relation signal: zeros.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    if anchor == EMPTY:
        return np.zeros(len(candidates), dtype=np.float64)
    po_re = model.rel_re[relation] * model.ent_re[anchor] + model.rel_im[relation] * model.ent_im[anchor]
    po_im = model.rel_re[relation] * model.ent_im[anchor] - model.rel_im[relation] * model.ent_re[anchor]
    return model.ent_re[candidates] @ po_re + model.ent_im[candidates] @ po_im


def relation_score_matrix(model: LinkModel, table_ids: np.ndarray, relation: int,
                          anchors: np.ndarray) -> np.ndarray:
    """Batched relation scores: out[b, i] = score(table_ids[b, i], relation,
    anchors[b]), with EMPTY anchors producing zero rows. Padded table slots
    (id -1) produce garbage values that callers must mask."""
    anchors = np.asarray(anchors, dtype=np.int64)
    live = anchors != EMPTY
    safe = np.where(live, anchors, 0)
    po_re = model.rel_re[relation] * model.ent_re[safe] + model.rel_im[relation] * model.ent_im[safe]
    po_im = model.rel_re[relation] * model.ent_im[safe] - model.rel_im[relation] * model.ent_re[safe]
    out = np.einsum("bkd,bd->bk", model.ent_re[table_ids], po_re)
    out += np.einsum("bkd,bd->bk", model.ent_im[table_ids], po_im)
    out *= live[:, None]
    return out


def _init_params(n_entities: int, k: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(seed))
    scale = 1.0 / np.sqrt(k)
    return {
        "ent_re": rng.standard_normal((n_entities, k)) * scale,
        "ent_im": rng.standard_normal((n_entities, k)) * scale,
        "rel_re": rng.standard_normal((len(RELATION_NAMES), k)) * scale,
        "rel_im": rng.standard_normal((len(RELATION_NAMES), k)) * scale,
    }


def _batch_loss(params: dict[str, ad.Tensor], s, p, o, reg_weight: float) -> ad.Tensor:
    """Mean per-triple objective: both-direction full softmax minus twice the
    positive score, plus the cubed-modulus regularizer."""
    ent_re, ent_im = params["ent_re"], params["ent_im"]
    rel_re, rel_im = params["rel_re"], params["rel_im"]

    s_re, s_im = ad.gather_rows(ent_re, s), ad.gather_rows(ent_im, s)
    p_re, p_im = ad.gather_rows(rel_re, p), ad.gather_rows(rel_im, p)
    o_re, o_im = ad.gather_rows(ent_re, o), ad.gather_rows(ent_im, o)

    sp_re = ad.sub(ad.mul(s_re, p_re), ad.mul(s_im, p_im))
    sp_im = ad.add(ad.mul(s_re, p_im), ad.mul(s_im, p_re))
    obj_logits = ad.add(ad.matmul(sp_re, ad.transpose(ent_re)),
                        ad.matmul(sp_im, ad.transpose(ent_im)))

    po_re = ad.add(ad.mul(p_re, o_re), ad.mul(p_im, o_im))
    po_im = ad.sub(ad.mul(p_re, o_im), ad.mul(p_im, o_re))
    subj_logits = ad.add(ad.matmul(po_re, ad.transpose(ent_re)),
                         ad.matmul(po_im, ad.transpose(ent_im)))

    positive = ad.tsum(ad.add(ad.mul(sp_re, o_re), ad.mul(sp_im, o_im)), axis=1)
    per_triple = ad.sub(
        ad.add(ad.logsumexp(obj_logits, axis=1), ad.logsumexp(subj_logits, axis=1)),
        ad.scale(positive, 2.0),
    )
    loss = ad.tmean(per_triple)

    if reg_weight > 0.0:
        cubes = []
        for re, im in ((s_re, s_im), (p_re, p_im), (o_re, o_im)):
            mod_sq = ad.add(ad.mul(re, re), ad.mul(im, im))
            cubes.append(ad.tsum(ad.powc(mod_sq, 1.5), axis=1))
        reg = ad.tmean(ad.add(ad.add(cubes[0], cubes[1]), cubes[2]))
        loss = ad.add(loss, ad.scale(reg, reg_weight))
    return loss


def evaluate_loss(model: LinkModel, triples: list[Triple]) -> float:
    """Mean per-triple objective without the regularizer (numpy only)."""
    total = 0.0
    for t in triples:
        obj = model.score_objects(t.s, t.p)
        subj = model.score_subjects(t.p, t.o)
        pos = model.score(t.s, t.p, t.o)
        m1, m2 = obj.max(), subj.max()
        total += (m1 + np.log(np.exp(obj - m1).sum())
                  + m2 + np.log(np.exp(subj - m2).sum()) - 2.0 * pos)
    return total / len(triples)


def train_link_model(book: RecipeBook, triples: list[Triple],
                     cfg: KGTrainConfig) -> LinkModel:
    """Train embeddings for every entity of the book on the given triples.

    The triple set may cover only part of the book (partial scope); entities
    absent from it keep their seeded initialization so scoring stays total.
    """
    if not triples:
        raise ContractError("train_link_model: empty triple list")
    raw = _init_params(len(book), cfg.embedding_dim, cfg.seed)
    params = {k: ad.tensor(v, requires_grad=True) for k, v in raw.items()}
    opt = ad.Adagrad(params, lr=cfg.lr)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    s_all = np.array([t.s for t in triples], dtype=np.int64)
    p_all = np.array([t.p for t in triples], dtype=np.int64)
    o_all = np.array([t.o for t in triples], dtype=np.int64)
    n = len(triples)

    history: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = _batch_loss(params, s_all[idx], p_all[idx], o_all[idx], cfg.reg_weight)
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite link-prediction loss at epoch {epoch} "
                    f"(lr={cfg.lr}, reg_weight={cfg.reg_weight}); lower the "
                    f"learning rate or the regularizer weight")
            ad.backward(loss)
            opt.step()
            opt.zero_grad()
            epoch_loss += value * len(idx)
        history.append(epoch_loss / n)

    return LinkModel(
        params["ent_re"].data, params["ent_im"].data,
        params["rel_re"].data, params["rel_im"].data,
        scope=cfg.scope, seed=cfg.seed, loss_history=history,
    )


def save_link_model(path: str, model: LinkModel) -> None:
    ad.save_checkpoint(path, {
        "ent_re": model.ent_re, "ent_im": model.ent_im,
        "rel_re": model.rel_re, "rel_im": model.rel_im,
    }, meta={
        "kind": "link_model",
        "k": model.k,
        "num_entities": model.num_entities,
        "relations": list(RELATION_NAMES),
        "scope": model.scope,
        "seed": model.seed,
    })


def load_link_model(path: str) -> LinkModel:
    arrays, meta = ad.load_checkpoint(path)
    if meta.get("kind") != "link_model":
        raise ContractError(f"{path} is not a link-model checkpoint")
    return LinkModel(arrays["ent_re"], arrays["ent_im"],
                     arrays["rel_re"], arrays["rel_im"],
                     scope=meta.get("scope", "full"), seed=meta.get("seed", 0))


# ---------------------------------------------------------------------------
# ranking metrics

def _rank_with_ties(scores: np.ndarray, target: int) -> float:
    """Mid-rank of the target among scores: 1 + #better + #ties/2."""
    t = scores[target]
    better = int((scores > t).sum())
    ties = int((scores == t).sum()) - 1
    return 1.0 + better + 0.5 * ties


def triple_ranks(model: LinkModel, triples: list[Triple],
                 filter_known: list[Triple] | None = None) -> list[float]:
    """Both-direction candidate ranks for each triple.

    With filter_known, other true triples sharing the query slots are removed
    from the candidate pool before ranking (the filtered protocol).
    """
    known_o: dict[tuple[int, int], set[int]] = {}
    known_s: dict[tuple[int, int], set[int]] = {}
    for t in filter_known or ():
        known_o.setdefault((t.s, t.p), set()).add(t.o)
        known_s.setdefault((t.p, t.o), set()).add(t.s)

    ranks: list[float] = []
    for t in triples:
        obj = model.score_objects(t.s, t.p).copy()
        for other in known_o.get((t.s, t.p), ()):
            if other != t.o:
                obj[other] = -np.inf
        ranks.append(_rank_with_ties(obj, t.o))

        subj = model.score_subjects(t.p, t.o).copy()
        for other in known_s.get((t.p, t.o), ()):
            if other != t.s:
                subj[other] = -np.inf
        ranks.append(_rank_with_ties(subj, t.s))
    return ranks


def hits_at(ranks: list[float], k: int) -> float:
    return sum(1.0 for r in ranks if r <= k) / len(ranks)


def mean_reciprocal_rank(ranks: list[float]) -> float:
    return sum(1.0 / r for r in ranks) / len(ranks)


def random_ranking_mrr(num_candidates: int) -> float:
    """Exact expected reciprocal rank of a uniformly random ranking: H_N / N."""
    return sum(1.0 / r for r in range(1, num_candidates + 1)) / num_candidates
