"""Fold construction, prediction, recall@X, and experiment orchestration.

Two prediction modes: in-matrix scores use trained item vectors v (items with
at least one training rating), out-of-matrix scores fall back to the
text-only topic mixes theta (epsilon treated as zero).  Two latents: the
interest score u_i'x_j, and the attention score aggregated over the user's
attention edges (max by default, recording the argmax edge as the predicted
adoption source; sum available behind a flag).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .baselines import CtrState, PairRatings, popularity_scores, train_ctr
from .corpus import Corpus, Vocabulary
from .errors import InputError
from .model import Hyperparams, ModelState, RatingView, train
from .social import (AttentionEdgeSet, FollowerGraph, VoteLog,
                     attribute_sources, build_attention_edges)
from .topics import TopicModel, fit_lda, top_words

MODES = ("in_matrix", "out_of_matrix")
LATENTS = ("interest", "attention")
AGGREGATIONS = ("max", "sum")


class Scored(NamedTuple):
    """One ranked candidate: item id, score, and predicted source user (the
    argmax attention edge; None for interest-based scores)."""

    item: str
    score: float
    source: str | None


def _resolve_user(state: ModelState | CtrState, user: str) -> int:
    try:
        return state.users.index(user)
    except ValueError:
        raise InputError(f"unknown user {user!r}") from None


def score_items(state: ModelState | CtrState, user: str,
                items: Sequence[str], mode: str = "in_matrix",
                latent: str = "interest", aggregation: str = "max"
                ) -> tuple[np.ndarray, list[str | None]]:
    """Raw scores (aligned with ``items``) plus predicted sources.

    The source of item j is the user on the attention edge achieving the
    maximal per-edge score, also under sum aggregation (the best single
    explanation of the adoption); interest scores carry no source.
    """
    if mode not in MODES:
        raise InputError(f"unknown prediction mode {mode!r}")
    if latent not in LATENTS:
        raise InputError(f"unknown latent {latent!r}")
    if aggregation not in AGGREGATIONS:
        raise InputError(f"unknown aggregation {aggregation!r}")
    i = _resolve_user(state, user)
    item_index = {t: j for j, t in enumerate(state.item_ids)}
    try:
        cols = np.asarray([item_index[t] for t in items], dtype=np.int64)
    except KeyError as exc:
        raise InputError(f"unknown item {exc.args[0]!r}") from None
    x = (state.v if mode == "in_matrix" else state.theta)[cols]
    if latent == "interest":
        return x @ state.u[i], [None] * len(items)
    if isinstance(state, CtrState):
        raise InputError("baseline state has no attention latents")
    sl = state.edges.slice_of(i)
    per_edge = state.phi[sl] @ x.T
    best = per_edge.argmax(axis=0)
    sources = [state.edges.users[int(state.edges.dst[sl][b])] for b in best]
    scores = per_edge.max(axis=0) if aggregation == "max" \
        else per_edge.sum(axis=0)
    return scores, sources


def predict_scores(state: ModelState | CtrState, user: str,
                   items: Sequence[str], mode: str = "in_matrix",
                   latent: str = "interest", aggregation: str = "max"
                   ) -> list[Scored]:
    """Ranked candidates, best first; score ties break toward the smaller
    item id."""
    items = sorted(items)
    scores, sources = score_items(state, user, items, mode, latent,
                                  aggregation)
    order = np.argsort(-scores, kind="stable")
    return [Scored(items[int(t)], float(scores[int(t)]), sources[int(t)])
            for t in order]


def recall_at_x(ranking: Sequence, test_positives: set[str], x: int) -> float:
    """Fraction of the held-out positives appearing in the top x of the
    ranking."""
    if x < 1:
        raise InputError("x must be >= 1")
    items = [r.item if isinstance(r, Scored) else r for r in ranking]
    if not items:
        raise InputError("empty candidate pool")
    if not test_positives:
        raise InputError("no test positives")
    hits = sum(1 for t in items[:x] if t in test_positives)
    return hits / len(test_positives)


def _prefix_recalls(ranked: list[str], positives: set[str],
                    xs: Sequence[int]) -> list[float]:
    flags = np.fromiter((t in positives for t in ranked), dtype=np.int64,
                        count=len(ranked))
    prefix = np.cumsum(flags)
    npos = len(positives)
    return [float(prefix[min(x, len(ranked)) - 1]) / npos for x in xs]


@dataclass
class FoldPlan:
    """Cross-validation plan: partitions positive pairs (in-matrix) or items
    (out-of-matrix) into non-empty folds, reproducibly from a seed."""

    n_folds: int
    mode: str
    seed: int
    pair_fold: dict[tuple[str, str], int] | None = None
    item_fold: dict[str, int] | None = None

    @classmethod
    def build(cls, votes: VoteLog, item_ids: Sequence[str], n_folds: int,
              mode: str, seed: int = 0) -> "FoldPlan":
        if n_folds < 2:
            raise InputError("need at least 2 folds")
        if mode not in MODES:
            raise InputError(f"unknown fold mode {mode!r}")
        rng = np.random.default_rng(seed)
        if mode == "in_matrix":
            pairs = sorted({(v.user, v.item) for v in votes})
            if len(pairs) < n_folds:
                raise InputError(
                    f"{len(pairs)} positive pairs cannot fill {n_folds} folds")
            perm = rng.permutation(len(pairs))
            pair_fold = {pairs[int(p)]: idx % n_folds
                         for idx, p in enumerate(perm)}
            return cls(n_folds, mode, seed, pair_fold=pair_fold)
        items = sorted(item_ids)
        if len(items) < n_folds:
            raise InputError(f"{len(items)} items cannot fill {n_folds} folds")
        perm = rng.permutation(len(items))
        item_fold = {items[int(p)]: idx % n_folds for idx, p in enumerate(perm)}
        return cls(n_folds, mode, seed, item_fold=item_fold)

    def _fold_of(self, vote) -> int:
        if self.mode == "in_matrix":
            key = (vote.user, vote.item)
            if key not in self.pair_fold:
                raise InputError(f"vote {key} not covered by the fold plan")
            return self.pair_fold[key]
        if vote.item not in self.item_fold:
            raise InputError(f"item {vote.item!r} not covered by the fold plan")
        return self.item_fold[vote.item]

    def train_votes(self, votes: VoteLog, fold: int) -> VoteLog:
        return VoteLog([v for v in votes if self._fold_of(v) != fold])

    def test_positives(self, votes: VoteLog, fold: int) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for v in votes:
            if self._fold_of(v) == fold:
                out.setdefault(v.user, set()).add(v.item)
        return out


@dataclass
class RecallCurve:
    """Mean recall per cutoff with the per-(fold, user) detail behind it."""

    xs: list[int]
    mean_recall: list[float]
    n_users: int
    per_user: dict[str, list[float]] = field(default_factory=dict)


@dataclass(frozen=True)
class EvalModel:
    """One entry in a comparison: a scorer kind plus its settings.

    ``latents`` selects the scored variants ('interest'/'attention' for the
    joint model; non-latent kinds use 'none').  ``hp`` is required for
    trained kinds.
    """

    name: str
    kind: str
    latents: tuple[str, ...] = ("interest",)
    hp: Hyperparams | None = None


@dataclass
class FoldContext:
    """Everything a scorer factory may need for one fold."""

    corpus: Corpus
    graph: FollowerGraph
    edges: AttentionEdgeSet | None
    votes_train: VoteLog
    test_positives: dict[str, set[str]]
    warm_start: TopicModel | None
    fold: int
    mode: str
    aggregation: str
    attribution_mode: str
    seed: int
    theta_steps: int


ScoreFn = Callable[[str, list[str]], np.ndarray]


def _lactr_factory(m: EvalModel, ctx: FoldContext) -> dict[str, ScoreFn]:
    attr = attribute_sources(ctx.votes_train, ctx.edges, ctx.attribution_mode)
    ratings = RatingView.from_attribution(attr, ctx.edges,
                                          ctx.corpus.item_ids)
    state, _ = train(ctx.warm_start, ctx.corpus, ctx.edges, ratings, m.hp,
                     seed=ctx.seed, theta_steps=ctx.theta_steps)

    def make(latent: str) -> ScoreFn:
        def fn(user: str, pool: list[str]) -> np.ndarray:
            scores, _ = score_items(state, user, pool, mode=ctx.mode,
                                    latent=latent,
                                    aggregation=ctx.aggregation)
            return scores
        return fn

    return {latent: make(latent) for latent in m.latents}


def _ctr_factory(m: EvalModel, ctx: FoldContext) -> dict[str, ScoreFn]:
    if m.latents != ("interest",):
        raise InputError("baseline models score the 'interest' latent only")
    ratings = PairRatings.from_votes(ctx.votes_train, ctx.graph.users,
                                     ctx.corpus.item_ids)
    state, _ = train_ctr(ctx.warm_start, ctx.corpus, ratings, m.hp,
                         seed=ctx.seed, theta_steps=ctx.theta_steps)

    def fn(user: str, pool: list[str]) -> np.ndarray:
        scores, _ = score_items(state, user, pool, mode=ctx.mode)
        return scores

    return {"interest": fn}


def _popularity_factory(m: EvalModel, ctx: FoldContext) -> dict[str, ScoreFn]:
    counts = popularity_scores(ctx.votes_train)

    def fn(user: str, pool: list[str]) -> np.ndarray:
        return np.asarray([float(counts.get(t, 0)) for t in pool])

    return {"none": fn}


def _random_factory(m: EvalModel, ctx: FoldContext) -> dict[str, ScoreFn]:
    def fn(user: str, pool: list[str]) -> np.ndarray:
        digest = hashlib.sha256(user.encode("utf-8")).digest()[:8]
        rng = np.random.default_rng(
            (ctx.seed, ctx.fold, int.from_bytes(digest, "little")))
        return rng.random(len(pool))

    return {"none": fn}


_SCORER_FACTORIES: dict[str, Callable[[EvalModel, FoldContext],
                                      dict[str, ScoreFn]]] = {
    "lactr": _lactr_factory,
    "ctr": _ctr_factory,
    "popularity": _popularity_factory,
    "random": _random_factory,
}


def register_model_kind(kind: str, factory) -> None:
    """Plug in an additional scorer kind (e.g. an oracle for harness tests)."""
    _SCORER_FACTORIES[kind] = factory


@dataclass
class ExperimentResult:
    rows: list[tuple]
    curves: dict[tuple[str, str], RecallCurve]


def write_results_csv(rows: list[tuple], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("model,latent,mode,fold,x,mean_recall,n_users\n")
        for model, latent, mode, fold, x, mean_recall, n_users in rows:
            fh.write(f"{model},{latent},{mode},{fold},{x},"
                     f"{mean_recall!r},{n_users}\n")


def run_experiment(corpus: Corpus, graph: FollowerGraph, votes: VoteLog,
                   models: Sequence[EvalModel], folds: FoldPlan,
                   x_grid: Sequence[int], *, neg_samples: int = 5,
                   attribution: str = "all", aggregation: str = "max",
                   lda_alpha: float = 1.0, lda_eta: float = 0.01,
                   lda_iters: int = 100, seed: int = 0, theta_steps: int = 5,
                   progress: Callable[[str], None] | None = None
                   ) -> ExperimentResult:
    """Cross-validated comparison: per fold, train every model on the
    training split and rank each test user's candidate pool.

    Pool rule: in-matrix pools contain every item with at least one training
    vote minus the user's own training positives; out-of-matrix pools are the
    fold's held-out items.  Users without scoreable test positives are
    excluded.  Recall is averaged over users within a fold, then over folds.
    Deterministic for fixed inputs and seed (the topic warm start is fitted
    once and shared).
    """
    xs = [int(x) for x in x_grid]
    if not xs or any(b <= a for a, b in zip(xs, xs[1:])) or xs[0] < 1:
        raise InputError("x grid must be strictly increasing and >= 1")
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise InputError("duplicate model names in experiment")
    trained = [m for m in models if m.kind in ("lactr", "ctr")]
    for m in trained:
        if m.hp is None:
            raise InputError(f"model {m.name!r} needs hyperparameters")
    ks = {m.hp.k for m in trained}
    if len(ks) > 1:
        raise InputError("all trained models must share k (one warm start)")
    for m in models:
        if m.kind not in _SCORER_FACTORIES:
            raise InputError(f"unknown model kind {m.kind!r}")
    user_set = set(graph.users)
    for v in votes:
        if v.user not in user_set:
            raise InputError(f"vote by user {v.user!r} outside the graph")
        if v.item not in corpus.item_index:
            raise InputError(f"vote on item {v.item!r} outside the corpus")
    warm = fit_lda(corpus, ks.pop(), alpha=lda_alpha, eta=lda_eta,
                   iters=lda_iters, seed=seed) if trained else None
    edges = build_attention_edges(graph, neg_samples, seed) \
        if any(m.kind == "lactr" for m in models) else None
    rows: list[tuple] = []
    acc: dict[tuple[str, str], dict] = {}
    for fold in range(folds.n_folds):
        votes_train = folds.train_votes(votes, fold)
        test_pos = folds.test_positives(votes, fold)
        if folds.mode == "in_matrix":
            base_pool = {v.item for v in votes_train}
        else:
            base_pool = {t for t, f in folds.item_fold.items() if f == fold}
        train_pos: dict[str, set[str]] = {}
        for v in votes_train:
            train_pos.setdefault(v.user, set()).add(v.item)
        ctx = FoldContext(corpus, graph, edges, votes_train, test_pos, warm,
                          fold, folds.mode, aggregation, attribution, seed,
                          theta_steps)
        for m in models:
            if progress is not None:
                progress(f"fold {fold}: training {m.name}")
            scorers = _SCORER_FACTORIES[m.kind](m, ctx)
            for latent, fn in scorers.items():
                per_user: list[tuple[str, list[float]]] = []
                for user in sorted(test_pos):
                    pool = sorted(base_pool - train_pos.get(user, set()))
                    positives = test_pos[user] & set(pool)
                    if not pool or not positives:
                        continue
                    scores = fn(user, pool)
                    order = np.argsort(-np.asarray(scores, dtype=np.float64),
                                       kind="stable")
                    ranked = [pool[int(t)] for t in order]
                    per_user.append((user,
                                     _prefix_recalls(ranked, positives, xs)))
                if not per_user:
                    continue
                mat = np.asarray([r for _, r in per_user])
                fold_mean = mat.mean(axis=0)
                for x, mr in zip(xs, fold_mean):
                    rows.append((m.name, latent, folds.mode, fold, x,
                                 float(mr), len(per_user)))
                slot = acc.setdefault((m.name, latent),
                                      {"means": [], "per_user": {}, "n": 0})
                slot["means"].append(fold_mean)
                slot["n"] += len(per_user)
                for user, rec in per_user:
                    slot["per_user"][f"fold{fold}:{user}"] = rec
    curves = {
        key: RecallCurve(xs, [float(v) for v in
                              np.asarray(slot["means"]).mean(axis=0)],
                         slot["n"], slot["per_user"])
        for key, slot in acc.items()
    }
    return ExperimentResult(rows, curves)


def describe_user(state: ModelState | CtrState, vocab: Vocabulary, user: str,
                  *, n_topics: int = 3, n_influencers: int = 3,
                  n_words: int = 10) -> str:
    """Interpretability dump for one user: leading interest topics, most
    influential attention targets with the topics they contribute, and the
    word bags of every topic mentioned."""
    i = _resolve_user(state, user)
    lines = [f"user {user}"]
    u = state.u[i]
    lead = np.argsort(-u, kind="stable")[:n_topics]
    lines.append("  interests: " + ", ".join(
        f"topic {int(k)} ({u[int(k)]:+.3f})" for k in lead))
    referenced = [int(k) for k in lead]
    if isinstance(state, ModelState):
        sl = state.edges.slice_of(i)
        others = [(e, int(state.edges.dst[e]))
                  for e in range(sl.start, sl.stop)
                  if int(state.edges.dst[e]) != i]
        others.sort(key=lambda p: (-state.s[p[0]], state.edges.users[p[1]]))
        lines.append("  influencers:")
        for e, l in others[:n_influencers]:
            tops = np.argsort(-state.phi[e], kind="stable")[:n_topics]
            referenced.extend(int(k) for k in tops)
            body = ", ".join(f"topic {int(k)} ({state.phi[e][int(k)]:+.3f})"
                             for k in tops)
            lines.append(f"    {state.edges.users[l]} "
                         f"(weight {state.s[e]:+.3f}): {body}")
    lines.append("  topics:")
    words = top_words(state.beta, vocab, n_words)
    seen = sorted(set(referenced))
    for k in seen:
        body = " ".join(f"{w}:{p:.4f}" for w, p in words[k])
        lines.append(f"    topic {k}: {body}")
    return "\n".join(lines) + "\n"
