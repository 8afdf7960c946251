"""Shared builders and independent oracles for the test suite.

The oracles here recompute quantities with explicit Python loops and no
shared code paths with the library internals (no Gram shortcuts, no CSR
traversal helpers), so agreement is evidence rather than tautology.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from lactr.corpus import Corpus, Document, Vocabulary
from lactr.model import Hyperparams, ModelState, RatingView
from lactr.social import FollowerGraph, Vote, VoteLog, build_attention_edges


def make_vocab(m: int) -> Vocabulary:
    return Vocabulary([f"w{i:03d}" for i in range(m)])


def make_corpus(rng: np.random.Generator, n_items: int, vocab_size: int,
                doc_length: int = 30) -> Corpus:
    vocab = make_vocab(vocab_size)
    docs = []
    for j in range(n_items):
        ids = rng.integers(0, vocab_size, doc_length)
        wid, cnt = np.unique(ids, return_counts=True)
        docs.append(Document(f"it{j:03d}", wid, cnt))
    return Corpus(vocab, docs)


def make_graph(rng: np.random.Generator, n_users: int,
               p_follow: float = 0.3) -> FollowerGraph:
    users = [f"u{i:02d}" for i in range(n_users)]
    pairs = []
    for i in range(n_users):
        for l in range(n_users):
            if i != l and rng.random() < p_follow:
                pairs.append((users[i], users[l]))
    return FollowerGraph.from_pairs(pairs, users)


def random_state(rng: np.random.Generator, edges, n_items: int, k: int,
                 vocab_size: int, scale: float = 0.7) -> ModelState:
    d = n_items
    return ModelState(
        u=rng.normal(0.0, scale, (edges.n_users, k)),
        s=rng.normal(0.0, scale, edges.n_edges),
        phi=rng.normal(0.0, scale, (edges.n_edges, k)),
        v=rng.normal(0.0, scale, (d, k)),
        theta=rng.dirichlet(np.ones(k), d),
        beta=rng.dirichlet(np.ones(vocab_size), k),
        edges=edges,
        item_ids=[f"it{j:03d}" for j in range(d)],
    )


def random_ratings(rng: np.random.Generator, n_edges: int, n_items: int,
                   p_pos: float = 0.2) -> RatingView:
    pairs = [(e, j) for e in range(n_edges) for j in range(n_items)
             if rng.random() < p_pos]
    return RatingView.from_pairs(pairs, n_edges, n_items)


def small_instance(seed: int = 0, n_users: int = 4, n_items: int = 3,
                   k: int = 2, vocab_size: int = 8, p_follow: float = 0.5,
                   p_pos: float = 0.25, **hp_kwargs):
    """A fully-populated random instance for oracle comparisons."""
    rng = np.random.default_rng(seed)
    corpus = make_corpus(rng, n_items, vocab_size, doc_length=12)
    graph = make_graph(rng, n_users, p_follow)
    edges = build_attention_edges(graph, neg_samples=1, seed=seed)
    ratings = random_ratings(rng, edges.n_edges, n_items, p_pos)
    hp_kwargs.setdefault("k", k)
    hp = Hyperparams(**hp_kwargs)
    state = random_state(rng, edges, n_items, k, vocab_size)
    return corpus, edges, ratings, state, hp


def positive_cells(ratings: RatingView) -> set[tuple[int, int]]:
    cells = set()
    for e in range(ratings.n_edges):
        for j in ratings.edge_items[ratings.edge_ptr[e]:ratings.edge_ptr[e + 1]]:
            cells.add((e, int(j)))
    return cells


def edge_confidence(edges, e: int, hp: Hyperparams) -> float:
    return hp.a_phi if bool(edges.friend[e]) else hp.b_phi


def naive_objective(state: ModelState, ratings: RatingView, corpus: Corpus,
                    hp: Hyperparams) -> float:
    """Triple-loop evaluation of the training objective (no Gram identity)."""
    total = 0.0
    for i in range(state.n_users):
        total -= 0.5 * hp.lambda_u * float(state.u[i] @ state.u[i])
    for e in range(state.edges.n_edges):
        total -= 0.5 * hp.lambda_s * float(state.s[e]) ** 2
    for j in range(state.n_items):
        diff = state.v[j] - state.theta[j]
        total -= 0.5 * hp.lambda_v * float(diff @ diff)
    for e in range(state.edges.n_edges):
        c = edge_confidence(state.edges, e, hp)
        dev = state.phi[e] - state.s[e] * state.u[int(state.edges.src[e])]
        total -= 0.5 * hp.lambda_phi * c * float(dev @ dev)
    for j, doc in enumerate(corpus.documents):
        for w, cnt in zip(doc.word_ids, doc.counts):
            mass = float(state.theta[j] @ state.beta[:, int(w)])
            total += float(cnt) * math.log(mass)
    pos = positive_cells(ratings)
    for e in range(state.edges.n_edges):
        for j in range(state.n_items):
            d = float(state.phi[e] @ state.v[j])
            if (e, j) in pos:
                total -= 0.5 * hp.a_r * (1.0 - d) ** 2
            else:
                total -= 0.5 * hp.b_r * d ** 2
    return total


# Localized partial objectives: only the additive terms that touch one
# coordinate block.  Central differences of these have rounding error on the
# scale of the local terms rather than of the full objective, which is what
# makes a 1e-4 stationarity tolerance meaningful.

def partial_for_interest(state: ModelState, i: int, hp: Hyperparams) -> float:
    total = -0.5 * hp.lambda_u * float(state.u[i] @ state.u[i])
    sl = state.edges.slice_of(i)
    for e in range(sl.start, sl.stop):
        c = edge_confidence(state.edges, e, hp)
        dev = state.phi[e] - state.s[e] * state.u[i]
        total -= 0.5 * hp.lambda_phi * c * float(dev @ dev)
    return total


def partial_for_influence(state: ModelState, e: int, hp: Hyperparams) -> float:
    c = edge_confidence(state.edges, e, hp)
    dev = state.phi[e] - state.s[e] * state.u[int(state.edges.src[e])]
    return (-0.5 * hp.lambda_s * float(state.s[e]) ** 2
            - 0.5 * hp.lambda_phi * c * float(dev @ dev))


def partial_for_attention(state: ModelState, ratings: RatingView, e: int,
                          hp: Hyperparams,
                          pos: set[tuple[int, int]]) -> float:
    c = edge_confidence(state.edges, e, hp)
    dev = state.phi[e] - state.s[e] * state.u[int(state.edges.src[e])]
    total = -0.5 * hp.lambda_phi * c * float(dev @ dev)
    for j in range(state.n_items):
        d = float(state.phi[e] @ state.v[j])
        if (e, j) in pos:
            total -= 0.5 * hp.a_r * (1.0 - d) ** 2
        else:
            total -= 0.5 * hp.b_r * d ** 2
    return total


def partial_for_item(state: ModelState, ratings: RatingView, j: int,
                     hp: Hyperparams, pos: set[tuple[int, int]]) -> float:
    diff = state.v[j] - state.theta[j]
    total = -0.5 * hp.lambda_v * float(diff @ diff)
    for e in range(state.edges.n_edges):
        d = float(state.phi[e] @ state.v[j])
        if (e, j) in pos:
            total -= 0.5 * hp.a_r * (1.0 - d) ** 2
        else:
            total -= 0.5 * hp.b_r * d ** 2
    return total


def central_diff(fun, arr: np.ndarray, idx, h: float = 1e-5) -> float:
    """Central finite difference of ``fun()`` along one array coordinate."""
    orig = arr[idx]
    arr[idx] = orig + h
    hi = fun()
    arr[idx] = orig - h
    lo = fun()
    arr[idx] = orig
    return (hi - lo) / (2.0 * h)


def max_stationarity_gap(state: ModelState, ratings: RatingView,
                         hp: Hyperparams, h: float = 1e-5) -> float:
    """Largest |central difference| over every interest, influence,
    attention, and item coordinate, each against its localized objective."""
    pos = positive_cells(ratings)
    worst = 0.0
    for i in range(state.n_users):
        fun = lambda: partial_for_interest(state, i, hp)
        for kk in range(state.k):
            worst = max(worst, abs(central_diff(fun, state.u, (i, kk), h)))
    for e in range(state.edges.n_edges):
        fun = lambda: partial_for_influence(state, e, hp)
        worst = max(worst, abs(central_diff(fun, state.s, e, h)))
    for e in range(state.edges.n_edges):
        fun = lambda: partial_for_attention(state, ratings, e, hp, pos)
        for kk in range(state.k):
            worst = max(worst, abs(central_diff(fun, state.phi, (e, kk), h)))
    for j in range(state.n_items):
        fun = lambda: partial_for_item(state, ratings, j, hp, pos)
        for kk in range(state.k):
            worst = max(worst, abs(central_diff(fun, state.v, (j, kk), h)))
    return worst


def votes_from_tuples(rows) -> VoteLog:
    return VoteLog([Vote(u, it, t) for u, it, t in rows])
