"""Plain collaborative-topic baseline (no attention, no influence) plus a
trivial most-voted popularity ranker used as a sanity floor.

The baseline shares the corpus/topic machinery and the implicit-feedback
confidence weighting with the joint model; the only difference is that a
user's predicted rating is u_i' v_j directly, with no per-edge attention.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .errors import InputError, NumericError
from .model import (INIT_SCALE, Hyperparams, SweepRecord, TrainTrace, _solve,
                    optimize_theta_row)
from .social import VoteLog
from .topics import TopicModel, responsibilities, update_beta


@dataclass
class PairRatings:
    """Positive (user, item) cells in dual CSR layout over id lists."""

    users: list[str]
    item_ids: list[str]
    user_ptr: np.ndarray
    user_items: np.ndarray
    item_ptr: np.ndarray
    item_users: np.ndarray

    @classmethod
    def from_pairs(cls, pairs, users: list[str],
                   item_ids: list[str]) -> "PairRatings":
        n, d = len(users), len(item_ids)
        arr = np.asarray(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        i, j = arr[:, 0], arr[:, 1]
        if arr.size:
            if i.min() < 0 or i.max() >= n:
                raise InputError("rating pair user index out of range")
            if j.min() < 0 or j.max() >= d:
                raise InputError("rating pair item index out of range")
            if np.any((np.diff(i) == 0) & (np.diff(j) == 0)):
                raise InputError("duplicate positive (user, item) pair")
        user_ptr = np.concatenate(([0], np.cumsum(np.bincount(i, minlength=n))))
        by_item = np.lexsort((i, j))
        item_ptr = np.concatenate(([0], np.cumsum(np.bincount(j, minlength=d))))
        return cls(list(users), list(item_ids), user_ptr, j.copy(), item_ptr,
                   i[by_item])

    @classmethod
    def from_votes(cls, votes: VoteLog, users: list[str],
                   item_ids: list[str]) -> "PairRatings":
        """Distinct (user, item) pairs of a vote log; endpoints must be known."""
        uindex = {u: i for i, u in enumerate(users)}
        iindex = {t: j for j, t in enumerate(item_ids)}
        pairs = set()
        for v in votes:
            if v.user not in uindex:
                raise InputError(f"vote by unknown user {v.user!r}")
            if v.item not in iindex:
                raise InputError(f"vote on unknown item {v.item!r}")
            pairs.add((uindex[v.user], iindex[v.item]))
        return cls.from_pairs(pairs, users, item_ids)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_positives(self) -> int:
        return int(self.user_items.size)

    def items_of(self, i: int) -> np.ndarray:
        return self.user_items[self.user_ptr[i]:self.user_ptr[i + 1]]

    def users_of(self, j: int) -> np.ndarray:
        return self.item_users[self.item_ptr[j]:self.item_ptr[j + 1]]

    def positive_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        pi = np.repeat(np.arange(self.n_users), np.diff(self.user_ptr))
        return pi, self.user_items


@dataclass
class CtrState:
    """Baseline latents: user interest, item vectors, and the topic tables."""

    u: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    beta: np.ndarray
    users: list[str] = field(default_factory=list)
    item_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        k = self.u.shape[1] if self.u.ndim == 2 else -1
        if self.v.shape != self.theta.shape or self.v.ndim != 2 \
                or self.v.shape[1] != k or self.beta.shape[0] != k:
            raise InputError(
                f"latent shapes inconsistent: u{self.u.shape} v{self.v.shape} "
                f"theta{self.theta.shape} beta{self.beta.shape}")
        if len(self.users) != self.u.shape[0]:
            raise InputError("user id list does not match u")
        if len(self.item_ids) != self.v.shape[0]:
            raise InputError("item id list does not match v")

    @property
    def k(self) -> int:
        return int(self.u.shape[1])


def ctr_log_likelihood(state: CtrState, ratings: PairRatings, corpus: Corpus,
                       hp: Hyperparams) -> float:
    """Baseline objective: priors, exact word term, and the confidence-
    weighted rating fit over every (user, item) cell via the Gram identity."""
    terms = {}
    terms["interest_prior"] = -0.5 * hp.lambda_u * float((state.u ** 2).sum())
    terms["item_offset"] = -0.5 * hp.lambda_v * float(
        ((state.v - state.theta) ** 2).sum())
    _, doc_index, word_ids, counts = corpus.packed()
    mass = (state.theta[doc_index] * state.beta[:, word_ids].T).sum(axis=1)
    with np.errstate(divide="ignore"):
        terms["word"] = float((counts * np.log(mass)).sum())
    gram_v = state.v.T @ state.v
    quad_all = float(((state.u @ gram_v) * state.u).sum())
    pi, pj = ratings.positive_pairs()
    dots = (state.u[pi] * state.v[pj]).sum(axis=1)
    terms["rating"] = (-0.5 * hp.b_r * quad_all
                       - 0.5 * hp.a_r * float(((1.0 - dots) ** 2).sum())
                       + 0.5 * hp.b_r * float((dots ** 2).sum()))
    for name, val in terms.items():
        if not np.isfinite(val):
            raise NumericError(f"non-finite {name} term in baseline objective")
    return float(sum(terms.values()))


def update_ctr_user(state: CtrState, ratings: PairRatings, i: int,
                    hp: Hyperparams,
                    rating_gram: np.ndarray | None = None) -> np.ndarray:
    """Weighted least squares for one user over the full catalog."""
    if rating_gram is None:
        rating_gram = hp.b_r * (state.v.T @ state.v)
    pos = ratings.items_of(i)
    a = hp.lambda_u * np.eye(state.k) + rating_gram
    rhs = np.zeros(state.k)
    if pos.size:
        vp = state.v[pos]
        a = a + (hp.a_r - hp.b_r) * (vp.T @ vp)
        rhs = hp.a_r * vp.sum(axis=0)
    return _solve(a, rhs, f"baseline user {i}")


def update_ctr_item(state: CtrState, ratings: PairRatings, j: int,
                    hp: Hyperparams,
                    rating_gram: np.ndarray | None = None) -> np.ndarray:
    """Weighted least squares for one item, pulled toward its topic mix."""
    if rating_gram is None:
        rating_gram = hp.b_r * (state.u.T @ state.u)
    pos = ratings.users_of(j)
    a = hp.lambda_v * np.eye(state.k) + rating_gram
    rhs = hp.lambda_v * state.theta[j]
    if pos.size:
        up = state.u[pos]
        a = a + (hp.a_r - hp.b_r) * (up.T @ up)
        rhs = rhs + hp.a_r * up.sum(axis=0)
    return _solve(a, rhs, f"baseline item {j}")


def train_ctr(init: TopicModel, corpus: Corpus, ratings: PairRatings,
              hp: Hyperparams, seed: int = 0, *, theta_steps: int = 5,
              callback=None) -> tuple[CtrState, TrainTrace]:
    """Weighted alternating least squares on the baseline objective.

    Sweeps users -> items -> topic mixes -> topic words with the same
    warm start, stopping rule, and trace format as the joint model.
    """
    d, k = corpus.n_items, hp.k
    if init.k != k or init.theta.shape != (d, k):
        raise InputError("warm start does not match corpus and hyperparams")
    if ratings.n_items != d:
        raise InputError("rating view does not match corpus")
    rng = np.random.default_rng(seed)
    state = CtrState(
        u=rng.normal(0.0, INIT_SCALE, (ratings.n_users, k)),
        v=init.theta.copy(),
        theta=init.theta.copy(),
        beta=init.beta.copy(),
        users=list(ratings.users),
        item_ids=list(ratings.item_ids),
    )
    ell = ctr_log_likelihood(state, ratings, corpus, hp)
    trace = TrainTrace(sweeps=[SweepRecord(0, ell, 0.0)])
    for sweep in range(1, hp.max_sweeps + 1):
        try:
            gram_v = hp.b_r * (state.v.T @ state.v)
            for i in range(ratings.n_users):
                state.u[i] = update_ctr_user(state, ratings, i, hp, gram_v)
            gram_u = hp.b_r * (state.u.T @ state.u)
            for j in range(d):
                state.v[j] = update_ctr_item(state, ratings, j, hp, gram_u)
            if hp.theta_mode == "optimize":
                for j in range(d):
                    doc = corpus.documents[j]
                    state.theta[j] = optimize_theta_row(
                        state.theta[j], state.v[j], doc.word_ids, doc.counts,
                        state.beta, hp.lambda_v, n_steps=theta_steps)
                psi = responsibilities(state.theta, state.beta, corpus)
                state.beta = update_beta(psi, corpus)
            new = ctr_log_likelihood(state, ratings, corpus, hp)
        except NumericError as exc:
            raise NumericError(f"baseline sweep {sweep}: {exc}") from exc
        delta = new - ell
        trace.sweeps.append(SweepRecord(sweep, new, delta))
        prev, ell = ell, new
        if callback is not None:
            callback(sweep, state, new)
        if hp.tol > 0 and delta < hp.tol * max(1.0, abs(prev)):
            trace.converged = True
            break
    return state, trace


def popularity_scores(votes: VoteLog) -> Counter:
    """Distinct-voter count per item: the most-voted sanity-floor ranker."""
    return Counter(item for (_, item) in {(v.user, v.item) for v in votes})
