"""Topic-model warm start and the topic-word refresh used during training.

``fit_lda`` runs collapsed Gibbs sampling to produce smoothed document-topic
proportions (theta) and topic-word distributions (beta) that seed the latent
model.  ``update_beta`` is the count-weighted refresh applied once per
training sweep: accumulate per-occurrence topic responsibilities into the
topic-word table and renormalize rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .corpus import Corpus, Vocabulary
from .errors import InputError

ROW_SUM_TOL = 1e-9


@dataclass
class TopicModel:
    """Row-stochastic document-topic (theta) and topic-word (beta) tables."""

    theta: np.ndarray
    beta: np.ndarray
    k: int

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.theta.ndim != 2 or self.beta.ndim != 2:
            raise InputError("theta and beta must be 2-d")
        if self.theta.shape[1] != self.k or self.beta.shape[0] != self.k:
            raise InputError(
                f"topic count mismatch: theta {self.theta.shape}, beta "
                f"{self.beta.shape}, k={self.k}")
        _check_rows("theta", self.theta)
        _check_rows("beta", self.beta)

    @property
    def n_items(self) -> int:
        return self.theta.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.beta.shape[1]


def _check_rows(name: str, table: np.ndarray) -> None:
    if table.size == 0:
        return
    if np.any(table < 0):
        raise InputError(f"{name} has negative entries")
    err = np.abs(table.sum(axis=1) - 1.0)
    if err.max() > ROW_SUM_TOL:
        raise InputError(
            f"{name} rows must sum to 1 within {ROW_SUM_TOL:g} "
            f"(worst deviation {err.max():.3e})")


@njit(cache=True)
def _gibbs_sweeps(doc_of, word_of, z, n_jk, n_kw, n_k, alpha, eta, iters, seed):
    np.random.seed(seed)
    n_topics, n_words = n_kw.shape
    cum = np.empty(n_topics)
    for _ in range(iters):
        for t in range(doc_of.size):
            j = doc_of[t]
            w = word_of[t]
            k = z[t]
            n_jk[j, k] -= 1
            n_kw[k, w] -= 1
            n_k[k] -= 1
            total = 0.0
            for kk in range(n_topics):
                total += ((n_jk[j, kk] + alpha) * (n_kw[kk, w] + eta)
                          / (n_k[kk] + n_words * eta))
                cum[kk] = total
            r = np.random.random() * total
            k = 0
            while k < n_topics - 1 and cum[k] < r:
                k += 1
            z[t] = k
            n_jk[j, k] += 1
            n_kw[k, w] += 1
            n_k[k] += 1


def fit_lda(corpus: Corpus, k: int, alpha: float = 1.0, eta: float = 0.01,
            iters: int = 100, seed: int = 0) -> TopicModel:
    """Collapsed Gibbs LDA with symmetric priors.

    Returns smoothed point estimates: theta[j, k] proportional to topic counts
    plus alpha, beta[k, w] proportional to word counts plus eta.  Fully
    deterministic for a given (corpus, k, alpha, eta, iters, seed).
    """
    if corpus.n_items == 0:
        raise InputError("cannot fit topics on an empty corpus")
    if k < 1:
        raise InputError("k must be >= 1")
    if iters < 1:
        raise InputError("iters must be >= 1")
    if alpha <= 0 or eta <= 0:
        raise InputError("alpha and eta must be positive")
    d = corpus.n_items
    m = corpus.vocab_size
    _, doc_index, word_ids, counts = corpus.packed()
    doc_of = np.repeat(doc_index, counts)
    word_of = np.repeat(word_ids, counts)
    rng = np.random.default_rng(seed)
    z = rng.integers(0, k, size=doc_of.size, dtype=np.int64)
    n_jk = np.zeros((d, k), dtype=np.int64)
    n_kw = np.zeros((k, m), dtype=np.int64)
    np.add.at(n_jk, (doc_of, z), 1)
    np.add.at(n_kw, (z, word_of), 1)
    n_k = n_kw.sum(axis=1)
    if doc_of.size:
        _gibbs_sweeps(doc_of, word_of, z, n_jk, n_kw, n_k,
                      float(alpha), float(eta), int(iters), seed % 2**32)
    lengths = n_jk.sum(axis=1)
    theta = (n_jk + alpha) / (lengths[:, None] + k * alpha)
    beta = (n_kw + eta) / (n_k[:, None] + m * eta)
    return TopicModel(theta, beta, k)


def responsibilities(theta: np.ndarray, beta: np.ndarray,
                     corpus: Corpus) -> np.ndarray:
    """Per-occurrence topic responsibilities, one row per (document, word)
    pair in packed corpus order.

    Row (j, w) is proportional to theta[j] * beta[:, w].  Rows whose mass
    vanishes fall back to uniform so downstream normalization stays defined.
    """
    _, doc_index, word_ids, _ = corpus.packed()
    psi = theta[doc_index] * beta[:, word_ids].T
    totals = psi.sum(axis=1, keepdims=True)
    k = theta.shape[1]
    out = np.where(totals > 0, psi / np.where(totals > 0, totals, 1.0), 1.0 / k)
    return out


def update_beta(psi: np.ndarray, corpus: Corpus) -> np.ndarray:
    """Refresh topic-word rows from responsibilities.

    ``psi`` carries one K-vector per packed (document, word) pair; each pair
    contributes its responsibility times its count to the word's column.
    Rows are renormalized to sum to one; a row that receives no mass becomes
    uniform.
    """
    _, _, word_ids, counts = corpus.packed()
    psi = np.asarray(psi, dtype=np.float64)
    if psi.ndim != 2 or psi.shape[0] != word_ids.size:
        raise InputError(
            f"psi must have one row per packed corpus pair "
            f"({word_ids.size}), got shape {psi.shape}")
    if psi.size:
        if psi.min() < 0:
            raise InputError("psi rows must be probability vectors")
        row_err = np.abs(psi.sum(axis=1) - 1.0).max()
        if row_err > 1e-6:
            raise InputError("psi rows must be probability vectors "
                             f"(worst row-sum deviation {row_err:.3e})")
    k = psi.shape[1]
    m = corpus.vocab_size
    acc = np.zeros((m, k))
    np.add.at(acc, word_ids, psi * counts[:, None])
    beta = acc.T
    totals = beta.sum(axis=1, keepdims=True)
    beta = np.where(totals > 0, beta / np.where(totals > 0, totals, 1.0),
                    1.0 / m)
    return beta


def top_words(beta: np.ndarray, vocab: Vocabulary,
              n: int = 10) -> list[list[tuple[str, float]]]:
    """Per-topic (token, probability) lists, highest probability first.

    Ties resolve toward smaller word ids, so output is deterministic.
    """
    out = []
    for row in np.asarray(beta, dtype=np.float64):
        order = np.argsort(-row, kind="stable")[:n]
        out.append([(vocab.words[int(w)], float(row[int(w)])) for w in order])
    return out


def format_topic_dump(beta: np.ndarray, vocab: Vocabulary, n: int = 10) -> str:
    """Render ``topic <k>: <word>:<prob> ...`` lines."""
    lines = []
    for k, words in enumerate(top_words(beta, vocab, n)):
        body = " ".join(f"{w}:{p:.6f}" for w, p in words)
        lines.append(f"topic {k}: {body}")
    return "\n".join(lines) + "\n"
