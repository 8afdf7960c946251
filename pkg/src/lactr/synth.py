"""Synthetic dataset generator following the model's generative process.

Samples topics, documents, a follower graph, and the latent blocks from
their priors, draws real-valued ratings on every (attention edge, item)
cell, and binarizes them into adoption votes.  Timestamps are synthetic:
each vote's best explaining source (when that source is itself an adopter)
receives an earlier timestamp than the adopter, so timestamp-based source
attribution can recover the planted source among its candidates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .corpus import Corpus, Document, Vocabulary
from .errors import InputError
from .model import Hyperparams, ModelState
from .social import (AttentionEdgeSet, FollowerGraph, Vote, VoteLog,
                     build_attention_edges)

GRAPH_KINDS = ("erdos_renyi", "preferential")
ADOPTION_KINDS = ("threshold", "top_k")


@dataclass
class SynthConfig:
    """Generator settings; validated on construction.

    ``graph`` is ('erdos_renyi', p) or ('preferential', m); ``adoption`` is
    ('threshold', tau) or ('top_k', kappa).  ``target_rate``, when set,
    overrides tau so the fraction of adopted (user, item) pairs lands near
    the requested value (useful for matching real-data sparsity).
    """

    n_users: int
    n_items: int
    k: int
    vocab_size: int
    doc_length: int
    graph: tuple[str, float]
    hp: Hyperparams
    adoption: tuple[str, float] = ("threshold", 0.5)
    seed: int = 0
    theta_alpha: float = 1.0
    beta_eta: float = 0.1
    target_rate: float | None = None

    def __post_init__(self) -> None:
        for name in ("n_users", "n_items", "k", "vocab_size", "doc_length"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be positive")
        if self.k != self.hp.k:
            raise InputError(
                f"config k={self.k} disagrees with hyperparams k={self.hp.k}")
        kind, param = self.graph
        if kind not in GRAPH_KINDS:
            raise InputError(f"unknown graph model {kind!r}")
        if kind == "erdos_renyi" and not 0.0 <= param <= 1.0:
            raise InputError("edge probability must be in [0, 1]")
        if kind == "preferential" and not 1 <= int(param) < self.n_users:
            raise InputError("preferential attachment needs 1 <= m < n_users")
        akind, aparam = self.adoption
        if akind not in ADOPTION_KINDS:
            raise InputError(f"unknown adoption rule {akind!r}")
        if akind == "threshold" and not np.isfinite(aparam):
            raise InputError("threshold tau must be finite")
        if akind == "top_k" and not 1 <= int(aparam) <= self.n_items:
            raise InputError("top_k kappa must be in [1, n_items]")
        if self.theta_alpha <= 0 or self.beta_eta <= 0:
            raise InputError("Dirichlet concentrations must be positive")
        if self.target_rate is not None and not 0 < self.target_rate < 1:
            raise InputError("target_rate must be in (0, 1)")
        if self.target_rate is not None and self.adoption[0] != "threshold":
            raise InputError("target_rate applies to the threshold rule only")


@dataclass
class SynthResult:
    """Generated dataset plus the planted ground truth."""

    corpus: Corpus
    graph: FollowerGraph
    votes: VoteLog
    truth: ModelState
    sources: dict[tuple[str, str], str | None]
    stats: dict = field(default_factory=dict)


def _sample_graph(cfg: SynthConfig) -> FollowerGraph:
    users = [f"u{i:04d}" for i in range(cfg.n_users)]
    kind, param = cfg.graph
    if kind == "erdos_renyi":
        g = nx.gnp_random_graph(cfg.n_users, param, seed=cfg.seed,
                                directed=True)
        follows = [frozenset(int(t) for t in g.successors(i))
                   for i in range(cfg.n_users)]
    else:
        g = nx.barabasi_albert_graph(cfg.n_users, int(param), seed=cfg.seed)
        sets: list[set[int]] = [set() for _ in range(cfg.n_users)]
        for a, b in g.edges():
            sets[max(a, b)].add(min(a, b))
        follows = [frozenset(s) for s in sets]
    return FollowerGraph(users, follows)


def _sample_documents(cfg: SynthConfig, rng: np.random.Generator,
                      theta: np.ndarray, beta: np.ndarray) -> Corpus:
    width = len(str(cfg.vocab_size - 1))
    vocab = Vocabulary([f"w{w:0{width}d}" for w in range(cfg.vocab_size)])
    beta_cum = np.cumsum(beta, axis=1)
    docs = []
    for j in range(cfg.n_items):
        z = np.searchsorted(np.cumsum(theta[j]), rng.random(cfg.doc_length))
        z = np.minimum(z, cfg.k - 1)
        draws = rng.random(cfg.doc_length)
        words = (beta_cum[z] < draws[:, None]).sum(axis=1)
        words = np.minimum(words, cfg.vocab_size - 1)
        counts = np.bincount(words, minlength=cfg.vocab_size)
        ids = np.nonzero(counts)[0]
        docs.append(Document(f"it{j:05d}", ids, counts[ids]))
    return Corpus(vocab, docs)


def _assign_timestamps(adopters: list[int],
                       parent: dict[int, int | None]) -> dict[int, int]:
    """Depths in the source forest: roots at 0, each adopter one past its
    source.  Mutual-source cycles are broken by promoting the smallest
    unplaced adopter to a root."""
    depth: dict[int, int] = {}
    children: dict[int, list[int]] = {}
    pending = []
    for i in adopters:
        p = parent[i]
        if p is None:
            depth[i] = 0
            pending.append(i)
        else:
            children.setdefault(p, []).append(i)
    remaining = set(adopters) - set(depth)
    while True:
        while pending:
            cur = pending.pop()
            for ch in sorted(children.get(cur, ())):
                if ch not in depth:
                    depth[ch] = depth[cur] + 1
                    remaining.discard(ch)
                    pending.append(ch)
        if not remaining:
            return depth
        root = min(remaining)
        depth[root] = 0
        remaining.discard(root)
        pending.append(root)


def generate(cfg: SynthConfig) -> SynthResult:
    """Sample one dataset; fully deterministic for a fixed config."""
    rng = np.random.default_rng(cfg.seed)
    hp = cfg.hp
    n, d, k, m = cfg.n_users, cfg.n_items, cfg.k, cfg.vocab_size
    graph = _sample_graph(cfg)
    edges = build_attention_edges(graph, neg_samples=0, seed=cfg.seed)
    beta = rng.dirichlet(cfg.beta_eta * np.ones(m), size=k)
    theta = rng.dirichlet(cfg.theta_alpha * np.ones(k), size=d)
    corpus = _sample_documents(cfg, rng, theta, beta)
    u = rng.normal(0.0, 1.0 / np.sqrt(hp.lambda_u), (n, k))
    s = rng.normal(0.0, 1.0 / np.sqrt(hp.lambda_s), edges.n_edges)
    conf = edges.confidences(hp.a_phi, hp.b_phi)
    noise = rng.normal(size=(edges.n_edges, k))
    phi = (s[:, None] * u[edges.src]
           + noise / np.sqrt(hp.lambda_phi * conf)[:, None])
    v = theta + rng.normal(0.0, 1.0 / np.sqrt(hp.lambda_v), (d, k))
    r_real = phi @ v.T + rng.normal(size=(edges.n_edges, d)) / np.sqrt(hp.a_r)
    akind, aparam = cfg.adoption
    if akind == "threshold":
        pair_best = np.maximum.reduceat(r_real, edges.user_ptr[:-1], axis=0)
        tau = float(aparam)
        if cfg.target_rate is not None:
            tau = float(np.quantile(pair_best, 1.0 - cfg.target_rate))
        pos = r_real > tau
    else:
        kappa = int(aparam)
        order = np.argsort(-r_real, axis=1, kind="stable")[:, :kappa]
        pos = np.zeros_like(r_real, dtype=bool)
        np.put_along_axis(pos, order, True, axis=1)
        tau = float("nan")
    pair_pos = np.logical_or.reduceat(pos, edges.user_ptr[:-1], axis=0)
    votes: list[Vote] = []
    sources: dict[tuple[str, str], str | None] = {}
    masked = np.where(pos, r_real, -np.inf)
    for j in range(d):
        adopters = [int(i) for i in np.nonzero(pair_pos[:, j])[0]]
        if not adopters:
            continue
        parent: dict[int, int | None] = {}
        for i in adopters:
            sl = edges.slice_of(i)
            best_local = int(np.argmax(masked[sl, j]))
            l = int(edges.dst[sl.start + best_local])
            exogenous = l == i or not pair_pos[l, j]
            parent[i] = None if exogenous else l
            sources[(graph.users[i], corpus.item_ids[j])] = (
                None if exogenous else graph.users[l])
        depth = _assign_timestamps(adopters, parent)
        for i in adopters:
            votes.append(Vote(graph.users[i], corpus.item_ids[j], depth[i]))
    truth = ModelState(u=u, s=s, phi=phi, v=v, theta=theta, beta=beta,
                       edges=edges, item_ids=corpus.item_ids)
    n_follow = sum(len(f) for f in graph.follows)
    stats = {
        "n_users": n, "n_items": d, "n_votes": len(votes),
        "n_follow_edges": n_follow, "n_attention_edges": edges.n_edges,
        "positive_pair_rate": float(pair_pos.mean()),
        "adoption": {"rule": akind, "param": float(aparam), "tau_used": tau,
                     "target_rate": cfg.target_rate},
        "seed": cfg.seed,
    }
    return SynthResult(corpus, graph,
                       VoteLog(sorted(votes, key=lambda v: (v.item, v.t,
                                                            v.user))),
                       truth, sources, stats)
