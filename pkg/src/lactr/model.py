"""Joint latent model: state, MAP objective, and block coordinate ascent.

Latents per user i, attention target l in A(i), and item j:

- ``u[i]``     user interest vector (K,)
- ``s[e]``     scalar influence weight on attention edge e = (i, l)
- ``phi[e]``   attention vector on edge e, pulled toward s[e] * u[i]
- ``v[j]``     item vector, pulled toward the item's topic mix theta[j]
- ``theta[j]`` topic proportions on the simplex
- ``beta[k]``  topic-word distributions

The objective is the complete-data log posterior with implicit-feedback
confidence weighting: observed adoptions are rated 1 with high confidence
``a_r``, every other (edge, item) cell is rated 0 with low confidence
``b_r``.  The low-confidence-everywhere structure lets every quadratic sum
over all cells collapse onto a precomputed K x K Gram matrix, so evaluation
and updates cost O((E + D) K^2) instead of O(E D K).

Each update below exactly maximizes the objective over its own coordinate
block with everything else held fixed (the topic-mix update ascends via
projected gradient with backtracking; the topic-word update is a minorize-
maximize step), so a full sweep never decreases the objective.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .errors import InputError, NumericError
from .social import AttentionEdgeSet
from .topics import TopicModel, responsibilities, update_beta

INIT_SCALE = 1e-3


@dataclass
class Hyperparams:
    """Model weights and confidence levels; validated on construction."""

    k: int = 200
    lambda_u: float = 0.01
    lambda_v: float = 100.0
    lambda_s: float = 0.01
    lambda_phi: float = 1.0
    a_r: float = 1.0
    b_r: float = 0.01
    a_phi: float = 1.0
    b_phi: float = 0.01
    theta_mode: str = "optimize"
    max_sweeps: int = 100
    tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.k < 1:
            raise InputError("k must be >= 1")
        if not (self.a_r > self.b_r > 0):
            raise InputError(
                f"rating confidences must satisfy a_r > b_r > 0, got "
                f"a_r={self.a_r}, b_r={self.b_r}")
        if not (self.a_phi > self.b_phi > 0):
            raise InputError(
                f"attention confidences must satisfy a_phi > b_phi > 0, got "
                f"a_phi={self.a_phi}, b_phi={self.b_phi}")
        if min(self.lambda_u, self.lambda_v, self.lambda_s,
               self.lambda_phi) <= 0:
            raise InputError("all lambda weights must be positive")
        if self.theta_mode not in ("optimize", "frozen"):
            raise InputError(f"unknown theta_mode {self.theta_mode!r}")
        if self.max_sweeps < 1:
            raise InputError("max_sweeps must be >= 1")
        if self.tol < 0:
            raise InputError("tol must be >= 0")

    def as_dict(self) -> dict:
        return {
            "k": self.k, "lambda_u": self.lambda_u, "lambda_v": self.lambda_v,
            "lambda_s": self.lambda_s, "lambda_phi": self.lambda_phi,
            "a_r": self.a_r, "b_r": self.b_r, "a_phi": self.a_phi,
            "b_phi": self.b_phi, "theta_mode": self.theta_mode,
            "max_sweeps": self.max_sweeps, "tol": self.tol,
        }


@dataclass
class RatingView:
    """Positive (attention edge, item) cells in dual CSR layout.

    Every cell not listed is an implicit zero with confidence ``b_r``.
    ``edge_ptr``/``edge_items`` give the positive items of each edge;
    ``item_ptr``/``item_edges`` give the positive edges of each item.
    """

    n_edges: int
    n_items: int
    edge_ptr: np.ndarray
    edge_items: np.ndarray
    item_ptr: np.ndarray
    item_edges: np.ndarray

    @classmethod
    def from_pairs(cls, pairs, n_edges: int, n_items: int) -> "RatingView":
        arr = np.asarray(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        e, j = arr[:, 0], arr[:, 1]
        if arr.size:
            if e.min() < 0 or e.max() >= n_edges:
                raise InputError("rating pair edge index out of range")
            if j.min() < 0 or j.max() >= n_items:
                raise InputError("rating pair item index out of range")
            if np.any((np.diff(e) == 0) & (np.diff(j) == 0)):
                raise InputError("duplicate positive (edge, item) pair")
        edge_ptr = np.concatenate(
            ([0], np.cumsum(np.bincount(e, minlength=n_edges))))
        by_item = np.lexsort((e, j))
        item_ptr = np.concatenate(
            ([0], np.cumsum(np.bincount(j, minlength=n_items))))
        return cls(n_edges, n_items, edge_ptr, j.copy(), item_ptr, e[by_item])

    @classmethod
    def from_attribution(cls, attr, edges: AttentionEdgeSet,
                         item_ids: list[str]) -> "RatingView":
        """Expand attributed candidate sources into positive cells.

        Every candidate source of an observed (user, item) adoption yields a
        positive rating on the corresponding attention edge.
        """
        item_index = {t: j for j, t in enumerate(item_ids)}
        pairs = []
        for (i, item), cands in attr.candidates.items():
            j = item_index.get(item)
            if j is None:
                raise InputError(f"attributed item {item!r} not in corpus")
            for l in cands:
                pairs.append((edges.edge_index(i, l), j))
        return cls.from_pairs(pairs, edges.n_edges, len(item_ids))

    @property
    def n_positives(self) -> int:
        return int(self.edge_items.size)

    def items_of(self, e: int) -> np.ndarray:
        return self.edge_items[self.edge_ptr[e]:self.edge_ptr[e + 1]]

    def edges_of(self, j: int) -> np.ndarray:
        return self.item_edges[self.item_ptr[j]:self.item_ptr[j + 1]]

    def positive_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(edge, item) index arrays over all positive cells, edge-major."""
        pe = np.repeat(np.arange(self.n_edges), np.diff(self.edge_ptr))
        return pe, self.edge_items


@dataclass
class ModelState:
    """All latent blocks plus the edge set and item ids they are indexed by."""

    u: np.ndarray
    s: np.ndarray
    phi: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    beta: np.ndarray
    edges: AttentionEdgeSet
    item_ids: list[str]

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=np.float64)
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        n, e = self.edges.n_users, self.edges.n_edges
        k = self.u.shape[1] if self.u.ndim == 2 else -1
        d = len(self.item_ids)
        if self.u.shape != (n, k) or self.phi.shape != (e, k) \
                or self.s.shape != (e,) or self.v.shape != (d, k) \
                or self.theta.shape != (d, k):
            raise InputError(
                f"latent shapes inconsistent: u{self.u.shape} s{self.s.shape} "
                f"phi{self.phi.shape} v{self.v.shape} theta{self.theta.shape} "
                f"for {n} users, {e} edges, {d} items")
        if self.beta.ndim != 2 or self.beta.shape[0] != k:
            raise InputError(f"beta shape {self.beta.shape} does not match "
                             f"k={k}")
        if len(set(self.item_ids)) != d:
            raise InputError("duplicate item ids in model state")

    @property
    def n_users(self) -> int:
        return self.edges.n_users

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def k(self) -> int:
        return int(self.u.shape[1])

    @property
    def vocab_size(self) -> int:
        return int(self.beta.shape[1])

    @property
    def users(self) -> list[str]:
        return self.edges.users

    def validate(self) -> None:
        """Re-check simplex and finiteness invariants after in-place edits."""
        for name, arr in (("u", self.u), ("s", self.s), ("phi", self.phi),
                          ("v", self.v)):
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite values in {name}")
        from .topics import _check_rows
        _check_rows("theta", self.theta)
        _check_rows("beta", self.beta)


def log_likelihood_terms(state: ModelState, ratings: RatingView,
                         corpus: Corpus, hp: Hyperparams) -> dict[str, float]:
    """The objective split into named additive terms (useful for testing).

    The rating term runs over every (attention edge, item) cell; the Gram
    identity sum_e phi_e' (V'V) phi_e covers the low-confidence zeros, and
    positives contribute their correction on top.
    """
    conf = state.edges.confidences(hp.a_phi, hp.b_phi)
    terms: dict[str, float] = {}
    terms["interest_prior"] = -0.5 * hp.lambda_u * float((state.u ** 2).sum())
    terms["influence_prior"] = -0.5 * hp.lambda_s * float((state.s ** 2).sum())
    terms["item_offset"] = -0.5 * hp.lambda_v * float(
        ((state.v - state.theta) ** 2).sum())
    dev = state.phi - state.s[:, None] * state.u[state.edges.src]
    terms["attention_coupling"] = -0.5 * hp.lambda_phi * float(
        (conf * (dev ** 2).sum(axis=1)).sum())
    _, doc_index, word_ids, counts = corpus.packed()
    mass = (state.theta[doc_index] * state.beta[:, word_ids].T).sum(axis=1)
    with np.errstate(divide="ignore"):
        terms["word"] = float((counts * np.log(mass)).sum())
    gram_v = state.v.T @ state.v
    quad_all = float(((state.phi @ gram_v) * state.phi).sum())
    pe, pj = ratings.positive_pairs()
    dots = (state.phi[pe] * state.v[pj]).sum(axis=1)
    terms["rating"] = (-0.5 * hp.b_r * quad_all
                       - 0.5 * hp.a_r * float(((1.0 - dots) ** 2).sum())
                       + 0.5 * hp.b_r * float((dots ** 2).sum()))
    return terms


def log_likelihood(state: ModelState, ratings: RatingView, corpus: Corpus,
                   hp: Hyperparams) -> float:
    """Complete-data log posterior up to constants; raises on non-finite
    terms."""
    terms = log_likelihood_terms(state, ratings, corpus, hp)
    for name, val in terms.items():
        if not np.isfinite(val):
            raise NumericError(f"non-finite {name} term in objective")
    return float(sum(terms.values()))


def _solve(a: np.ndarray, rhs: np.ndarray, context: str) -> np.ndarray:
    try:
        x = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular normal equations for {context}") from exc
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite solution for {context}")
    return x


def update_user_interest(state: ModelState, i: int,
                         hp: Hyperparams) -> np.ndarray:
    """Exact maximizer of the objective over u[i].

    Only the coupling terms of user i's attention edges and the interest
    prior touch u[i]; both are quadratic with a shared scalar curvature, so
    the solve reduces to a weighted average of the edge attention vectors.
    """
    sl = state.edges.slice_of(i)
    conf = np.where(state.edges.friend[sl], hp.a_phi, hp.b_phi)
    s = state.s[sl]
    w = conf * s
    denom = hp.lambda_u + hp.lambda_phi * float((w * s).sum())
    num = hp.lambda_phi * (w[:, None] * state.phi[sl]).sum(axis=0)
    return num / denom


def update_influence(state: ModelState, i: int, l: int,
                     hp: Hyperparams) -> float:
    """Exact maximizer of the objective over the scalar s on edge (i, l)."""
    e = state.edges.edge_index(i, l)
    return _influence_value(state, e, hp)


def _influence_value(state: ModelState, e: int, hp: Hyperparams) -> float:
    c = hp.a_phi if state.edges.friend[e] else hp.b_phi
    u = state.u[int(state.edges.src[e])]
    num = hp.lambda_phi * c * float(state.phi[e] @ u)
    den = hp.lambda_s + hp.lambda_phi * c * float(u @ u)
    return num / den


def rating_gram_items(state: ModelState, hp: Hyperparams) -> np.ndarray:
    """b_r * V'V, the implicit-zero part of every attention normal system."""
    return hp.b_r * (state.v.T @ state.v)


def rating_gram_edges(state: ModelState, hp: Hyperparams) -> np.ndarray:
    """b_r * Phi'Phi, the implicit-zero part of every item normal system."""
    return hp.b_r * (state.phi.T @ state.phi)


def update_attention(state: ModelState, ratings: RatingView, i: int, l: int,
                     hp: Hyperparams,
                     rating_gram: np.ndarray | None = None) -> np.ndarray:
    """Exact maximizer of the objective over the attention vector on (i, l).

    ``rating_gram`` is b_r * V'V; pass it when sweeping all edges so the
    full-catalog quadratic is shared instead of recomputed per edge.
    """
    e = state.edges.edge_index(i, l)
    if rating_gram is None:
        rating_gram = rating_gram_items(state, hp)
    return _attention_solution(state, ratings, e, hp, rating_gram)


def attention_kernel(ridge: float, rating_gram: np.ndarray,
                     pos_vectors: np.ndarray, a_r: float, b_r: float,
                     pull: np.ndarray, context: str = "attention"
                     ) -> np.ndarray:
    """Solve one attention normal system from raw pieces.

    ``ridge`` is the coupling curvature (attention weight times confidence),
    ``rating_gram`` the b_r-weighted full-catalog Gram matrix, ``pos_vectors``
    the item vectors rated 1 on this edge, and ``pull`` the prior mean times
    the ridge.  Exposed separately so limiting cases (e.g. b_r = 0) can be
    exercised without constructing hyperparameters that the validated type
    rejects.
    """
    k = pull.shape[0]
    a = ridge * np.eye(k) + rating_gram
    rhs = pull.astype(np.float64, copy=True)
    if pos_vectors.size:
        a = a + (a_r - b_r) * (pos_vectors.T @ pos_vectors)
        rhs = rhs + a_r * pos_vectors.sum(axis=0)
    return _solve(a, rhs, context)


def _attention_solution(state: ModelState, ratings: RatingView, e: int,
                        hp: Hyperparams,
                        rating_gram: np.ndarray) -> np.ndarray:
    c = hp.a_phi if state.edges.friend[e] else hp.b_phi
    pos = ratings.items_of(e)
    ridge = hp.lambda_phi * c
    pull = ridge * state.s[e] * state.u[int(state.edges.src[e])]
    return attention_kernel(ridge, rating_gram, state.v[pos], hp.a_r, hp.b_r,
                            pull, f"attention edge {e}")


def update_item(state: ModelState, ratings: RatingView, j: int,
                hp: Hyperparams,
                rating_gram: np.ndarray | None = None) -> np.ndarray:
    """Exact maximizer of the objective over item vector v[j].

    ``rating_gram`` is b_r * Phi'Phi, shared across items within a sweep.
    """
    if rating_gram is None:
        rating_gram = rating_gram_edges(state, hp)
    k = state.k
    pos = ratings.edges_of(j)
    a = hp.lambda_v * np.eye(k) + rating_gram
    rhs = hp.lambda_v * state.theta[j]
    if pos.size:
        pp = state.phi[pos]
        a = a + (hp.a_r - hp.b_r) * (pp.T @ pp)
        rhs = rhs + hp.a_r * pp.sum(axis=0)
    return _solve(a, rhs, f"item {j}")


def project_simplex(x: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InputError("simplex projection expects a non-empty vector")
    u = np.sort(x)[::-1]
    cssv = np.cumsum(u)
    js = np.arange(1, x.size + 1)
    rho = np.nonzero(u + (1.0 - cssv) / js > 0)[0][-1]
    lam = (1.0 - cssv[rho]) / (rho + 1.0)
    return np.maximum(x + lam, 0.0)


def theta_objective(theta: np.ndarray, v: np.ndarray, word_ids: np.ndarray,
                    counts: np.ndarray, beta: np.ndarray,
                    lambda_v: float) -> float:
    """Per-item objective over a topic mix: exact word log masses plus the
    quadratic pull toward the item vector.  Returns -inf when a needed word
    has zero mass."""
    dot = theta @ beta[:, word_ids]
    with np.errstate(divide="ignore"):
        word = float((counts * np.log(dot)).sum())
    return word - 0.5 * lambda_v * float(((v - theta) ** 2).sum())


def optimize_theta_row(theta: np.ndarray, v: np.ndarray, word_ids: np.ndarray,
                       counts: np.ndarray, beta: np.ndarray, lambda_v: float,
                       *, n_steps: int = 1, step0: float = 1.0,
                       max_halvings: int = 40) -> np.ndarray:
    """Projected gradient ascent with backtracking on the per-item objective.

    The word part is concave on the simplex and the quadratic pull keeps the
    maximizer unique; each accepted step projects back onto the simplex and
    is only taken when the exact objective does not decrease, so the caller's
    objective never goes down.  If no step length up to ``max_halvings``
    halvings improves, the row is returned unchanged.
    """
    bw = beta[:, word_ids]
    counts = np.asarray(counts, dtype=np.float64)
    cur = np.asarray(theta, dtype=np.float64).copy()
    f_cur = theta_objective(cur, v, word_ids, counts, beta, lambda_v)
    for _ in range(n_steps):
        dot = cur @ bw
        with np.errstate(divide="ignore", invalid="ignore"):
            grad = bw @ np.where(dot > 0, counts / np.where(dot > 0, dot, 1.0),
                                 0.0)
        grad = grad + lambda_v * (v - cur)
        step = step0
        moved = False
        for _ in range(max_halvings):
            cand = project_simplex(cur + step * grad)
            f_cand = theta_objective(cand, v, word_ids, counts, beta, lambda_v)
            if f_cand >= f_cur and np.isfinite(f_cand):
                moved = not np.array_equal(cand, cur)
                cur, f_cur = cand, f_cand
                break
            step *= 0.5
        if not moved:
            break
    return cur


def update_theta(state: ModelState, corpus: Corpus, j: int, hp: Hyperparams,
                 n_steps: int = 1) -> np.ndarray:
    """Ascend the objective over the topic mix of item j (simplex-constrained)."""
    doc = corpus.documents[j]
    return optimize_theta_row(state.theta[j], state.v[j], doc.word_ids,
                              doc.counts, state.beta, hp.lambda_v,
                              n_steps=n_steps)


def _phase_attention(state, ratings, hp, after=None) -> None:
    gram = rating_gram_items(state, hp)
    for e in range(state.edges.n_edges):
        state.phi[e] = _attention_solution(state, ratings, e, hp, gram)
        if after is not None:
            after(f"attention[{e}]")


def _phase_influence(state, hp, after=None) -> None:
    for e in range(state.edges.n_edges):
        state.s[e] = _influence_value(state, e, hp)
        if after is not None:
            after(f"influence[{e}]")


def _phase_interest(state, hp, after=None) -> None:
    for i in range(state.n_users):
        state.u[i] = update_user_interest(state, i, hp)
        if after is not None:
            after(f"interest[{i}]")


def _phase_items(state, ratings, hp, after=None) -> None:
    gram = rating_gram_edges(state, hp)
    for j in range(state.n_items):
        state.v[j] = update_item(state, ratings, j, hp, gram)
        if after is not None:
            after(f"item[{j}]")


def _phase_topic_mix(state, corpus, hp, n_steps, after=None) -> None:
    for j in range(state.n_items):
        state.theta[j] = update_theta(state, corpus, j, hp, n_steps)
        if after is not None:
            after(f"topic_mix[{j}]")


def _phase_topic_words(state, corpus, after=None) -> None:
    psi = responsibilities(state.theta, state.beta, corpus)
    state.beta = update_beta(psi, corpus)
    if after is not None:
        after("topic_words")


@dataclass
class SweepRecord:
    sweep: int
    log_likelihood: float
    delta: float


@dataclass
class TrainTrace:
    """Objective trajectory: one record per sweep, optional per-block probes."""

    sweeps: list[SweepRecord] = field(default_factory=list)
    blocks: list[tuple[int, str, float]] = field(default_factory=list)
    converged: bool = False

    @property
    def n_sweeps(self) -> int:
        return self.sweeps[-1].sweep if self.sweeps else 0

    @property
    def final_log_likelihood(self) -> float:
        return self.sweeps[-1].log_likelihood

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("sweep,log_likelihood,delta\n")
            for rec in self.sweeps:
                fh.write(f"{rec.sweep},{rec.log_likelihood!r},{rec.delta!r}\n")


def train(init: TopicModel, corpus: Corpus, edges: AttentionEdgeSet,
          ratings: RatingView, hp: Hyperparams, seed: int = 0, *,
          record: str = "sweep", theta_steps: int = 5, callback=None
          ) -> tuple[ModelState, TrainTrace]:
    """Fit the joint model by block coordinate ascent.

    Starts from the topic-model warm start (v = theta, small random u/s/phi)
    and sweeps attention -> influence -> interest -> items -> topic mixes ->
    topic words until the relative objective improvement drops below
    ``hp.tol`` (tol=0 disables early stopping) or ``hp.max_sweeps`` is
    reached.  With ``record='block'`` the trace additionally logs the
    objective after every individual block update, which is quadratic-cost
    instrumentation meant for small diagnostic runs.  ``callback(sweep,
    state, ell)``, when given, runs after each sweep (progress reporting,
    invariant probes); it must not mutate the state.

    Deterministic for fixed inputs and seed.
    """
    if record not in ("sweep", "block"):
        raise InputError(f"unknown record mode {record!r}")
    if theta_steps < 1:
        raise InputError("theta_steps must be >= 1")
    d, k = corpus.n_items, hp.k
    if init.k != k:
        raise InputError(f"warm start has k={init.k}, hyperparams say {k}")
    if init.theta.shape != (d, k):
        raise InputError(
            f"warm start theta shape {init.theta.shape} does not match "
            f"corpus ({d} items, k={k})")
    if init.beta.shape[1] != corpus.vocab_size:
        raise InputError("warm start beta does not match corpus vocabulary")
    if ratings.n_edges != edges.n_edges or ratings.n_items != d:
        raise InputError("rating view does not match edge set and corpus")
    rng = np.random.default_rng(seed)
    n, e = edges.n_users, edges.n_edges
    state = ModelState(
        u=rng.normal(0.0, INIT_SCALE, (n, k)),
        s=rng.normal(0.0, INIT_SCALE, e),
        phi=rng.normal(0.0, INIT_SCALE, (e, k)),
        v=init.theta.copy(),
        theta=init.theta.copy(),
        beta=init.beta.copy(),
        edges=edges,
        item_ids=corpus.item_ids,
    )
    ell = log_likelihood(state, ratings, corpus, hp)
    trace = TrainTrace(sweeps=[SweepRecord(0, ell, 0.0)])
    for sweep in range(1, hp.max_sweeps + 1):
        if record == "block":
            def after(label: str, _sweep=sweep) -> None:
                trace.blocks.append(
                    (_sweep, label,
                     log_likelihood(state, ratings, corpus, hp)))
        else:
            after = None
        try:
            _phase_attention(state, ratings, hp, after)
            _phase_influence(state, hp, after)
            _phase_interest(state, hp, after)
            _phase_items(state, ratings, hp, after)
            if hp.theta_mode == "optimize":
                _phase_topic_mix(state, corpus, hp, theta_steps, after)
                _phase_topic_words(state, corpus, after)
            new = log_likelihood(state, ratings, corpus, hp)
        except NumericError as exc:
            raise NumericError(f"sweep {sweep}: {exc}") from exc
        delta = new - ell
        trace.sweeps.append(SweepRecord(sweep, new, delta))
        prev, ell = ell, new
        if callback is not None:
            callback(sweep, state, new)
        if hp.tol > 0 and delta < hp.tol * max(1.0, abs(prev)):
            trace.converged = True
            break
    return state, trace
