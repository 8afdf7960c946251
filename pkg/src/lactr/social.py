"""Follower graph, vote log, attention edges, and source attribution.

The attention edge set materializes, for every user i, the candidate sources
A(i): the user herself, every followee, and a seeded sample of non-followees
that act as negative candidates.  Edges are stored in CSR layout (all edges of
user 0, then user 1, ...) so per-user slices are contiguous.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class Vote:
    """One (user, item, timestamp) adoption event."""

    user: str
    item: str
    t: int


@dataclass
class VoteLog:
    """Chronological record of votes; duplicates are allowed and preserved."""

    votes: list[Vote]

    def __len__(self) -> int:
        return len(self.votes)

    def __iter__(self):
        return iter(self.votes)

    def users(self) -> list[str]:
        return sorted({v.user for v in self.votes})

    def items(self) -> list[str]:
        return sorted({v.item for v in self.votes})

    def counts_by_user(self) -> Counter:
        return Counter(v.user for v in self.votes)

    def counts_by_item(self) -> Counter:
        return Counter(v.item for v in self.votes)

    def earliest(self) -> dict[tuple[str, str], int]:
        """Earliest timestamp per (user, item) pair."""
        out: dict[tuple[str, str], int] = {}
        for v in self.votes:
            key = (v.user, v.item)
            if key not in out or v.t < out[key]:
                out[key] = v.t
        return out

    def restricted(self, users: set[str] | None = None,
                   items: set[str] | None = None) -> "VoteLog":
        """Sub-log containing only votes whose endpoints survive a filter."""
        kept = [v for v in self.votes
                if (users is None or v.user in users)
                and (items is None or v.item in items)]
        return VoteLog(kept)


def read_votes_file(path: str) -> VoteLog:
    """Parse ``<user>\\t<item>\\t<timestamp>`` lines; timestamps are integers."""
    votes: list[Vote] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InputError(
                    f"{path}:{lineno}: expected '<user>\\t<item>\\t<timestamp>', "
                    f"got {len(parts)} field(s)")
            user, item, ts = parts
            if not user or not item:
                raise InputError(f"{path}:{lineno}: empty user or item id")
            try:
                t = int(ts)
            except ValueError:
                raise InputError(
                    f"{path}:{lineno}: timestamp {ts!r} is not an integer") from None
            votes.append(Vote(user, item, t))
    return VoteLog(votes)


def write_votes_file(log: VoteLog, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in log.votes:
            fh.write(f"{v.user}\t{v.item}\t{v.t}\n")


@dataclass
class FollowerGraph:
    """Directed follow relation over an ordered user list.

    ``follows[i]`` holds the user indices that user i follows (her followees).
    Self loops are not representable; offering one to the constructor is an
    error, and ``from_pairs`` drops them during tolerant file ingest.
    """

    users: list[str]
    follows: list[frozenset[int]]

    def __post_init__(self) -> None:
        n = len(self.users)
        if len(set(self.users)) != n:
            raise InputError("duplicate user ids in follower graph")
        if len(self.follows) != n:
            raise InputError(
                f"follow lists ({len(self.follows)}) do not match users ({n})")
        for i, fol in enumerate(self.follows):
            if i in fol:
                raise InputError(f"self loop on user {self.users[i]!r}")
            for l in fol:
                if not 0 <= l < n:
                    raise InputError(f"followee index {l} out of range")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @classmethod
    def from_pairs(cls, pairs, users: list[str], *,
                   unknown: str = "drop") -> "FollowerGraph":
        """Build from (follower, followee) id pairs.

        Pairs touching ids outside ``users`` are dropped (``unknown='drop'``,
        the mode used when a prepared dataset has been activity-filtered) or
        rejected (``unknown='error'``).  Self loops are always dropped.
        """
        if unknown not in ("drop", "error"):
            raise InputError(f"unknown handling mode {unknown!r}")
        index = {u: i for i, u in enumerate(users)}
        follows: list[set[int]] = [set() for _ in users]
        for a, b in pairs:
            if a not in index or b not in index:
                if unknown == "error":
                    raise InputError(f"edge ({a!r}, {b!r}) touches unknown user")
                continue
            if a == b:
                continue
            follows[index[a]].add(index[b])
        return cls(users, [frozenset(f) for f in follows])


def read_edges_file(path: str) -> list[tuple[str, str]]:
    """Parse ``<follower>\\t<followee>`` lines."""
    pairs: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise InputError(
                    f"{path}:{lineno}: expected '<follower>\\t<followee>'")
            pairs.append((parts[0], parts[1]))
    return pairs


def write_edges_file(graph: FollowerGraph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, fol in enumerate(graph.follows):
            for l in sorted(fol):
                fh.write(f"{graph.users[i]}\t{graph.users[l]}\n")


@dataclass
class AttentionEdgeSet:
    """Materialized attention edges in CSR-by-user layout.

    ``src[e]``/``dst[e]`` are user indices; ``friend[e]`` marks edges toward a
    followee or the user herself (high-confidence edges), everything else is a
    sampled negative candidate.  ``user_ptr`` delimits each user's slice.
    """

    users: list[str]
    src: np.ndarray
    dst: np.ndarray
    friend: np.ndarray
    user_ptr: np.ndarray = field(init=False, repr=False)
    _pair_index: dict[tuple[int, int], int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        self.friend = np.asarray(self.friend, dtype=bool)
        n = len(self.users)
        e = self.src.size
        if self.dst.size != e or self.friend.size != e:
            raise InputError("attention edge arrays have mismatched lengths")
        if e and (self.src.min() < 0 or self.src.max() >= n
                  or self.dst.min() < 0 or self.dst.max() >= n):
            raise InputError("attention edge endpoint out of range")
        if np.any(np.diff(self.src) < 0):
            raise InputError("attention edges must be grouped by source user")
        counts = np.bincount(self.src, minlength=n)
        self.user_ptr = np.concatenate(([0], np.cumsum(counts)))
        self._pair_index = {}
        for idx in range(e):
            key = (int(self.src[idx]), int(self.dst[idx]))
            if key in self._pair_index:
                raise InputError(f"duplicate attention edge {key}")
            self._pair_index[key] = idx
        for i in range(n):
            if (i, i) not in self._pair_index:
                raise InputError(f"user {self.users[i]!r} lacks a self edge")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    def slice_of(self, i: int) -> slice:
        return slice(int(self.user_ptr[i]), int(self.user_ptr[i + 1]))

    def edges_of(self, i: int) -> np.ndarray:
        return np.arange(self.user_ptr[i], self.user_ptr[i + 1])

    def edge_index(self, i: int, l: int) -> int:
        try:
            return self._pair_index[(i, l)]
        except KeyError:
            raise InputError(f"no attention edge ({i}, {l})") from None

    def confidences(self, a_phi: float, b_phi: float) -> np.ndarray:
        """Per-edge attention confidence: a for friend/self edges, b otherwise."""
        return np.where(self.friend, a_phi, b_phi)


def build_attention_edges(graph: FollowerGraph, neg_samples: int = 5,
                          seed: int = 0) -> AttentionEdgeSet:
    """Materialize A(i) = {i} + followees + sampled non-followees per user.

    Sampling uses one seeded generator walked in user order, so the edge set
    is a pure function of (graph, neg_samples, seed).  Users whose complement
    is smaller than ``neg_samples`` get every available non-followee.
    """
    if neg_samples < 0:
        raise InputError("neg_samples must be >= 0")
    rng = np.random.default_rng(seed)
    n = graph.n_users
    src: list[int] = []
    dst: list[int] = []
    friend: list[bool] = []
    everyone = set(range(n))
    for i in range(n):
        fol = graph.follows[i]
        targets = [i] + sorted(fol)
        flags = [True] * len(targets)
        if neg_samples:
            candidates = sorted(everyone - fol - {i})
            take = min(neg_samples, len(candidates))
            if take:
                sampled = rng.choice(np.asarray(candidates), size=take,
                                     replace=False)
                targets.extend(sorted(int(x) for x in sampled))
                flags.extend([False] * take)
        src.extend([i] * len(targets))
        dst.extend(targets)
        friend.extend(flags)
    return AttentionEdgeSet(list(graph.users), np.asarray(src),
                            np.asarray(dst), np.asarray(friend))


def write_attention_edges(edges: AttentionEdgeSet, path: str) -> None:
    """Write ``<user>\\t<source>\\t<friend|sampled>`` rows in edge order."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in range(edges.n_edges):
            kind = "friend" if edges.friend[e] else "sampled"
            fh.write(f"{edges.users[int(edges.src[e])]}\t"
                     f"{edges.users[int(edges.dst[e])]}\t{kind}\n")


def read_attention_edges(path: str, users: list[str]) -> AttentionEdgeSet:
    index = {u: i for i, u in enumerate(users)}
    src: list[int] = []
    dst: list[int] = []
    friend: list[bool] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[2] not in ("friend", "sampled"):
                raise InputError(
                    f"{path}:{lineno}: expected '<user>\\t<source>\\t"
                    f"<friend|sampled>'")
            try:
                src.append(index[parts[0]])
                dst.append(index[parts[1]])
            except KeyError as exc:
                raise InputError(
                    f"{path}:{lineno}: unknown user {exc.args[0]!r}") from None
            friend.append(parts[2] == "friend")
    return AttentionEdgeSet(list(users), np.asarray(src, dtype=np.int64),
                            np.asarray(dst, dtype=np.int64),
                            np.asarray(friend, dtype=bool))


@dataclass
class SourceAttribution:
    """Candidate sources for every observed (user, item) adoption.

    ``candidates[(i, item_id)]`` is a sorted tuple of user indices drawn from
    A(i): the attention targets that voted for the item strictly earlier.  A
    vote nobody in A(i) preceded falls back to the self edge ``(i,)``.
    """

    users: list[str]
    candidates: dict[tuple[int, str], tuple[int, ...]]

    def n_pairs(self) -> int:
        return len(self.candidates)

    def n_assignments(self) -> int:
        return sum(len(c) for c in self.candidates.values())


def attribute_sources(votes: VoteLog, edges: AttentionEdgeSet,
                      mode: str = "all") -> SourceAttribution:
    """Attribute each earliest (user, item) vote to candidate sources.

    mode='all' keeps every attention target with a strictly earlier vote on
    the item; mode='earliest' keeps only the one with the smallest timestamp
    (ties broken by user index).  Later duplicate votes by the same user are
    ignored; only the earliest counts.
    """
    if mode not in ("all", "earliest"):
        raise InputError(f"unknown attribution mode {mode!r}")
    index = {u: i for i, u in enumerate(edges.users)}
    earliest: dict[tuple[int, str], int] = {}
    for v in votes:
        if v.user not in index:
            raise InputError(f"vote by unknown user {v.user!r}")
        key = (index[v.user], v.item)
        if key not in earliest or v.t < earliest[key]:
            earliest[key] = v.t
    candidates: dict[tuple[int, str], tuple[int, ...]] = {}
    for (i, item), t in earliest.items():
        sl = edges.slice_of(i)
        cands = [int(l) for l in edges.dst[sl]
                 if (int(l), item) in earliest and earliest[(int(l), item)] < t]
        if mode == "earliest" and cands:
            cands = [min(cands, key=lambda l: (earliest[(l, item)], l))]
        if not cands:
            cands = [i]
        candidates[(i, item)] = tuple(sorted(cands))
    return SourceAttribution(list(edges.users), candidates)


def write_attribution(attr: SourceAttribution, path: str) -> None:
    """Write ``<user>\\t<item>\\t<source,source,...>`` rows, sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for (i, item) in sorted(attr.candidates,
                                key=lambda k: (attr.users[k[0]], k[1])):
            names = ",".join(attr.users[l] for l in attr.candidates[(i, item)])
            fh.write(f"{attr.users[i]}\t{item}\t{names}\n")


def read_attribution(path: str, users: list[str]) -> SourceAttribution:
    index = {u: i for i, u in enumerate(users)}
    candidates: dict[tuple[int, str], tuple[int, ...]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not parts[2]:
                raise InputError(
                    f"{path}:{lineno}: expected '<user>\\t<item>\\t<sources>'")
            try:
                i = index[parts[0]]
                cands = tuple(sorted(index[u] for u in parts[2].split(",")))
            except KeyError as exc:
                raise InputError(
                    f"{path}:{lineno}: unknown user {exc.args[0]!r}") from None
            key = (i, parts[1])
            if key in candidates:
                raise InputError(f"{path}:{lineno}: duplicate (user, item) row")
            candidates[key] = cands
    return SourceAttribution(list(users), candidates)
