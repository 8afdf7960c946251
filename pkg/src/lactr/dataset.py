"""Prepared-dataset directory layout shared by the CLI commands.

A prepared directory holds everything training and evaluation need:

- ``vocabulary.txt``       one token per line, word-id order
- ``bow.tsv``              ``<item_id>\\t<word_id>:<count> ...``
- ``users.txt``            one user id per line, index order
- ``votes.tsv``            ``<user>\\t<item>\\t<timestamp>``
- ``edges.tsv``            ``<follower>\\t<followee>``
- ``attention_edges.tsv``  ``<user>\\t<source>\\t<friend|sampled>``
- ``attribution.tsv``      ``<user>\\t<item>\\t<source,source,...>``
- ``stats.json``           summary statistics
"""
from __future__ import annotations

import json
import os

from . import corpus as corpus_mod
from . import social
from .errors import InputError

VOCABULARY_FILE = "vocabulary.txt"
BOW_FILE = "bow.tsv"
USERS_FILE = "users.txt"
VOTES_FILE = "votes.tsv"
EDGES_FILE = "edges.tsv"
ATTENTION_FILE = "attention_edges.tsv"
ATTRIBUTION_FILE = "attribution.tsv"
STATS_FILE = "stats.json"


def _path(data_dir: str, name: str) -> str:
    path = os.path.join(data_dir, name)
    if not os.path.exists(path):
        raise InputError(f"prepared dataset is missing {name} in {data_dir}")
    return path


def load_corpus(data_dir: str) -> corpus_mod.Corpus:
    vocab = corpus_mod.read_vocabulary(_path(data_dir, VOCABULARY_FILE))
    return corpus_mod.read_bow(_path(data_dir, BOW_FILE), vocab)


def load_users(data_dir: str) -> list[str]:
    users = []
    path = _path(data_dir, USERS_FILE)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            user = raw.rstrip("\n")
            if not user:
                raise InputError(f"{path}:{lineno}: empty user id")
            users.append(user)
    if len(set(users)) != len(users):
        raise InputError(f"{path}: duplicate user ids")
    return users


def load_votes(data_dir: str) -> social.VoteLog:
    return social.read_votes_file(_path(data_dir, VOTES_FILE))


def load_graph(data_dir: str, users: list[str]) -> social.FollowerGraph:
    pairs = social.read_edges_file(_path(data_dir, EDGES_FILE))
    return social.FollowerGraph.from_pairs(pairs, users)


def load_attention(data_dir: str, users: list[str]) -> social.AttentionEdgeSet:
    return social.read_attention_edges(_path(data_dir, ATTENTION_FILE), users)


def load_attribution(data_dir: str,
                     users: list[str]) -> social.SourceAttribution:
    return social.read_attribution(_path(data_dir, ATTRIBUTION_FILE), users)


def save_prepared(data_dir: str, corpus: corpus_mod.Corpus,
                  users: list[str], graph: social.FollowerGraph,
                  votes: social.VoteLog, edges: social.AttentionEdgeSet,
                  attribution: social.SourceAttribution,
                  stats: dict) -> None:
    os.makedirs(data_dir, exist_ok=True)
    corpus_mod.write_vocabulary(corpus.vocabulary,
                                os.path.join(data_dir, VOCABULARY_FILE))
    corpus_mod.write_bow(corpus, os.path.join(data_dir, BOW_FILE))
    with open(os.path.join(data_dir, USERS_FILE), "w",
              encoding="utf-8") as fh:
        for user in users:
            fh.write(user + "\n")
    social.write_votes_file(votes, os.path.join(data_dir, VOTES_FILE))
    social.write_edges_file(graph, os.path.join(data_dir, EDGES_FILE))
    social.write_attention_edges(edges,
                                 os.path.join(data_dir, ATTENTION_FILE))
    social.write_attribution(attribution,
                             os.path.join(data_dir, ATTRIBUTION_FILE))
    with open(os.path.join(data_dir, STATS_FILE), "w",
              encoding="utf-8") as fh:
        json.dump(stats, fh, sort_keys=True, indent=1)
        fh.write("\n")


def basic_stats(corpus: corpus_mod.Corpus, users: list[str],
                votes: social.VoteLog, graph: social.FollowerGraph,
                edges: social.AttentionEdgeSet) -> dict:
    """Shared summary block: counts plus the positive-rate statistic (the
    fraction of the user-item grid covered by distinct votes)."""
    pairs = {(v.user, v.item) for v in votes}
    cells = len(users) * corpus.n_items
    return {
        "n_users": len(users),
        "n_items": corpus.n_items,
        "vocab_size": corpus.vocab_size,
        "n_votes": len(votes),
        "n_positive_pairs": len(pairs),
        "n_follow_edges": sum(len(f) for f in graph.follows),
        "n_attention_edges": edges.n_edges,
        "positive_rate": (len(pairs) / cells) if cells else 0.0,
    }
