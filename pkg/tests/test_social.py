"""Vote logs, follower graphs, attention edge sets, and source attribution."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lactr.errors import InputError
from lactr.social import (AttentionEdgeSet, FollowerGraph, Vote, VoteLog,
                          attribute_sources, build_attention_edges,
                          read_attention_edges, read_attribution,
                          read_edges_file, read_votes_file,
                          write_attention_edges, write_attribution,
                          write_edges_file, write_votes_file)

from conftest import votes_from_tuples


class TestVoteLog:
    def test_users_and_items_sorted_unique(self):
        log = votes_from_tuples([("b", "y", 1), ("a", "x", 2), ("b", "x", 3)])
        assert log.users() == ["a", "b"]
        assert log.items() == ["x", "y"]

    def test_earliest_keeps_minimum_timestamp(self):
        log = votes_from_tuples([("a", "x", 9), ("a", "x", 4), ("a", "x", 7)])
        assert log.earliest() == {("a", "x"): 4}

    def test_restricted_drops_other_users_and_items(self):
        log = votes_from_tuples([("a", "x", 1), ("b", "x", 2), ("a", "y", 3)])
        small = log.restricted(users={"a"}, items={"x"})
        assert [(v.user, v.item, v.t) for v in small] == [("a", "x", 1)]

    def test_file_round_trip(self, tmp_path):
        log = votes_from_tuples([("a", "x", 5), ("b", "y", 1)])
        path = str(tmp_path / "votes.tsv")
        write_votes_file(log, path)
        back = read_votes_file(path)
        assert [(v.user, v.item, v.t) for v in back] == \
            [(v.user, v.item, v.t) for v in log]

    def test_malformed_field_count_reports_line(self, tmp_path):
        path = tmp_path / "votes.tsv"
        path.write_text("a\tx\t1\nbad line here\n")
        with pytest.raises(InputError, match=r":2:"):
            read_votes_file(str(path))

    def test_non_integer_timestamp_reports_line(self, tmp_path):
        path = tmp_path / "votes.tsv"
        path.write_text("a\tx\tnoon\n")
        with pytest.raises(InputError, match=r":1:"):
            read_votes_file(str(path))


class TestFollowerGraph:
    def test_from_pairs_indexes_followees(self):
        g = FollowerGraph.from_pairs([("a", "b"), ("a", "c"), ("c", "a")],
                                     ["a", "b", "c"])
        assert g.follows[0] == frozenset({1, 2})
        assert g.follows[1] == frozenset()
        assert g.follows[2] == frozenset({0})

    def test_self_loops_removed(self):
        g = FollowerGraph.from_pairs([("a", "a"), ("a", "b")], ["a", "b"])
        assert g.follows[0] == frozenset({1})

    def test_unknown_endpoints_dropped_by_default(self):
        g = FollowerGraph.from_pairs([("a", "ghost"), ("ghost", "a"),
                                      ("a", "b")], ["a", "b"])
        assert g.follows[0] == frozenset({1})

    def test_unknown_endpoints_can_error(self):
        with pytest.raises(InputError):
            FollowerGraph.from_pairs([("a", "ghost")], ["a"],
                                     unknown="error")

    def test_edges_file_round_trip(self, tmp_path):
        g = FollowerGraph.from_pairs([("a", "b"), ("b", "a"), ("b", "c")],
                                     ["a", "b", "c"])
        path = str(tmp_path / "edges.tsv")
        write_edges_file(g, path)
        g2 = FollowerGraph.from_pairs(read_edges_file(path), ["a", "b", "c"])
        assert g2.follows == g.follows


class TestBuildAttentionEdges:
    def graph(self):
        users = [f"u{i}" for i in range(8)]
        pairs = [("u0", "u2"), ("u0", "u5"), ("u1", "u0"), ("u3", "u4")]
        return FollowerGraph.from_pairs(pairs, users)

    def test_no_sampling_gives_self_plus_followees_all_friend(self):
        edges = build_attention_edges(self.graph(), neg_samples=0, seed=0)
        sl = edges.slice_of(0)
        assert edges.dst[sl].tolist() == [0, 2, 5]
        assert edges.friend[sl].all()
        assert bool(edges.friend.all())

    def test_self_edge_always_present_and_first(self):
        edges = build_attention_edges(self.graph(), neg_samples=3, seed=1)
        for i in range(edges.n_users):
            sl = edges.slice_of(i)
            assert int(edges.dst[sl.start]) == i

    def test_sampled_edges_avoid_self_and_followees(self):
        g = self.graph()
        edges = build_attention_edges(g, neg_samples=4, seed=2)
        for e in range(edges.n_edges):
            if not edges.friend[e]:
                i, l = int(edges.src[e]), int(edges.dst[e])
                assert l != i
                assert l not in g.follows[i]

    def test_sample_count_capped_by_complement(self):
        g = FollowerGraph.from_pairs([("a", "b")], ["a", "b", "c"])
        edges = build_attention_edges(g, neg_samples=99, seed=0)
        sl = edges.slice_of(0)
        # a: self + followee b + the single possible negative c
        assert sorted(edges.dst[sl].tolist()) == [0, 1, 2]

    def test_deterministic_for_fixed_seed(self):
        e1 = build_attention_edges(self.graph(), neg_samples=3, seed=7)
        e2 = build_attention_edges(self.graph(), neg_samples=3, seed=7)
        assert np.array_equal(e1.dst, e2.dst)
        assert np.array_equal(e1.friend, e2.friend)

    def test_different_seeds_change_sampling(self):
        sets = {tuple(build_attention_edges(self.graph(), 3, seed).dst.tolist())
                for seed in range(6)}
        assert len(sets) > 1

    def test_file_round_trip(self, tmp_path):
        edges = build_attention_edges(self.graph(), neg_samples=2, seed=0)
        path = str(tmp_path / "att.tsv")
        write_attention_edges(edges, path)
        back = read_attention_edges(path, edges.users)
        assert np.array_equal(back.src, edges.src)
        assert np.array_equal(back.dst, edges.dst)
        assert np.array_equal(back.friend, edges.friend)

    def test_confidences_by_edge_class(self):
        edges = build_attention_edges(self.graph(), neg_samples=2, seed=0)
        conf = edges.confidences(1.0, 0.01)
        assert np.array_equal(conf, np.where(edges.friend, 1.0, 0.01))

    def test_missing_self_edge_rejected(self):
        with pytest.raises(InputError, match="self edge"):
            AttentionEdgeSet(["a", "b"], np.array([0, 1]), np.array([1, 1]),
                             np.array([True, True]))

    def test_duplicate_edge_rejected(self):
        with pytest.raises(InputError, match="duplicate"):
            AttentionEdgeSet(["a"], np.array([0, 0]), np.array([0, 0]),
                             np.array([True, True]))


def brute_force_attribution(rows, edges, mode):
    """Independent scan over all (target, time) pairs per adoption."""
    index = {u: i for i, u in enumerate(edges.users)}
    earliest = {}
    for user, item, t in rows:
        key = (index[user], item)
        earliest[key] = min(earliest.get(key, t), t)
    out = {}
    for (i, item), t in earliest.items():
        targets = edges.dst[edges.slice_of(i)].tolist()
        cands = [l for l in targets
                 if (l, item) in earliest and earliest[(l, item)] < t]
        if mode == "earliest" and cands:
            best = min((earliest[(l, item)], l) for l in cands)
            cands = [best[1]]
        out[(i, item)] = tuple(sorted(cands)) if cands else (i,)
    return out


class TestAttribution:
    def simple_setup(self):
        users = ["alice", "bob", "carol", "dave"]
        g = FollowerGraph.from_pairs(
            [("alice", "bob"), ("alice", "carol"), ("dave", "alice")], users)
        edges = build_attention_edges(g, neg_samples=0, seed=0)
        return users, edges

    def test_earlier_target_vote_is_a_candidate(self):
        users, edges = self.simple_setup()
        votes = votes_from_tuples([("bob", "story", 5), ("alice", "story", 9)])
        attr = attribute_sources(votes, edges, "all")
        assert attr.candidates[(0, "story")] == (1,)  # bob

    def test_no_earlier_vote_falls_back_to_self(self):
        users, edges = self.simple_setup()
        votes = votes_from_tuples([("alice", "story", 1)])
        attr = attribute_sources(votes, edges, "all")
        assert attr.candidates[(0, "story")] == (0,)

    def test_simultaneous_vote_is_not_a_candidate(self):
        users, edges = self.simple_setup()
        votes = votes_from_tuples([("bob", "story", 9), ("alice", "story", 9)])
        attr = attribute_sources(votes, edges, "all")
        assert attr.candidates[(0, "story")] == (0,)

    def test_all_mode_keeps_every_earlier_target(self):
        users, edges = self.simple_setup()
        votes = votes_from_tuples([("bob", "s", 3), ("carol", "s", 5),
                                   ("alice", "s", 9)])
        attr = attribute_sources(votes, edges, "all")
        assert attr.candidates[(0, "s")] == (1, 2)

    def test_earliest_mode_keeps_only_first(self):
        users, edges = self.simple_setup()
        votes = votes_from_tuples([("bob", "s", 3), ("carol", "s", 5),
                                   ("alice", "s", 9)])
        attr = attribute_sources(votes, edges, "earliest")
        assert attr.candidates[(0, "s")] == (1,)

    def test_duplicate_votes_use_earliest_timestamp(self):
        users, edges = self.simple_setup()
        votes = votes_from_tuples([("alice", "s", 9), ("alice", "s", 2),
                                   ("bob", "s", 5)])
        attr = attribute_sources(votes, edges, "all")
        # alice's effective vote time is 2, before bob's 5
        assert attr.candidates[(0, "s")] == (0,)

    def test_unknown_voter_rejected(self):
        users, edges = self.simple_setup()
        votes = votes_from_tuples([("stranger", "s", 1)])
        with pytest.raises(InputError, match="unknown user"):
            attribute_sources(votes, edges, "all")

    def test_unknown_mode_rejected(self):
        users, edges = self.simple_setup()
        with pytest.raises(InputError):
            attribute_sources(votes_from_tuples([]), edges, "both")

    @given(st.lists(st.tuples(st.integers(0, 4),
                              st.sampled_from(["i1", "i2", "i3"]),
                              st.integers(0, 6)),
                    min_size=1, max_size=25),
           st.sampled_from(["all", "earliest"]),
           st.integers(0, 3))
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force_scan(self, int_rows, mode, graph_seed):
        users = [f"u{i}" for i in range(5)]
        rng = np.random.default_rng(graph_seed)
        pairs = [(users[a], users[b]) for a in range(5) for b in range(5)
                 if a != b and rng.random() < 0.4]
        g = FollowerGraph.from_pairs(pairs, users)
        edges = build_attention_edges(g, neg_samples=1, seed=graph_seed)
        rows = [(users[i], item, t) for i, item, t in int_rows]
        attr = attribute_sources(votes_from_tuples(rows), edges, mode)
        assert attr.candidates == brute_force_attribution(rows, edges, mode)

    def test_file_round_trip(self, tmp_path):
        users, edges = self.simple_setup()
        votes = votes_from_tuples([("bob", "s", 3), ("carol", "s", 5),
                                   ("alice", "s", 9), ("dave", "t", 1)])
        attr = attribute_sources(votes, edges, "all")
        path = str(tmp_path / "attr.tsv")
        write_attribution(attr, path)
        back = read_attribution(path, users)
        assert back.candidates == attr.candidates
