"""Item text corpus: tf-idf vocabulary selection, bag-of-words, activity filters.

Consumes pre-tokenized text (one item per line, whitespace-separated tokens);
stemming and stop-wording are upstream concerns.  Word ids are dense 0..M-1
in tf-idf rank order, so the vocabulary file doubles as the id map.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .social import VoteLog


@dataclass
class Vocabulary:
    """Ordered token inventory; position in ``words`` is the word id."""

    words: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.words:
            raise InputError("vocabulary must contain at least one token")
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise InputError("vocabulary contains duplicate tokens")
        if any("\n" in w or "\t" in w or not w for w in self.words):
            raise InputError("vocabulary tokens must be non-empty and "
                             "whitespace-free")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, token: str) -> bool:
        return token in self.index


@dataclass
class Document:
    """Bag of words for one item: sorted unique word ids with positive counts."""

    item_id: str
    word_ids: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        self.word_ids = np.asarray(self.word_ids, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.word_ids.shape != self.counts.shape or self.word_ids.ndim != 1:
            raise InputError(
                f"document {self.item_id!r}: ids and counts must be aligned "
                f"1-d arrays")
        if self.word_ids.size:
            if self.word_ids[0] < 0:
                raise InputError(f"document {self.item_id!r}: negative word id")
            if np.any(np.diff(self.word_ids) <= 0):
                raise InputError(
                    f"document {self.item_id!r}: word ids must be sorted "
                    f"and unique")
            if np.any(self.counts < 1):
                raise InputError(f"document {self.item_id!r}: counts must be "
                                 f">= 1")

    @property
    def length(self) -> int:
        """Total token occurrences."""
        return int(self.counts.sum())


@dataclass
class Corpus:
    """A vocabulary plus item documents in a fixed order.

    The document order defines item indices used by the model; keep it stable
    across save/load.  An empty document list is allowed (activity filtering
    may eliminate everything); operations that need data check for themselves.
    """

    vocabulary: Vocabulary
    documents: list[Document]
    item_index: dict[str, int] = field(init=False, repr=False)
    _packed: tuple | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        self.item_index = {d.item_id: j for j, d in enumerate(self.documents)}
        if len(self.item_index) != len(self.documents):
            raise InputError("duplicate item ids in corpus")
        m = len(self.vocabulary)
        for d in self.documents:
            if d.word_ids.size and d.word_ids[-1] >= m:
                raise InputError(
                    f"document {d.item_id!r}: word id {int(d.word_ids[-1])} "
                    f"outside vocabulary of size {m}")

    @property
    def n_items(self) -> int:
        return len(self.documents)

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    @property
    def item_ids(self) -> list[str]:
        return [d.item_id for d in self.documents]

    def packed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Flat (doc_ptr, doc_index, word_ids, counts) view over all documents.

        ``doc_ptr`` has length D+1 and delimits each document's slice of the
        concatenated ``word_ids``/``counts``; ``doc_index`` repeats the document
        index once per distinct word for vectorized gathers.
        """
        if self._packed is None:
            sizes = np.asarray([d.word_ids.size for d in self.documents],
                               dtype=np.int64)
            doc_ptr = np.concatenate(([0], np.cumsum(sizes)))
            if self.documents:
                word_ids = np.concatenate([d.word_ids for d in self.documents])
                counts = np.concatenate([d.counts for d in self.documents])
            else:
                word_ids = np.empty(0, dtype=np.int64)
                counts = np.empty(0, dtype=np.int64)
            doc_index = np.repeat(np.arange(len(self.documents)), sizes)
            self._packed = (doc_ptr, doc_index, word_ids, counts)
        return self._packed


def build_vocabulary(raw_docs: Sequence[Sequence[str]], top_m: int) -> Vocabulary:
    """Select the ``top_m`` tokens by corpus tf-idf.

    Score is total term frequency times log(D / document frequency); ties are
    broken lexicographically so the result is deterministic.  Word ids follow
    the ranking: id 0 is the highest-scoring token.
    """
    if top_m <= 0:
        raise InputError("top_m must be positive")
    if not raw_docs:
        raise InputError("empty corpus")
    tf: Counter = Counter()
    df: Counter = Counter()
    for toks in raw_docs:
        tf.update(toks)
        df.update(set(toks))
    if not tf:
        raise InputError("corpus contains no tokens")
    d = len(raw_docs)
    ranked = sorted(tf, key=lambda t: (-tf[t] * math.log(d / df[t]), t))
    return Vocabulary(ranked[:top_m])


def corpus_from_tokens(items: Sequence[tuple[str, Sequence[str]]],
                       vocab: Vocabulary) -> Corpus:
    """Bag-of-words encode token lists, silently dropping out-of-vocabulary
    tokens."""
    docs = []
    for item_id, toks in items:
        counter = Counter(vocab.index[t] for t in toks if t in vocab.index)
        ids = np.asarray(sorted(counter), dtype=np.int64)
        counts = np.asarray([counter[w] for w in sorted(counter)],
                            dtype=np.int64)
        docs.append(Document(item_id, ids, counts))
    return Corpus(vocab, docs)


def filter_activity(corpus: Corpus, votes: VoteLog, min_votes: int = 10,
                    min_words: int = 10) -> tuple[Corpus, VoteLog]:
    """Drop inactive users and short items, in one pass.

    Users need at least ``min_votes`` votes in the input log; items need
    strictly more than ``min_words`` token occurrences.  Votes on dropped
    items or by dropped users disappear with them.  Document order is
    preserved.  The result may be empty; thresholds of zero keep every user
    and every non-empty-or-not item alike.
    """
    if min_votes < 0 or min_words < 0:
        raise InputError("filter thresholds must be >= 0")
    by_user = votes.counts_by_user()
    keep_users = {u for u, c in by_user.items() if c >= min_votes}
    kept_docs = [d for d in corpus.documents if d.length > min_words]
    filtered = Corpus(corpus.vocabulary, kept_docs)
    keep_items = set(filtered.item_index)
    kept_votes = votes.restricted(keep_users, keep_items)
    return filtered, kept_votes


def read_items_file(path: str) -> list[tuple[str, list[str]]]:
    """Parse ``<item_id>\\t<token> <token> ...`` lines."""
    items: list[tuple[str, list[str]]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise InputError(
                    f"{path}:{lineno}: expected '<item_id>\\t<tokens>'")
            item_id, text = line.split("\t", 1)
            if not item_id:
                raise InputError(f"{path}:{lineno}: empty item id")
            items.append((item_id, text.split()))
    return items


def write_items_file(items: Iterable[tuple[str, Sequence[str]]],
                     path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item_id, toks in items:
            fh.write(f"{item_id}\t{' '.join(toks)}\n")


def read_vocabulary(path: str) -> Vocabulary:
    """One token per line, in word-id order."""
    words: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            word = raw.rstrip("\n")
            if not word:
                raise InputError(f"{path}:{lineno}: empty vocabulary line")
            words.append(word)
    return Vocabulary(words)


def write_vocabulary(vocab: Vocabulary, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for w in vocab.words:
            fh.write(w + "\n")


def read_bow(path: str, vocab: Vocabulary) -> Corpus:
    """Parse ``<item_id>\\t<word_id>:<count> ...`` lines against a vocabulary."""
    docs: list[Document] = []
    m = len(vocab)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise InputError(
                    f"{path}:{lineno}: expected '<item_id>\\t<id>:<count> ...'")
            item_id, rest = line.split("\t", 1)
            pairs: dict[int, int] = {}
            for tok in rest.split():
                wid_s, _, cnt_s = tok.partition(":")
                try:
                    wid, cnt = int(wid_s), int(cnt_s)
                except ValueError:
                    raise InputError(
                        f"{path}:{lineno}: malformed pair {tok!r}") from None
                if not 0 <= wid < m:
                    raise InputError(
                        f"{path}:{lineno}: word id {wid} outside vocabulary "
                        f"of size {m}")
                if cnt < 1:
                    raise InputError(f"{path}:{lineno}: count must be >= 1")
                if wid in pairs:
                    raise InputError(
                        f"{path}:{lineno}: duplicate word id {wid}")
                pairs[wid] = cnt
            ids = np.asarray(sorted(pairs), dtype=np.int64)
            counts = np.asarray([pairs[w] for w in sorted(pairs)],
                                dtype=np.int64)
            docs.append(Document(item_id, ids, counts))
    return Corpus(vocab, docs)


def write_bow(corpus: Corpus, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in corpus.documents:
            pairs = " ".join(f"{int(w)}:{int(c)}"
                             for w, c in zip(d.word_ids, d.counts))
            fh.write(f"{d.item_id}\t{pairs}\n")
