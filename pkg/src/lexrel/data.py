"""Embedding ingestion, pair-file I/O, feature encoding, and splitting.

File formats:

* embeddings: one entry per line, ``word v_1 ... v_D`` space-separated
  (GloVe text convention); the first line fixes the dimension D.
* pairs: UTF-8 TSV, ``x<TAB>y<TAB>label``; lines starting with ``#`` and
  blank lines are ignored.

The lexical split partitions the *vocabulary* (not the pairs) into a
train lot and a test lot; a pair survives only if both of its words fall
in the same lot, so the two sides end up with disjoint vocabularies and
mixed pairs are discarded.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import EmptySplitError, FormatError, OutOfVocabularyError

log = logging.getLogger(__name__)

# Canonical relation tags used by the shipped datasets; synthetic datasets
# may declare any alphabet they like.
RELATION_LABELS = ("cohyponym", "hypernym", "meronym", "random", "synonym")


@dataclass(frozen=True)
class WordPair:
    x: str
    y: str
    label: str

    def __post_init__(self) -> None:
        if not self.x or not self.y or not self.label:
            raise ValueError("pair fields must be nonempty")
        if self.x == self.y:
            raise ValueError(f"pair words must differ, got {self.x!r} twice")


class EmbeddingTable:
    """Word -> fixed-dimension vector map.

    Missing words are reported as ``None`` from :meth:`get` (never a zero
    vector). ``n_duplicates`` counts input lines dropped because their
    word was already present.
    """

    def __init__(self, dimension: int) -> None:
        if dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        self.dimension = dimension
        self._vectors: dict[str, np.ndarray] = {}
        self.n_duplicates = 0

    def add(self, word: str, vector: np.ndarray) -> None:
        if vector.shape != (self.dimension,):
            raise ValueError(f"vector for {word!r} has shape {vector.shape}, expected ({self.dimension},)")
        if word in self._vectors:
            self.n_duplicates += 1
            return
        self._vectors[word] = vector

    def get(self, word: str) -> np.ndarray | None:
        return self._vectors.get(word)

    def __contains__(self, word: str) -> bool:
        return word in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def words(self) -> Iterable[str]:
        return self._vectors.keys()


def _open_text(source: str | Path | TextIO) -> tuple[TextIO, bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8"), True
    return source, False


def load_embeddings(source: str | Path | TextIO) -> EmbeddingTable:
    """Parse a GloVe-style text stream into an :class:`EmbeddingTable`.

    The first line fixes the dimension; later lines with a different
    field count raise :class:`FormatError` naming the line. Duplicate
    words keep the first occurrence and bump the table's duplicate
    counter.
    """
    fh, owned = _open_text(source)
    table: EmbeddingTable | None = None
    try:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word, fields = parts[0], parts[1:]
            if table is None:
                if not fields:
                    raise FormatError("embedding line has no vector components", lineno)
                table = EmbeddingTable(len(fields))
            elif len(fields) != table.dimension:
                raise FormatError(
                    f"expected {table.dimension} vector components, found {len(fields)}", lineno,
                )
            try:
                vector = np.array([float(v) for v in fields])
            except ValueError as exc:
                raise FormatError(f"non-numeric vector component ({exc})", lineno) from None
            table.add(word, vector)
    finally:
        if owned:
            fh.close()
    if table is None:
        raise FormatError("embedding stream is empty")
    if table.n_duplicates:
        log.warning("embedding table dropped %d duplicate entries", table.n_duplicates)
    return table


def encode_pair(table: EmbeddingTable, pair: WordPair) -> np.ndarray:
    """Concatenated [x-vector, y-vector], length 2 * dimension, no scaling."""
    xv = table.get(pair.x)
    if xv is None:
        raise OutOfVocabularyError(pair.x)
    yv = table.get(pair.y)
    if yv is None:
        raise OutOfVocabularyError(pair.y)
    return np.concatenate([xv, yv])


def encode_pairs(table: EmbeddingTable, pairs: list[WordPair]) -> np.ndarray:
    """Feature matrix (n_pairs, 2 * dimension) in input order."""
    if not pairs:
        return np.zeros((0, 2 * table.dimension))
    return np.stack([encode_pair(table, p) for p in pairs])


def filter_by_vocabulary(pairs: list[WordPair], table: EmbeddingTable) -> tuple[list[WordPair], int]:
    """Drop pairs with a word missing from the table; returns (kept, n_dropped)."""
    kept = [p for p in pairs if p.x in table and p.y in table]
    return kept, len(pairs) - len(kept)


def load_pairs(source: str | Path | TextIO) -> list[WordPair]:
    fh, owned = _open_text(source)
    pairs: list[WordPair] = []
    try:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            columns = line.split("\t")
            if len(columns) != 3:
                raise FormatError(f"expected 3 tab-separated columns, found {len(columns)}", lineno)
            try:
                pairs.append(WordPair(*columns))
            except ValueError as exc:
                raise FormatError(str(exc), lineno) from None
    finally:
        if owned:
            fh.close()
    return pairs


def save_pairs(pairs: Iterable[WordPair], sink: str | Path | TextIO) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            save_pairs(pairs, fh)
        return
    for p in pairs:
        sink.write(f"{p.x}\t{p.y}\t{p.label}\n")


def pairs_sha256(pairs: Iterable[WordPair]) -> str:
    """Content hash of a pair sequence in its serialized TSV form."""
    buf = io.StringIO()
    save_pairs(pairs, buf)
    return hashlib.sha256(buf.getvalue().encode("utf-8")).hexdigest()


def vocabulary(pairs: Iterable[WordPair]) -> set[str]:
    vocab: set[str] = set()
    for p in pairs:
        vocab.add(p.x)
        vocab.add(p.y)
    return vocab


@dataclass
class LexicalSplit:
    train_side: list[WordPair]
    test: list[WordPair]
    discarded: int


def lexical_split(pairs: list[WordPair], test_vocab_fraction: float = 0.4,
                  seed: int = 0) -> LexicalSplit:
    """Partition pairs so train and test vocabularies are disjoint.

    The pair vocabulary is shuffled deterministically and a
    ``test_vocab_fraction`` share of it becomes the test lot. A pair goes
    to the train side iff both words are train-lot, to test iff both are
    test-lot, and is discarded otherwise.
    """
    if not 0 < test_vocab_fraction < 1:
        raise ValueError(f"test_vocab_fraction must be in (0, 1), got {test_vocab_fraction}")
    if not pairs:
        raise EmptySplitError("cannot split an empty pair list")
    vocab = sorted(vocabulary(pairs))
    rng = np.random.default_rng(seed)
    shuffled = [vocab[i] for i in rng.permutation(len(vocab))]
    n_test = int(round(test_vocab_fraction * len(vocab)))
    n_test = min(max(n_test, 1), len(vocab) - 1)
    test_lot = set(shuffled[:n_test])

    train_side, test, discarded = [], [], 0
    for p in pairs:
        x_test, y_test = p.x in test_lot, p.y in test_lot
        if x_test and y_test:
            test.append(p)
        elif not x_test and not y_test:
            train_side.append(p)
        else:
            discarded += 1
    if not train_side and not test:
        raise EmptySplitError(
            f"every pair was discarded as vocabulary-mixed ({discarded} pairs)"
        )
    return LexicalSplit(train_side=train_side, test=test, discarded=discarded)


@dataclass
class SplitBundle:
    """The four parts of one task setup.

    ``unlabeled`` pairs still carry their gold labels for simulation
    audits (e.g. pseudo-label noise rates); trainers must only ever see
    their word features.
    """

    train: list[WordPair] = field(default_factory=list)
    validation: list[WordPair] = field(default_factory=list)
    unlabeled: list[WordPair] = field(default_factory=list)
    test: list[WordPair] = field(default_factory=list)

    def with_test(self, test: list[WordPair]) -> "SplitBundle":
        return replace(self, test=list(test))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def partition_train(train_side: list[WordPair], unlabeled_fraction: float = 0.6,
                    validation_fraction: float = 0.3, seed: int = 0,
                    stratified: bool = True) -> SplitBundle:
    """Split the train side into labeled / validation / unlabeled parts.

    ``unlabeled_fraction`` of the pairs become the unlabeled pool; of the
    remainder, ``validation_fraction`` goes to validation and the rest is
    the labeled training set (defaults: 60 / 12 / 28 per 100). With
    ``stratified`` the ratios are applied per relation label, which
    requires at least 3 pairs of every class.
    """
    for name, frac in (("unlabeled_fraction", unlabeled_fraction),
                       ("validation_fraction", validation_fraction)):
        if not 0 < frac < 1:
            raise ValueError(f"{name} must be in (0, 1), got {frac}")
    if not train_side:
        raise ValueError("cannot partition an empty train side")

    if stratified:
        by_label: dict[str, list[WordPair]] = {}
        for p in train_side:
            by_label.setdefault(p.label, []).append(p)
        starved = sorted(lbl for lbl, ps in by_label.items() if len(ps) < 3)
        if starved:
            raise ValueError(
                f"stratified partition needs >= 3 pairs per class; too few for: {', '.join(starved)}"
            )
        groups = [by_label[lbl] for lbl in sorted(by_label)]
    else:
        groups = [list(train_side)]

    rng = np.random.default_rng(seed)
    bundle = SplitBundle()
    for group in groups:
        order = rng.permutation(len(group))
        shuffled = [group[i] for i in order]
        n_u = _round_half_up(unlabeled_fraction * len(group))
        rest = len(group) - n_u
        n_v = _round_half_up(validation_fraction * rest)
        bundle.unlabeled.extend(shuffled[:n_u])
        bundle.validation.extend(shuffled[n_u:n_u + n_v])
        bundle.train.extend(shuffled[n_u + n_v:])
    return bundle


def write_split_manifest(path: str | Path, bundle: SplitBundle, *, seed: int,
                         test_vocab_fraction: float, unlabeled_fraction: float,
                         validation_fraction: float, discarded: int = 0,
                         dropped_oov: int = 0) -> None:
    """Record seed, fractions, part sizes, and content hashes of a split."""
    manifest = {
        "version": 1,
        "seed": seed,
        "test_vocab_fraction": test_vocab_fraction,
        "unlabeled_fraction": unlabeled_fraction,
        "validation_fraction": validation_fraction,
        "discarded_mixed": discarded,
        "dropped_oov": dropped_oov,
        "counts": {
            "train": len(bundle.train),
            "validation": len(bundle.validation),
            "unlabeled": len(bundle.unlabeled),
            "test": len(bundle.test),
        },
        "sha256": {
            "train": pairs_sha256(bundle.train),
            "validation": pairs_sha256(bundle.validation),
            "unlabeled": pairs_sha256(bundle.unlabeled),
            "test": pairs_sha256(bundle.test),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_split_manifest(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
