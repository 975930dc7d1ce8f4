"""Accuracy and macro-averaged F1 over arbitrary label alphabets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence


@dataclass
class ConfusionTally:
    """Per-class true-positive / false-positive / false-negative counts."""

    tp: dict[Hashable, int]
    fp: dict[Hashable, int]
    fn: dict[Hashable, int]
    total: int

    @classmethod
    def from_predictions(cls, predictions: Sequence, golds: Sequence,
                         alphabet: Sequence[Hashable]) -> "ConfusionTally":
        if len(predictions) != len(golds):
            raise ValueError(
                f"length mismatch: {len(predictions)} predictions vs {len(golds)} golds"
            )
        tp = {c: 0 for c in alphabet}
        fp = {c: 0 for c in alphabet}
        fn = {c: 0 for c in alphabet}
        for p, g in zip(predictions, golds):
            if p == g:
                tp[g] += 1
            else:
                if p in fp:
                    fp[p] += 1
                fn[g] += 1
        return cls(tp=tp, fp=fp, fn=fn, total=len(golds))

    def f1(self, label: Hashable) -> float:
        """2PR/(P+R) with the 0-convention for undefined precision/recall."""
        tp, fp, fn = self.tp[label], self.fp[label], self.fn[label]
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        if precision + recall == 0.0:
            return 0.0
        return 2.0 * precision * recall / (precision + recall)


def accuracy(predictions: Sequence, golds: Sequence) -> float:
    """Fraction of predictions equal to their gold label."""
    if len(predictions) == 0:
        raise ValueError("accuracy of an empty prediction list is undefined")
    if len(predictions) != len(golds):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs {len(golds)} golds"
        )
    return sum(p == g for p, g in zip(predictions, golds)) / len(golds)


def macro_f1(predictions: Sequence, golds: Sequence,
             alphabet: Sequence[Hashable]) -> float:
    """Unweighted mean of per-class F1 over the whole alphabet.

    A class that never appears in either predictions or golds still
    contributes an F1 of 0, so the alphabet must list exactly the classes
    the task defines.
    """
    if len(alphabet) == 0:
        raise ValueError("macro_f1 requires a nonempty class alphabet")
    if len(set(alphabet)) != len(alphabet):
        raise ValueError("class alphabet contains duplicates")
    tally = ConfusionTally.from_predictions(predictions, golds, alphabet)
    return sum(tally.f1(c) for c in alphabet) / len(alphabet)
