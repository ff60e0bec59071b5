"""Measurement-count containers.

Outcomes are integers with site 1 as the lowest-order bit.  Text forms write
site 1 first, so ``"0101"`` is outcome ``0b1010``.
"""

from __future__ import annotations

import json
from collections import Counter
from typing import Mapping, Optional, Sequence

import numpy as np

__all__ = ["BitstringDistribution", "bits_to_str", "str_to_bits", "window_indices"]

BIT_ORDER = "site1-lsb"


def bits_to_str(outcome: int, n: int) -> str:
    return "".join(str((outcome >> j) & 1) for j in range(n))


def str_to_bits(s: str) -> int:
    return sum(int(c) << j for j, c in enumerate(s))


def window_indices(outcomes: np.ndarray, window: Sequence[int]) -> np.ndarray:
    """Window-local index of each outcome; window position ``p`` becomes bit ``p``."""
    outcomes = np.asarray(outcomes, dtype=np.uint64)
    idx = np.zeros(outcomes.shape, dtype=np.int64)
    for p, site in enumerate(window):
        idx |= (((outcomes >> np.uint64(site - 1)) & np.uint64(1)).astype(np.int64) << p)
    return idx


class BitstringDistribution:
    """Outcome counts over ``n_qubits`` bits.

    Stored as two aligned arrays (unique outcomes, counts).  ``probs`` may be
    given instead of counts for exact distributions; then ``shots`` is 0.
    """

    def __init__(self, n_qubits: int, outcomes, counts=None, probs=None):
        self.n_qubits = int(n_qubits)
        if self.n_qubits > 63:
            raise ValueError("at most 63 qubits are supported")
        outcomes = np.asarray(outcomes, dtype=np.uint64).ravel()
        if (counts is None) == (probs is None):
            raise ValueError("give exactly one of counts or probs")
        if counts is not None:
            weights = np.asarray(counts, dtype=np.int64).ravel()
            if np.any(weights < 0):
                raise ValueError("counts must be non-negative")
        else:
            weights = np.asarray(probs, dtype=float).ravel()
        if weights.shape != outcomes.shape:
            raise ValueError("outcomes and weights differ in length")
        order = np.argsort(outcomes, kind="stable")
        outcomes, weights = outcomes[order], weights[order]
        uniq, start = np.unique(outcomes, return_index=True)
        self.outcomes = uniq
        self.weights = np.add.reduceat(weights, start) if len(weights) else weights
        self.exact = probs is not None
        self.bit_order = BIT_ORDER

    @classmethod
    def from_samples(cls, n_qubits: int, samples) -> "BitstringDistribution":
        samples = np.asarray(samples, dtype=np.uint64)
        uniq, counts = np.unique(samples, return_counts=True)
        return cls(n_qubits, uniq, counts=counts)

    @classmethod
    def from_counts_dict(cls, n_qubits: int, counts: Mapping) -> "BitstringDistribution":
        keys = [str_to_bits(k) if isinstance(k, str) else int(k) for k in counts]
        return cls(n_qubits, keys, counts=list(counts.values()))

    @classmethod
    def from_probabilities(cls, probs: np.ndarray, cutoff: float = 0.0) -> "BitstringDistribution":
        probs = np.asarray(probs, dtype=float)
        n = int(round(np.log2(len(probs))))
        keep = np.flatnonzero(probs > cutoff)
        return cls(n, keep, probs=probs[keep])

    @property
    def shots(self) -> int:
        return 0 if self.exact else int(self.weights.sum())

    def probabilities(self) -> np.ndarray:
        w = self.weights.astype(float)
        return w / w.sum()

    def to_dict(self) -> dict:
        return {bits_to_str(int(o), self.n_qubits): (float(w) if self.exact else int(w))
                for o, w in zip(self.outcomes, self.weights)}

    def dense(self) -> np.ndarray:
        if self.n_qubits > 26:
            raise ValueError("dense vector too large")
        out = np.zeros(1 << self.n_qubits)
        out[self.outcomes.astype(np.int64)] = self.probabilities()
        return out

    def marginal(self, window: Sequence[int], weights=None) -> np.ndarray:
        """Normalized marginal over ``window`` (1-based sites) as a dense vector."""
        w = self.weights if weights is None else weights
        idx = window_indices(self.outcomes, window)
        out = np.bincount(idx, weights=np.asarray(w, dtype=float), minlength=1 << len(window))
        total = out.sum()
        return out / total if total else out

    def expectation_z(self) -> np.ndarray:
        """Per-site ``<Z>`` of the (normalized) distribution."""
        p = self.probabilities()
        out = np.empty(self.n_qubits)
        for j in range(self.n_qubits):
            bit = (self.outcomes >> np.uint64(j)) & np.uint64(1)
            out[j] = np.sum(p * (1.0 - 2.0 * bit.astype(float)))
        return out

    def resample(self, rng: np.random.Generator) -> np.ndarray:
        """Counts of one bootstrap resample (same shot number, with replacement)."""
        if self.exact:
            raise ValueError("cannot bootstrap an exact distribution")
        return rng.multinomial(self.shots, self.probabilities())

    def merged(self, other: "BitstringDistribution") -> "BitstringDistribution":
        if other.n_qubits != self.n_qubits or other.exact or self.exact:
            raise ValueError("can only merge sampled distributions of equal width")
        return BitstringDistribution(self.n_qubits,
                                     np.concatenate([self.outcomes, other.outcomes]),
                                     counts=np.concatenate([self.weights, other.weights]))

    def to_json(self) -> str:
        return json.dumps({"n_qubits": self.n_qubits, "bit_order": self.bit_order,
                           "shots": self.shots, "exact": self.exact, "counts": self.to_dict()},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BitstringDistribution":
        data = json.loads(text)
        if data.get("bit_order", BIT_ORDER) != BIT_ORDER:
            raise ValueError(f"unsupported bit order {data['bit_order']!r}")
        keys = [str_to_bits(k) for k in data["counts"]]
        vals = list(data["counts"].values())
        if data.get("exact"):
            return cls(data["n_qubits"], keys, probs=vals)
        return cls(data["n_qubits"], keys, counts=vals)

    def __eq__(self, other) -> bool:
        return (isinstance(other, BitstringDistribution) and self.n_qubits == other.n_qubits
                and self.exact == other.exact and np.array_equal(self.outcomes, other.outcomes)
                and np.array_equal(self.weights, other.weights))

    def __repr__(self) -> str:
        kind = "exact" if self.exact else f"shots={self.shots}"
        return f"BitstringDistribution(n_qubits={self.n_qubits}, {kind}, support={len(self.outcomes)})"
