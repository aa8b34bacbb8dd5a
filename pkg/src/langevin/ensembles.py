"""Weighted sample containers shared by the sampler and h-transform layers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import DomainError


@dataclass
class WeightedEnsemble:
    """Samples with nonnegative importance weights.

    ``normalization`` records whether the weights are meaningful only up to
    a constant ("self") or carry an absolute scale ("absolute").
    ``items`` may be any indexable sequence (a list of records, an array of
    states, a structured array).
    """

    items: Any
    weights: np.ndarray
    normalization: str = "self"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.items) != self.weights.size:
            raise DomainError("items and weights must have matching length")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0.0):
            raise DomainError("weights must be finite and nonnegative")
        if self.weights.size and not np.any(self.weights > 0.0):
            raise DomainError("weights must not be all zero")
        if self.normalization not in ("self", "absolute"):
            raise DomainError(f"unknown normalization {self.normalization!r}")

    def __len__(self):
        return self.weights.size

    @property
    def total_weight(self):
        return float(self.weights.sum())

    @property
    def effective_size(self):
        w = self.weights
        s = w.sum()
        return float(s * s / np.dot(w, w)) if s > 0 else 0.0

    def mean(self, values: Sequence[float]):
        """Self-normalized weighted mean of per-item values."""
        values = np.asarray(values, dtype=float)
        return float(np.dot(self.weights, values) / self.weights.sum())

    def merged(self, other: "WeightedEnsemble") -> "WeightedEnsemble":
        """Associative merge; both sides must share a normalization."""
        if self.normalization != other.normalization:
            raise DomainError("cannot merge ensembles with different normalizations")
        if isinstance(self.items, np.ndarray) and isinstance(other.items, np.ndarray):
            items = np.concatenate([self.items, other.items])
        else:
            items = list(self.items) + list(other.items)
        return WeightedEnsemble(items, np.concatenate([self.weights, other.weights]),
                                self.normalization, {**other.meta, **self.meta})
