"""Signed empirical measures: weighted atoms that can be integrated against any test function."""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SignedEmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.shape[0]:
            raise ValueError(f"{pts.shape[0]} atoms but {w.shape[0]} weights")
        if not np.all(np.isfinite(w)):
            raise ValueError("atom weights must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.weights.shape[0]

    def evaluate(self, phi):
        """``sum_j w_j phi(x_j)`` with ``phi`` vectorised over rows of shape ``(n, d)``."""
        if len(self) == 0:
            return 0.0
        vals = np.asarray(phi(self.points), dtype=float).reshape(len(self))
        return math.fsum(self.weights * vals)

    def total_weight(self):
        """Exactly rounded sum of the weights."""
        return math.fsum(self.weights)

    def scaled(self, c):
        return SignedEmpiricalMeasure(self.points, self.weights * c)

    @classmethod
    def empty(cls, dim):
        return cls(np.empty((0, dim)), np.empty(0))

    @classmethod
    def concatenate(cls, measures, scale=1.0):
        measures = list(measures)
        if not measures:
            raise ValueError("nothing to concatenate")
        pts = np.concatenate([m.points for m in measures])
        w = np.concatenate([m.weights for m in measures]) * scale
        return cls(pts, w)

    @classmethod
    def average(cls, measures):
        """Measure of the replicate average ``(1/M) sum_i pi_hat^i``."""
        measures = list(measures)
        return cls.concatenate(measures, 1.0 / len(measures))
