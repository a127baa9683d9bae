"""Plain-array containers for generated depot sets and Gaussian depot distributions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class DepotSet:
    positions: np.ndarray  # (m, 2)
    score: float | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, 2)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def m(self) -> int:
        return int(self.positions.shape[0])

    def to_dict(self) -> dict:
        return {"positions": self.positions.tolist(), "score": self.score}

    @classmethod
    def from_dict(cls, d: dict) -> "DepotSet":
        return cls(np.asarray(d["positions"], dtype=np.float64), d.get("score"))


@dataclass(frozen=True, eq=False)
class DepotDistribution:
    """Gaussian over the ``2m`` pre-sigmoid depot coordinates, ``Sigma = L L^T``.

    Coordinates are ordered ``(x_1, y_1, x_2, y_2, ...)``.
    """

    mean: np.ndarray  # (2m,)
    factor: np.ndarray  # (2m, 2m) lower triangular

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64).reshape(-1))
        L = np.asarray(self.factor, dtype=np.float64)
        if L.shape != (self.dim, self.dim):
            raise ValueError("factor shape does not match mean")
        object.__setattr__(self, "factor", np.tril(L))

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def m(self) -> int:
        return self.dim // 2

    @property
    def covariance(self) -> np.ndarray:
        return self.factor @ self.factor.T

    def sample(self, k: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
        """``k`` depot sets in the unit square and the pre-sigmoid draws."""
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((k, self.dim))
        X = self.mean + z @ self.factor.T
        return (1.0 / (1.0 + np.exp(-X))).reshape(k, self.m, 2), X

    def log_prob(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        diag = np.diag(self.factor)
        if np.any(diag <= 0):
            from .errors import SingularFactor

            raise SingularFactor("Cholesky factor has a non-positive diagonal")
        import scipy.linalg

        z = scipy.linalg.solve_triangular(self.factor, (X - self.mean).T, lower=True)
        return -0.5 * (z * z).sum(0) - np.log(diag).sum() - self.m * math.log(2 * math.pi)

    def marginal(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of depot ``k``'s pre-sigmoid coordinate pair."""
        sl = slice(2 * k, 2 * k + 2)
        return self.mean[sl], self.covariance[sl, sl]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "factor": self.factor.tolist(),
                "covariance": self.covariance.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DepotDistribution":
        if "factor" in d:
            return cls(np.asarray(d["mean"]), np.asarray(d["factor"]))
        return cls(np.asarray(d["mean"]), np.linalg.cholesky(np.asarray(d["covariance"])))
