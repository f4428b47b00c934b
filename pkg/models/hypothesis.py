from enum import Enum
from typing import Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class LossKind(str, Enum):
    square = "square"
    zero_one = "zero-one"
    rescaled_nn = "rescaled-nn"
    rescaled_square = "rescaled-square"


class LinearHypothesis(BaseModel):
    """Parameter vector theta; predicts x'theta."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    theta: np.ndarray = Field(..., description="Fitted coefficients, length d")

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.atleast_2d(features) @ self.theta


class MeanHypothesis(BaseModel):
    """Scalar location estimate theta-hat."""

    model_config = ConfigDict(frozen=True)

    theta: float = Field(..., description="Fitted location")

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(features).shape[0], self.theta)


class LdaHypothesis(BaseModel):
    """Univariate mean pair. Classifies z as 1 iff (z - mu1)^2 < (z - mu0)^2."""

    model_config = ConfigDict(frozen=True)

    mu1: float = Field(..., description="Class-1 mean estimate")
    mu0: float = Field(..., description="Class-0 mean estimate")

    def predict(self, features: np.ndarray) -> np.ndarray:
        z = np.asarray(features, dtype=float).reshape(-1)
        # exact ties go to class 0
        return ((z - self.mu1) ** 2 < (z - self.mu0) ** 2).astype(np.int64)


class NearestNeighborHypothesis(BaseModel):
    """Reference set for 1-NN classification; distance ties go to the lowest reference index."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray = Field(..., description="m x d reference features")
    labels: np.ndarray = Field(..., description="length-m reference labels")

    def neighbor_index(self, features: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(np.asarray(features, dtype=float))
        if self.points.shape[1] == 1:
            return _nearest_1d(self.points[:, 0], q[:, 0])
        dist = ((q[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
        # argmin returns the first minimum
        return np.argmin(dist, axis=1)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.labels[self.neighbor_index(features)].astype(np.int64)


def _nearest_1d(ref: np.ndarray, q: np.ndarray) -> np.ndarray:
    order = np.argsort(ref, kind="stable")
    srt = ref[order]
    pos = np.searchsorted(srt, q)
    left = np.clip(pos - 1, 0, len(srt) - 1)
    right = np.clip(pos, 0, len(srt) - 1)
    dl = np.abs(q - srt[left])
    dr = np.abs(srt[right] - q)
    # equal distances: pick the lower original index; duplicates in ref resolve through
    # the leftmost occurrence of the value
    li = _first_index_of(ref, srt[left])
    ri = _first_index_of(ref, srt[right])
    pick_left = (dl < dr) | ((dl == dr) & (li <= ri))
    return np.where(pick_left, li, ri)


def _first_index_of(ref: np.ndarray, values: np.ndarray) -> np.ndarray:
    uniq, first = np.unique(ref, return_index=True)
    return first[np.searchsorted(uniq, values)]


Hypothesis = Union[LinearHypothesis, MeanHypothesis, LdaHypothesis, NearestNeighborHypothesis]
