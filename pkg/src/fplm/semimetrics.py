"""Curve semi-metrics: derivative L2 distances and FPCA-score distances.

A semi-metric spec picks one of two families:

* ``deriv:q``: L2 distance between q-th derivatives of the B-spline
  representations of the curves (q = 0 degenerates to a plain smoothed
  L2 distance, allowed for testing).
* ``fpca:K``: Euclidean distance between the first K functional
  principal component scores, each weighted by the squared norm of its
  eigenfunction (1 under the orthonormal basis; the factor is kept
  anyway).

Training state (spline knots, FPCA basis) is frozen so that new curves
are measured against the training sample in the training basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .functional import (
    FpcaResult,
    FunctionalSample,
    derivative,
    fit_bsplines,
    fpca,
)

__all__ = [
    "SemiMetricSpec",
    "DistanceMatrix",
    "TrainedSemiMetric",
    "train_semimetric",
    "distance_matrix",
    "distances_to",
]

_KINDS = ("deriv", "fpca")


@dataclass(frozen=True)
class SemiMetricSpec:
    """Declarative choice of curve distance.

    ``kind`` is ``"deriv"`` (order ``q`` derivative L2) or ``"fpca"``
    (first ``n_components`` score distance). Spline settings apply to
    the derivative kind only.
    """

    kind: str = "deriv"
    q: int = 2
    n_components: int = 3
    spline_order: int = 4
    n_interior_knots: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"semimetric kind must be one of {_KINDS}")
        if self.kind == "deriv" and self.q < 0:
            raise ValueError("derivative order q must be >= 0")
        if self.kind == "fpca" and self.n_components < 1:
            raise ValueError("n_components must be >= 1")

    @classmethod
    def derivative(cls, q: int = 2, spline_order: int = 4,
                   n_interior_knots: int | None = None) -> "SemiMetricSpec":
        return cls(kind="deriv", q=q, spline_order=spline_order,
                   n_interior_knots=n_interior_knots)

    @classmethod
    def fpca_scores(cls, n_components: int = 3) -> "SemiMetricSpec":
        return cls(kind="fpca", n_components=n_components)

    @classmethod
    def parse(cls, token: str) -> "SemiMetricSpec":
        """Parse CLI tokens of the form ``deriv:2`` or ``fpca:3``."""
        parts = token.strip().lower().split(":")
        if len(parts) != 2 or parts[0] not in _KINDS:
            raise ValueError(
                f"cannot parse semimetric token {token!r}; expected deriv:<q> or fpca:<K>"
            )
        try:
            num = int(parts[1])
        except ValueError:
            raise ValueError(f"semimetric parameter in {token!r} must be an integer")
        if parts[0] == "deriv":
            return cls.derivative(q=num)
        return cls.fpca_scores(n_components=num)

    def token(self) -> str:
        if self.kind == "deriv":
            return f"deriv:{self.q}"
        return f"fpca:{self.n_components}"


@dataclass(frozen=True)
class DistanceMatrix:
    """Pairwise curve distances; symmetric, nonnegative, zero diagonal."""

    values: np.ndarray
    spec: SemiMetricSpec

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.array_equal(v, v.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diag(v) != 0):
            raise ValueError("distance matrix must have a zero diagonal")
        if np.any(v < 0):
            raise ValueError("distances must be nonnegative")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _pairwise_from_features(U: np.ndarray) -> np.ndarray:
    """Euclidean distances between feature rows, exactly symmetric."""
    sq = np.einsum("ij,ij->i", U, U)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (U @ U.T)
    d2 = np.maximum(d2, 0.0)
    d2 = (d2 + d2.T) / 2.0
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def _cross_from_features(U_new: np.ndarray, U_train: np.ndarray) -> np.ndarray:
    sq_new = np.einsum("ij,ij->i", U_new, U_new)
    sq_tr = np.einsum("ij,ij->i", U_train, U_train)
    d2 = sq_new[:, None] + sq_tr[None, :] - 2.0 * (U_new @ U_train.T)
    return np.sqrt(np.maximum(d2, 0.0))


class TrainedSemiMetric:
    """Frozen training-time state of a semi-metric.

    For the derivative kind this is the training knot vector (new curves
    are refit in the same spline space); for the FPCA kind it is the
    training mean and eigenfunctions (new curves are projected onto the
    frozen basis).
    """

    def __init__(self, spec: SemiMetricSpec, sample: FunctionalSample):
        self.spec = spec
        self.grid = sample.grid
        self._sqrt_w = np.sqrt(sample.grid.quadrature_weights())
        if spec.kind == "deriv":
            rep = fit_bsplines(sample, order=spec.spline_order,
                               n_interior_knots=spec.n_interior_knots)
            self._order = rep.order
            self._knots = rep.knots
            self._basis: FpcaResult | None = None
            self._features = derivative(rep, spec.q).values * self._sqrt_w
        else:
            K = spec.n_components
            upper = min(sample.n - 1, sample.m)
            if K > upper:
                raise ValueError(
                    f"fpca semimetric needs K <= {upper} for this sample, got {K}"
                )
            basis = fpca(sample, K=K)
            self._basis = basis
            w = sample.grid.quadrature_weights()
            # ||phi||^2 is 1 by construction; kept explicitly
            self._score_scale = np.sqrt(
                np.einsum("kj,j,kj->k", basis.eigenfunctions, w, basis.eigenfunctions)
            )
            self._features = basis.scores * self._score_scale

    def _new_features(self, new: FunctionalSample) -> np.ndarray:
        if new.grid != self.grid:
            raise ValueError("new curves must share the training grid")
        if self.spec.kind == "deriv":
            n_interior = len(self._knots) - 2 * self._order
            rep = fit_bsplines(new, order=self._order, n_interior_knots=n_interior)
            # same grid and quantile rule => identical knot vector
            if not np.array_equal(rep.knots, self._knots):
                raise ValueError("spline knots drifted from the training state")
            return derivative(rep, self.spec.q).values * self._sqrt_w
        return self._basis.project(new.values) * self._score_scale

    def pairwise(self) -> DistanceMatrix:
        return DistanceMatrix(_pairwise_from_features(self._features), self.spec)

    def to_new(self, new: FunctionalSample) -> np.ndarray:
        """Distances from each new curve to each training curve."""
        return _cross_from_features(self._new_features(new), self._features)


def train_semimetric(spec: SemiMetricSpec, sample: FunctionalSample) -> TrainedSemiMetric:
    return TrainedSemiMetric(spec, sample)


def distance_matrix(spec: SemiMetricSpec, sample: FunctionalSample) -> DistanceMatrix:
    """Pairwise distances within a sample under the given semi-metric."""
    return train_semimetric(spec, sample).pairwise()


def distances_to(
    spec: SemiMetricSpec,
    training: FunctionalSample,
    new_curves: FunctionalSample,
    trained_state: TrainedSemiMetric | None = None,
) -> np.ndarray:
    """Distances from new curves to training curves in the training basis."""
    state = trained_state if trained_state is not None else train_semimetric(spec, training)
    return state.to_new(new_curves)
