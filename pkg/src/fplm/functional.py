"""Discretized functional data: grids, B-spline representation, and FPCA.

Curves are stored as rows of an ``(n, m)`` value matrix over a shared,
strictly increasing observation grid. All integrals (inner products,
L2 distances, principal component analysis) use the trapezoidal rule
on that grid.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import eigh

__all__ = [
    "Grid",
    "FunctionalSample",
    "BSplineRep",
    "FpcaResult",
    "fit_bsplines",
    "derivative",
    "fpca",
    "inner_product",
    "as_functional_sample",
    "sample_to_csv",
    "sample_from_csv",
]


@dataclass(frozen=True)
class Grid:
    """Shared observation grid of a functional sample.

    Parameters
    ----------
    points : ndarray of shape (m,)
        Strictly increasing abscissae, at least 4 of them.
    support_lo, support_hi : float
        Support interval endpoints; must bracket the points.
    """

    points: np.ndarray
    support_lo: float
    support_hi: float

    def __init__(self, points, support_lo=None, support_hi=None):
        points = np.asarray(points, dtype=float)
        if points.ndim != 1 or points.size < 4:
            raise ValueError("grid needs a 1-d array of at least 4 points")
        if not np.all(np.isfinite(points)):
            raise ValueError("grid points must be finite")
        if np.any(np.diff(points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        lo = float(points[0]) if support_lo is None else float(support_lo)
        hi = float(points[-1]) if support_hi is None else float(support_hi)
        if lo > points[0] or hi < points[-1]:
            raise ValueError("support must contain all grid points")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "support_lo", lo)
        object.__setattr__(self, "support_hi", hi)

    @property
    def m(self) -> int:
        return self.points.size

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoidal-rule weights w with sum(w * f) ~ integral of f."""
        t = self.points
        w = np.empty_like(t)
        w[0] = (t[1] - t[0]) / 2.0
        w[-1] = (t[-1] - t[-2]) / 2.0
        w[1:-1] = (t[2:] - t[:-2]) / 2.0
        return w

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
        )

    def __hash__(self):
        return hash((self.points.tobytes(), self.support_lo, self.support_hi))


@dataclass(frozen=True)
class FunctionalSample:
    """n discretized curves on a shared grid; rows are curves."""

    grid: Grid
    values: np.ndarray

    def __init__(self, grid: Grid, values):
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[1] != grid.m:
            raise ValueError(
                f"curve width {values.shape[1]} does not match grid size {grid.m}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("curve values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BSplineRep:
    """Least-squares B-spline coefficients for a sample of curves.

    ``order`` is polynomial degree + 1; ``knots`` is the full vector with
    boundary multiplicity equal to the order; ``coefs`` has one row of
    p = (#interior knots) + order coefficients per curve.
    """

    order: int
    knots: np.ndarray
    coefs: np.ndarray
    grid: Grid


@dataclass(frozen=True)
class FpcaResult:
    """Eigenpairs of the empirical covariance operator under grid quadrature.

    Eigenfunctions are orthonormal in the quadrature inner product and
    ordered by nonincreasing eigenvalue; ``scores[i, k]`` is the inner
    product of centered curve i with eigenfunction k.
    """

    grid: Grid
    mean_curve: np.ndarray
    eigenfunctions: np.ndarray  # (K, m)
    eigenvalues: np.ndarray  # (K,), nonincreasing, >= 0
    scores: np.ndarray  # (n, K)

    def project(self, values: np.ndarray) -> np.ndarray:
        """Scores of new curves against the frozen basis (centered with
        the training mean)."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[1] != self.grid.m:
            raise ValueError("new curves are not on the training grid")
        w = self.grid.quadrature_weights()
        return (values - self.mean_curve) @ (w[:, None] * self.eigenfunctions.T)


def as_functional_sample(X, grid: Grid | None = None) -> FunctionalSample:
    """Coerce an (n, m) array (or a FunctionalSample) to a FunctionalSample.

    Arrays get ``grid`` when provided, else a unit-interval default.
    """
    if isinstance(X, FunctionalSample):
        if grid is not None and X.grid != grid:
            raise ValueError("sample grid conflicts with the requested grid")
        return X
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if grid is None:
        grid = Grid(np.linspace(0.0, 1.0, X.shape[1]))
    return FunctionalSample(grid, X)


def inner_product(x, beta, grid: Grid):
    """Trapezoidal approximation of the L2 inner product on the grid.

    ``x`` may be a single curve or an (n, m) batch; ``beta`` is a curve.
    Returns a scalar or a length-n vector accordingly.
    """
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if x.shape[-1] != grid.m or beta.shape[-1] != grid.m:
        raise ValueError("curve length does not match the grid")
    w = grid.quadrature_weights()
    return x @ (w * beta)


def _quantile_knots(points: np.ndarray, order: int, n_interior: int) -> np.ndarray:
    if n_interior > 0:
        probs = np.arange(1, n_interior + 1) / (n_interior + 1)
        interior = np.quantile(points, probs)
    else:
        interior = np.empty(0)
    return np.concatenate(
        [np.repeat(points[0], order), interior, np.repeat(points[-1], order)]
    )


def fit_bsplines(
    sample: FunctionalSample,
    order: int = 4,
    n_interior_knots: int | None = None,
) -> BSplineRep:
    """Least-squares B-spline fit of every curve in the sample.

    Interior knots sit at grid quantiles; ``n_interior_knots`` defaults
    to min(20, m // 4). Raises when the basis is too rich for the grid.
    """
    if order < 2:
        raise ValueError("spline order must be at least 2")
    m = sample.m
    if n_interior_knots is None:
        n_interior_knots = min(20, m // 4)
    if n_interior_knots < 0:
        raise ValueError("n_interior_knots must be nonnegative")
    p = n_interior_knots + order
    if p > m:
        raise ValueError(
            f"{n_interior_knots} interior knots with order {order} need "
            f"{p} coefficients but the grid has only {m} points"
        )
    knots = _quantile_knots(sample.grid.points, order, n_interior_knots)
    design = BSpline.design_matrix(sample.grid.points, knots, order - 1).toarray()
    coefs, _, rank, _ = np.linalg.lstsq(design, sample.values.T, rcond=None)
    if rank < p:
        raise ValueError(
            "degenerate spline design (rank %d < %d basis functions); "
            "reduce n_interior_knots" % (rank, p)
        )
    return BSplineRep(order=order, knots=knots, coefs=coefs.T, grid=sample.grid)


def derivative(rep: BSplineRep, q: int) -> FunctionalSample:
    """q-th derivative of the represented curves, evaluated on the
    original grid through the lower-order B-spline basis.

    ``q = 0`` returns the smoothed curves themselves.
    """
    if q < 0:
        raise ValueError("derivative order must be nonnegative")
    if q >= rep.order:
        raise ValueError(
            f"derivative order {q} not available from splines of order {rep.order}"
        )
    spline = BSpline(rep.knots, rep.coefs.T, rep.order - 1)
    if q > 0:
        spline = spline.derivative(q)
    values = spline(rep.grid.points).T
    return FunctionalSample(rep.grid, values)


def fpca(sample: FunctionalSample, K: int) -> FpcaResult:
    """Functional PCA via the n-by-n quadrature-weighted Gram matrix.

    Solves the covariance-operator eigenproblem in the span of the
    centered curves, which stays well conditioned when m > n. The sign
    of each eigenfunction is fixed so its largest-magnitude entry is
    positive. Components with (numerically) zero eigenvalue get zero
    eigenfunctions and scores.
    """
    n, m = sample.n, sample.m
    if not 1 <= K <= min(n - 1, m):
        raise ValueError(f"K must be in [1, {min(n - 1, m)}], got {K}")
    w = sample.grid.quadrature_weights()
    mean_curve = sample.values.mean(axis=0)
    centered = sample.values - mean_curve
    gram = (centered * w) @ centered.T  # entries <x_i, x_j>
    mu, vecs = eigh(gram)
    order = np.argsort(mu)[::-1][:K]
    mu = np.clip(mu[order], 0.0, None)
    vecs = vecs[:, order]

    tiny = max(mu[0], 1.0) * 1e-12 if mu.size else 0.0
    eigenfunctions = np.zeros((K, m))
    scores = np.zeros((n, K))
    for k in range(K):
        if mu[k] <= tiny:
            continue
        root = np.sqrt(mu[k])
        phi = vecs[:, k] @ centered / root
        idx = np.argmax(np.abs(phi))
        if phi[idx] < 0:
            phi = -phi
            vecs[:, k] = -vecs[:, k]
        eigenfunctions[k] = phi
        scores[:, k] = root * vecs[:, k]
    eigenvalues = mu / n
    return FpcaResult(
        grid=sample.grid,
        mean_curve=mean_curve,
        eigenfunctions=eigenfunctions,
        eigenvalues=eigenvalues,
        scores=scores,
    )


def sample_to_csv(sample: FunctionalSample) -> str:
    """CSV text: header row of grid points, one row per curve."""
    buf = io.StringIO()
    header = ",".join("%.17g" % t for t in sample.grid.points)
    buf.write(header + "\n")
    np.savetxt(buf, sample.values, delimiter=",", fmt="%.17g")
    return buf.getvalue()


def sample_from_csv(text: str) -> FunctionalSample:
    """Inverse of :func:`sample_to_csv`."""
    lines = text.strip().splitlines()
    if len(lines) < 2:
        raise ValueError("curve CSV needs a header row and at least one curve")
    points = np.array([float(v) for v in lines[0].split(",")])
    values = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    return FunctionalSample(Grid(points), values)
