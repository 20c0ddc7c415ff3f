"""Convex feasible sets: Euclidean and matrix-norm projections, grids."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvergenceError, InvalidInputError, UnsupportedDimensionError

MEMBERSHIP_TOL = 1e-10
MAX_GRID_DIM = 3
MAX_SIMPLEX_RESOLUTION = 64


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    """An l2 ball, an axis-aligned box or a probability simplex.

    Build instances with :func:`ball`, :func:`interval`, :func:`box` or
    :func:`simplex` rather than calling the constructor directly.
    """

    kind: str
    dim: int
    center: Optional[np.ndarray] = None
    radius: float = 0.0
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    @property
    def diameter(self) -> float:
        if self.kind == "l2_ball":
            return 2.0 * self.radius
        if self.kind == "box":
            return float(np.linalg.norm(self.hi - self.lo))
        return math.sqrt(2.0) if self.dim > 1 else 0.0

    @property
    def centroid(self) -> np.ndarray:
        if self.kind == "l2_ball":
            return self.center.copy()
        if self.kind == "box":
            return 0.5 * (self.lo + self.hi)
        return np.full(self.dim, 1.0 / self.dim)

    def _check(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if p.shape != (self.dim,):
            raise InvalidInputError(f"expected a point of dimension {self.dim}, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("point has non-finite entries")
        return p

    def contains(self, p, tol: float = MEMBERSHIP_TOL) -> bool:
        p = self._check(p)
        if self.kind == "l2_ball":
            return bool(np.linalg.norm(p - self.center) <= self.radius + tol)
        if self.kind == "box":
            return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))
        return bool(np.all(p >= -tol) and abs(p.sum() - 1.0) <= tol)

    def project(self, p) -> np.ndarray:
        """Euclidean projection onto the set."""
        p = self._check(p)
        if self.kind == "l2_ball":
            v = p - self.center
            norm = np.linalg.norm(v)
            if norm <= self.radius:
                return p.copy()
            return self.center + v * (self.radius / norm)
        if self.kind == "box":
            return np.clip(p, self.lo, self.hi)
        return project_simplex(p)

    def project_norm(self, p, A, tol: float = 1e-8, max_iters: int = 20000) -> np.ndarray:
        """Projection in the norm ``||v||_A^2 = v^T A v``.

        Projected gradient descent on ``(q - p)^T A (q - p)`` with step
        ``1 / (2 lambda_max(A))``; stops once an iteration moves the point by
        at most ``tol`` (the gradient mapping divided by its Lipschitz
        constant).  ``A`` must already carry any ``eps * I`` regularization.
        """
        p = self._check(p)
        A = np.asarray(A, dtype=float)
        if A.shape != (self.dim, self.dim):
            raise InvalidInputError(f"A must be {self.dim}x{self.dim}, got {A.shape}")
        if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12):
            raise InvalidInputError("A is not symmetric")
        eig = np.linalg.eigvalsh(A)
        if eig[0] < -1e-10 * max(1.0, abs(eig[-1])):
            raise InvalidInputError(f"A is not positive semidefinite (min eigenvalue {eig[0]:.3e})")
        if self.contains(p, tol=0.0):
            return p.copy()
        lip = 2.0 * eig[-1]
        if lip <= 0:
            return self.project(p)
        q = self.project(p)
        step = 1.0 / lip
        moved = np.inf
        for _ in range(max_iters):
            q_new = self.project(q - step * 2.0 * (A @ (q - p)))
            moved = float(np.linalg.norm(q_new - q))
            q = q_new
            if moved <= tol:
                return q
        raise ConvergenceError("project_norm did not converge", residual=moved)

    def grid_points(self, resolution: int) -> np.ndarray:
        """Deterministic lattice covering the set, one point per row.

        Balls and boxes use a box lattice with ``resolution + 1`` nodes per
        axis (spacing ``<= diameter / resolution``) filtered by membership;
        simplices use all compositions ``k / resolution``.
        """
        if resolution < 1:
            raise InvalidInputError("resolution must be a positive integer")
        if self.kind == "simplex":
            if resolution > MAX_SIMPLEX_RESOLUTION:
                raise UnsupportedDimensionError(
                    f"simplex grids support resolution <= {MAX_SIMPLEX_RESOLUTION}")
            return _simplex_lattice(self.dim, resolution)
        if self.dim > MAX_GRID_DIM:
            raise UnsupportedDimensionError(
                f"grid enumeration supports dimension <= {MAX_GRID_DIM}, got {self.dim}")
        if self.kind == "l2_ball":
            axes = [c + np.linspace(-self.radius, self.radius, resolution + 1) for c in self.center]
        else:
            axes = [np.linspace(a, b, resolution + 1) for a, b in zip(self.lo, self.hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        if self.kind == "l2_ball":
            keep = np.linalg.norm(pts - self.center, axis=1) <= self.radius * (1 + 1e-12)
            pts = pts[keep]
        return pts

    def grid_weights(self, resolution: int) -> np.ndarray:
        """Quadrature weights matching :meth:`grid_points` (sum to one).

        Trapezoid weights wherever the lattice is a tensor product (boxes,
        1-d balls, the 1-simplex); uniform weights otherwise.
        """
        pts = self.grid_points(resolution)
        if self.kind == "box" or (self.kind == "l2_ball" and self.dim == 1):
            axis_w = np.ones(resolution + 1)
            axis_w[[0, -1]] = 0.5
            w = axis_w
            for _ in range(self.dim - 1):
                w = np.multiply.outer(w, axis_w)
            w = np.ravel(w)
        elif self.kind == "simplex" and self.dim == 2:
            w = np.ones(len(pts))
            w[[0, -1]] = 0.5
        else:
            w = np.ones(len(pts))
        return w / w.sum()

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` points drawn uniformly from the set."""
        if self.kind == "l2_ball":
            g = rng.standard_normal((n, self.dim))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = self.radius * rng.random(n) ** (1.0 / self.dim)
            return self.center + g * r[:, None]
        if self.kind == "box":
            return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))
        return rng.dirichlet(np.ones(self.dim), size=n)


def ball(center, radius: float) -> ConvexDomain:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if radius < 0:
        raise InvalidInputError("radius must be nonnegative")
    return ConvexDomain("l2_ball", len(center), center=center, radius=float(radius))


def box(lo, hi) -> ConvexDomain:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape or np.any(hi < lo):
        raise InvalidInputError("box needs lo <= hi coordinate-wise")
    return ConvexDomain("box", len(lo), lo=lo, hi=hi)


def interval(lo: float, hi: float) -> ConvexDomain:
    return box([lo], [hi])


def simplex(dim: int) -> ConvexDomain:
    if dim < 1:
        raise InvalidInputError("simplex dimension must be >= 1")
    return ConvexDomain("simplex", int(dim))


def project_simplex(p) -> np.ndarray:
    """Sort-and-threshold Euclidean projection onto the probability simplex."""
    p = np.asarray(p, dtype=float)
    u = np.sort(p)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(p) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(p - theta, 0.0)


def _simplex_lattice(dim: int, resolution: int) -> np.ndarray:
    # stars and bars; combinations come out in lexicographic order, which
    # makes the first coordinate ascend
    rows = []
    for bars in itertools.combinations(range(resolution + dim - 1), dim - 1):
        edges = (-1,) + bars + (resolution + dim - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(dim)])
    return np.asarray(rows, dtype=float) / resolution
