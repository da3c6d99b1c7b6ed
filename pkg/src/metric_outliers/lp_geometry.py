"""lp point arithmetic, the Schoenberg l2-embeddability test, and Gram factorization.

The classical facts used here: a finite metric embeds isometrically into l2
iff the double-centered squared-distance matrix B = -1/2 * J * D^2 * J
(J = I - (1/n) * 1 * 1^T) is positive semidefinite, and any PSD matrix G is
the Gram matrix of points recoverable by eigendecomposition.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimMismatch, InvalidP, NotPSD

if TYPE_CHECKING:  # pragma: no cover - annotation only, avoids a circular import
    from .metric_core import MetricSpace

SYMMETRY_TOL = 1e-12  # relative symmetry tolerance for matrices handed around here


@dataclass(frozen=True)
class PointSet:
    """n points in R^dims together with the finite p >= 1 of the host norm."""

    points: np.ndarray  # shape (n, dims)
    p: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise DimMismatch(f"points must be a (n, dims) array with dims >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DimMismatch("points contain non-finite coordinates")
        _check_p(self.p)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "p", float(self.p))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dims(self) -> int:
        return self.points.shape[1]


def _check_p(p: float) -> None:
    if not np.isfinite(p) or p < 1.0:
        raise InvalidP(f"p must be finite and >= 1, got {p}")


def lp_distance(a, b, p: float) -> float:
    """(sum |a_i - b_i|^p)^(1/p) for finite p >= 1."""
    _check_p(p)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimMismatch(f"point dimensions differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b, ord=p))


def pairwise_distances(ps: PointSet) -> np.ndarray:
    """All-pairs lp distance matrix of a point set."""
    if ps.p == 2.0:
        d = cdist(ps.points, ps.points, metric="euclidean")
    elif ps.p == 1.0:
        d = cdist(ps.points, ps.points, metric="cityblock")
    else:
        d = cdist(ps.points, ps.points, metric="minkowski", p=ps.p)
    # cdist is numerically symmetric but enforce exactly for downstream checks
    return (d + d.T) / 2.0


def check_symmetric(a: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate symmetry within a relative tolerance and return the symmetrized matrix."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimMismatch(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max()) if a.size else 0.0)
    if np.abs(a - a.T).max(initial=0.0) > tol * scale:
        raise DimMismatch("matrix is not symmetric within tolerance")
    return (a + a.T) / 2.0


def sorted_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition with eigenvalues sorted descending.

    Eigenvector signs are fixed (largest-magnitude component positive) so the
    factorization is reproducible for CLI output.
    """
    vals, vecs = np.linalg.eigh(a)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        pivot = int(np.argmax(np.abs(col)))
        if col[pivot] < 0:
            vecs[:, j] = -col
    return vals, vecs


def centered_gram(m: "MetricSpace") -> np.ndarray:
    """Double-centered squared-distance matrix B = -1/2 * J * D^2 * J."""
    d2 = np.asarray(m.dist, dtype=float) ** 2
    n = d2.shape[0]
    j = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * j @ d2 @ j
    return (b + b.T) / 2.0


def is_l2_isometric(m: "MetricSpace", tol_eig: float = 1e-8) -> bool:
    """Schoenberg criterion: true iff the centered Gram matrix is PSD.

    The decision is exact in theory; tol_eig only absorbs floating-point
    error, relative to the largest eigenvalue.
    """
    vals, _ = sorted_eigh(centered_gram(m))
    if vals.size == 0:
        return True
    lam_max = max(float(vals[0]), 0.0)
    return float(vals[-1]) >= -tol_eig * max(lam_max, 1e-30)


def points_from_gram(g: np.ndarray, tol_eig: float = 1e-8) -> PointSet:
    """Factor a PSD matrix G into points whose pairwise inner products match G.

    Eigenvalues in [-tol_eig * lam_max, 0) are clamped to zero; anything below
    that raises NotPSD.
    """
    g = check_symmetric(g)
    vals, vecs = sorted_eigh(g)
    lam_max = max(float(vals[0]) if vals.size else 0.0, 0.0)
    floor = -tol_eig * max(lam_max, 1e-30)
    if vals.size and float(vals[-1]) < floor:
        raise NotPSD(
            f"matrix has eigenvalue {float(vals[-1]):g} below -tol_eig*lam_max = {floor:g}"
        )
    vals = np.clip(vals, 0.0, None)
    pts = vecs * np.sqrt(vals)[None, :]
    if pts.shape[1] == 0:
        pts = np.zeros((g.shape[0], 1))
    return PointSet(points=pts, p=2.0)


def gram_of_points(points: np.ndarray) -> np.ndarray:
    """Gram matrix V V^T of row vectors."""
    points = np.asarray(points, dtype=float)
    g = points @ points.T
    return (g + g.T) / 2.0


# -- embedding JSON interchange ------------------------------------------------

def embedding_to_json(ps: PointSet) -> str:
    return json.dumps({"p": ps.p, "points": ps.points.tolist()})


def embedding_from_json(text: str) -> PointSet:
    data = json.loads(text)
    return PointSet(points=np.asarray(data["points"], dtype=float), p=float(data["p"]))


def write_embedding(path: str, ps: PointSet) -> None:
    with open(path, "w") as fh:
        fh.write(embedding_to_json(ps))
        fh.write("\n")


def read_embedding(path: str) -> PointSet:
    with open(path) as fh:
        return embedding_from_json(fh.read())
