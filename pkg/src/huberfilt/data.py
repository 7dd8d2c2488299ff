"""Core value types: point sets, confidence weights, orthonormal bases, sketches."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSketchError, FullSpaceError

ORTHO_TOL = 1e-9     # pairwise inner products in a basis
NORM_TOL = 1e-12     # unit-norm deviation in a basis
CACHE_TOL = 1e-12    # relative drift allowed between caches and recomputation


@dataclass(frozen=True)
class Dataset:
    """Immutable n-by-d point matrix with optional hidden inlier labels.

    Labels (True = inlier) are carried through projections and subsetting but
    are only ever consulted by tests and audits, never by the estimators.
    """

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("points must be a nonempty n-by-d matrix")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.ascontiguousarray(self.labels, dtype=bool)
            if lab.shape != (pts.shape[0],):
                raise ValueError("labels must have length n")
            lab.flags.writeable = False
            object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "Dataset":
        lab = None if self.labels is None else self.labels[idx]
        return Dataset(self.points[idx], lab)

    def to_csv(self, path, include_labels: bool = False) -> None:
        """One row per point; trailing 0/1 label column when requested."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            for i in range(self.n):
                row = [repr(float(v)) for v in self.points[i]]
                if include_labels and self.labels is not None:
                    row.append(str(int(self.labels[i])))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path, labeled: bool = False) -> "Dataset":
        rows, labels = [], []
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.reader(fh):
                if not rec:
                    continue
                if labeled:
                    rows.append([float(v) for v in rec[:-1]])
                    labels.append(bool(int(rec[-1])))
                else:
                    rows.append([float(v) for v in rec])
        return cls(np.array(rows), np.array(labels) if labeled else None)


@dataclass(frozen=True)
class WeightVector:
    """Per-point confidence weights in [0, 1]; the filters' state."""

    w: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if np.any(w < -1e-12) or np.any(w > 1 + 1e-12):
            raise ValueError("weights must lie in [0, 1]")
        w = np.clip(w, 0.0, 1.0)
        if w.sum() <= 0:
            raise ValueError("weights must have positive total mass")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    @classmethod
    def ones(cls, n: int) -> "WeightVector":
        return cls(np.ones(n))


def as_weight_array(w, n: int) -> np.ndarray:
    """Accept a WeightVector or a bare array; return a float64 array of length n."""
    arr = np.asarray(getattr(w, "w", w), dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"weight vector has shape {arr.shape}, expected ({n},)")
    return arr


@dataclass(frozen=True)
class SubspaceBasis:
    """Ordered orthonormal vectors spanning the set-aside subspace V."""

    vectors: np.ndarray  # (m, d), possibly m = 0

    def __post_init__(self):
        V = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if V.ndim != 2:
            raise ValueError("basis vectors must form an m-by-d matrix")
        m, d = V.shape
        if m > d:
            raise ValueError("basis cannot have more vectors than dimensions")
        if m > 0:
            G = V @ V.T
            if np.max(np.abs(np.diag(G) - 1.0)) > 2 * NORM_TOL + ORTHO_TOL:
                raise ValueError("basis vectors must be unit norm")
            off = G - np.diag(np.diag(G))
            if np.max(np.abs(off), initial=0.0) > ORTHO_TOL:
                raise ValueError("basis vectors must be pairwise orthogonal")
        V.flags.writeable = False
        object.__setattr__(self, "vectors", V)

    @classmethod
    def empty(cls, d: int) -> "SubspaceBasis":
        return cls(np.zeros((0, d)))

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.vectors.shape[1]

    def project_off(self, X: np.ndarray) -> np.ndarray:
        """Project rows (or a single vector) onto the orthogonal complement of V."""
        if self.dim == 0:
            return np.array(X, dtype=np.float64, copy=True)
        V = self.vectors
        return X - (X @ V.T) @ V

    def span_coords(self, X: np.ndarray) -> np.ndarray:
        """Coordinates of rows (or a single vector) in the span of V."""
        return X @ self.vectors.T

    def lift(self, coords: np.ndarray) -> np.ndarray:
        """Map span coordinates back to ambient space."""
        return coords @ self.vectors


@dataclass(frozen=True)
class SketchMatrix:
    """k sketch directions (rows) with their cached squared Frobenius norm."""

    rows: np.ndarray  # (k, d)
    frob_sq: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ValueError("sketch must have at least one row")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        actual = float(np.sum(rows * rows))
        if self.frob_sq is None:
            object.__setattr__(self, "frob_sq", actual)
        else:
            fs = float(self.frob_sq)
            if abs(fs - actual) > CACHE_TOL * max(actual, 1.0):
                raise ValueError("cached frob_sq disagrees with rows")
            object.__setattr__(self, "frob_sq", fs)

    @property
    def k(self) -> int:
        return self.rows.shape[0]

    def row_norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.rows * self.rows, axis=1))


def gram_schmidt_append(basis: SubspaceBasis, u: np.ndarray, tol: float | None = None):
    """Orthogonalize u against basis; append the normalized residual.

    Returns (new_basis, appended).  A residual smaller than tol * ||u||
    (default 1e-8 relative) signals "already spanned" and leaves the basis
    unchanged.  Re-orthogonalizes once for numerical stability.
    """
    u = np.asarray(u, dtype=np.float64)
    norm_u = float(np.linalg.norm(u))
    if norm_u <= 0:
        raise ValueError("cannot extend basis with a zero vector")
    if basis.dim >= basis.ambient_dim:
        raise FullSpaceError("full space: basis already spans R^d")
    if tol is None:
        tol = 1e-8
    r = basis.project_off(u)
    r = basis.project_off(r)  # second pass kills rounding residue
    norm_r = float(np.linalg.norm(r))
    if norm_r < tol * norm_u:
        return basis, False
    new = np.vstack([basis.vectors, r / norm_r])
    return SubspaceBasis(new), True


def check_sketch_nonzero(U: SketchMatrix) -> np.ndarray:
    norms = U.row_norms()
    if np.any(norms == 0.0):
        raise DegenerateSketchError("degenerate sketch: zero row")
    return norms
