"""Dense-matrix primitives: SVD, norms, matrix sign and matrix file formats.

Matrices are plain two-dimensional ``float64`` numpy arrays. Every public
function here is pure; inputs are never modified in place.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInputError, DimensionError, NumericalError

NORM_KINDS = ("frobenius", "nuclear", "spectral", "entrywise_l1", "entrywise_linf")

# (a, b, c) in Y <- a Y + b (Y Y^T) Y + c (Y Y^T)^2 Y
CUBIC_NS = (1.5, -0.5, 0.0)
# Widely used "quintic" tuning; does not converge to msgn exactly.
QUINTIC_NS = (3.4445, -4.7750, 2.0315)


def as_matrix(X, name="X") -> np.ndarray:
    """Validate ``X`` as a finite 2-D real matrix and return a float64 copy."""
    A = np.array(X, dtype=np.float64, copy=True)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DegenerateInputError(f"{name} has non-finite entries")
    return A


def check_same_shape(*mats: np.ndarray) -> None:
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise DimensionError(f"shape mismatch: {sorted(shapes)}")


class Svd(NamedTuple):
    """Thin SVD ``X = U diag(sigma) V^T`` with ``r = min(n, m)`` columns."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


def svd(X) -> Svd:
    """Thin SVD with a deterministic sign convention.

    The first entry of each column of ``U`` whose magnitude exceeds 1e-12 is
    made nonnegative; the matching column of ``V`` is flipped with it.
    """
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise DegenerateInputError("svd input has non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    V = Vt.T.copy()
    for j in range(U.shape[1]):
        col = U[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            U[:, j] = -col
            V[:, j] = -V[:, j]
    return Svd(U, s, V)


def singular_values(X) -> np.ndarray:
    try:
        return np.linalg.svd(np.asarray(X, dtype=np.float64), compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def inner(X, Y) -> float:
    """Frobenius inner product ``Tr(X^T Y)``."""
    return float(np.sum(np.asarray(X) * np.asarray(Y)))


def norm(X, kind: str = "frobenius") -> float:
    X = np.asarray(X, dtype=np.float64)
    if kind == "frobenius":
        # rescale so tiny or huge entries do not underflow or overflow when squared
        peak = np.max(np.abs(X))
        return float(peak * np.linalg.norm(X / peak)) if peak > 0 else 0.0
    if kind == "nuclear":
        return float(np.sum(singular_values(X)))
    if kind == "spectral":
        return float(singular_values(X)[0])
    if kind == "entrywise_l1":
        return float(np.sum(np.abs(X)))
    if kind == "entrywise_linf":
        return float(np.max(np.abs(X)))
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def schatten_norm(X, p: float) -> float:
    """Schatten p-norm: the l_p norm of the singular values, ``p`` in [1, inf]."""
    s = singular_values(X)
    if np.isinf(p):
        return float(s[0])
    return float(np.sum(s**p) ** (1.0 / p))


def msgn_exact(X, rank_tol: float = 1e-10) -> np.ndarray:
    """Matrix sign ``U sgn(Sigma) V^T`` via SVD.

    Singular values at or below ``rank_tol * sigma_1`` count as zero, so the
    zero matrix maps to zero.
    """
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    U, s, V = svd(X)
    if s[0] == 0.0:
        return np.zeros_like(np.asarray(X, dtype=np.float64))
    keep = s > rank_tol * s[0]
    return (U[:, keep]) @ V[:, keep].T


def msgn_newton_schulz(X, iters: int = 30, coeffs=CUBIC_NS) -> np.ndarray:
    """Approximate ``msgn(X)`` with an odd polynomial iteration.

    The input is first scaled by ``min(||X||_F, sqrt(||X||_1 ||X||_inf))``,
    both upper bounds on the spectral norm, so all singular values start in
    (0, 1]. With the default cubic coefficients every nonzero singular value
    converges to 1. Identity-like inputs are fixed points from the first step.
    """
    if iters < 1:
        raise ValueError("iters must be a positive integer")
    a, b, c = coeffs
    Y = np.asarray(X, dtype=np.float64)
    fro = np.linalg.norm(Y)
    if fro == 0.0:
        raise DegenerateInputError("msgn_newton_schulz is undefined for the zero matrix")
    induced = np.sqrt(np.abs(Y).sum(axis=0).max() * np.abs(Y).sum(axis=1).max())
    Y = Y / min(fro, induced)
    tall = Y.shape[0] > Y.shape[1]
    if tall:
        Y = Y.T
    for _ in range(iters):
        G = Y @ Y.T
        if c:
            Y = a * Y + (b * G + c * (G @ G)) @ Y
        else:
            Y = a * Y + b * (G @ Y)
    return Y.T.copy() if tall else Y


# -- file formats -----------------------------------------------------------


def write_matrix_csv(path, X) -> None:
    X = as_matrix(X)
    lines = [",".join(repr(float(v)) for v in row) for row in X]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad matrix entry: {exc}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise DimensionError(f"{path}: rows are empty or ragged")
    return as_matrix(rows)


_HEADER = struct.Struct("<II")


def write_matrix_bin(path, X) -> None:
    """Framed binary: u32 rows, u32 cols, then little-endian f64 entries row-major."""
    X = as_matrix(X)
    payload = _HEADER.pack(*X.shape) + X.astype("<f8").tobytes(order="C")
    Path(path).write_bytes(payload)


def read_matrix_bin(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DimensionError(f"{path}: truncated header")
    rows, cols = _HEADER.unpack_from(data)
    body = data[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise DimensionError(
            f"{path}: expected {rows}x{cols} entries ({8 * rows * cols} bytes), got {len(body)} bytes"
        )
    return as_matrix(np.frombuffer(body, dtype="<f8").reshape(rows, cols))


def load_matrix(path) -> np.ndarray:
    """Read a matrix file, picking the format from the extension (.csv or .bin)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return read_matrix_csv(path)
    if suffix in (".bin", ".mat64"):
        return read_matrix_bin(path)
    raise ValueError(f"{path}: unknown matrix file extension {suffix!r}")
