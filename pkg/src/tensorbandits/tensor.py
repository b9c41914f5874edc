"""Dense tensor algebra: layout, matricization, marginal products, Tucker tools.

Tensors are plain numpy arrays stored in C (row-major) order, so the flat
offset of entry (i1, ..., id), with 1-based indices, is
``sum_j (i_j - 1) * prod_{l > j} p_l``.  Mode-0 matricization of an order-3
array places entry (i, j, k) in row i, column j * p3 + k, and the same
last-index-fastest rule extends to every mode: the remaining indices keep
their original relative order.

Arms are tuples of 1-based indices, one per mode (this matches the on-disk
trace and observation formats).  All numpy axes in function signatures are
0-based, numpy style.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.linalg import null_space

Arm = tuple[int, ...]

ORTHO_TOL = 1e-8


def check_arm(arm: Sequence[int], dims: Sequence[int]) -> None:
    """Raise ValueError unless ``arm`` is a valid 1-based index tuple for ``dims``."""
    if len(arm) != len(dims):
        raise ValueError(f"arm {tuple(arm)} has order {len(arm)}, expected {len(dims)}")
    for j, (i, p) in enumerate(zip(arm, dims)):
        if not 1 <= i <= p:
            raise ValueError(f"arm index {i} out of range [1, {p}] in mode {j}")


def flat_offset(arm: Sequence[int], dims: Sequence[int]) -> int:
    """Canonical flat offset of a 1-based arm tuple (0-based result)."""
    check_arm(arm, dims)
    return int(np.ravel_multi_index(tuple(i - 1 for i in arm), tuple(dims)))


def arm_from_offset(offset: int, dims: Sequence[int]) -> Arm:
    """Inverse of :func:`flat_offset`."""
    idx = np.unravel_index(int(offset), tuple(dims))
    return tuple(int(i) + 1 for i in idx)


def indicator(arm: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """One-hot tensor with a single 1 at ``arm``."""
    check_arm(arm, dims)
    out = np.zeros(tuple(dims))
    out[tuple(i - 1 for i in arm)] = 1.0
    return out


def matricize(x: np.ndarray, axis: int) -> np.ndarray:
    """Mode-``axis`` matricization, shape (p_axis, prod of the other dims).

    Columns enumerate the remaining indices in their original order with the
    last index varying fastest.
    """
    if not 0 <= axis < x.ndim:
        raise ValueError(f"axis {axis} out of range for order-{x.ndim} tensor")
    return np.ascontiguousarray(np.moveaxis(x, axis, 0)).reshape(x.shape[axis], -1)


def dematricize(m: np.ndarray, axis: int, dims: Sequence[int]) -> np.ndarray:
    """Exact inverse of :func:`matricize`."""
    dims = tuple(dims)
    if not 0 <= axis < len(dims):
        raise ValueError(f"axis {axis} out of range for dims {dims}")
    rest = dims[:axis] + dims[axis + 1:]
    expected = (dims[axis], int(np.prod(rest, dtype=np.int64)) if rest else 1)
    if m.shape != expected:
        raise ValueError(f"matrix shape {m.shape} inconsistent with dims {dims}, axis {axis}")
    return np.moveaxis(m.reshape((dims[axis],) + rest), 0, axis)


def marginal_multiply(x: np.ndarray, y: np.ndarray, axis: int) -> np.ndarray:
    """Marginal multiplication x ×_axis y; contracts x's mode against y's columns.

    ``y`` has shape (q, p_axis); the output replaces dim ``axis`` by q, with
    entries sum_i' x[..., i', ...] * y[i, i'].
    """
    if y.ndim != 2 or y.shape[1] != x.shape[axis]:
        raise ValueError(
            f"matrix of shape {y.shape} cannot contract mode {axis} of size {x.shape[axis]}"
        )
    return np.moveaxis(np.tensordot(y, x, axes=([1], [axis])), 0, axis)


def inner_product(x: np.ndarray, y: np.ndarray) -> float:
    """Tensor inner product: sum of elementwise products."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.vdot(x, y))


def norms(x: np.ndarray) -> tuple[float, float]:
    """(Frobenius norm, entrywise max-abs norm)."""
    return float(np.linalg.norm(x.ravel())), float(np.max(np.abs(x)))


def fix_signs(u: np.ndarray) -> np.ndarray:
    """Flip column signs so each column's largest-magnitude entry is positive.

    Pins an otherwise arbitrary SVD/eigendecomposition sign for reproducibility;
    the spanned subspace is unchanged.
    """
    if u.size == 0:
        return u
    lead = np.abs(u).argmax(axis=0)
    signs = np.sign(u[lead, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def truncated_svd_left(m: np.ndarray, r: int) -> np.ndarray:
    """Top-``r`` left singular vectors of ``m``, sign-fixed, orthonormal columns."""
    if not 1 <= r <= min(m.shape):
        raise ValueError(f"rank {r} out of range for matrix of shape {m.shape}")
    u, _, _ = np.linalg.svd(m, full_matrices=False)
    return fix_signs(u[:, :r])


def orthonormal_complement(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the subspace complement to the columns of ``u``.

    ``u`` must have orthonormal columns; returns a p x (p - r) matrix.  For
    r == p the complement is a valid (p, 0) matrix.
    """
    p, r = u.shape
    if r > p:
        raise ValueError(f"matrix of shape {u.shape} has more columns than rows")
    gram_err = np.max(np.abs(u.T @ u - np.eye(r))) if r else 0.0
    if gram_err > ORTHO_TOL:
        raise ValueError(f"input columns are not orthonormal (max deviation {gram_err:.2e})")
    if r == p:
        return np.zeros((p, 0))
    comp = null_space(u.T)
    return fix_signs(comp)


def basis_with_complement(u: np.ndarray) -> np.ndarray:
    """Square orthogonal matrix [u ; u_perp] (columns concatenated)."""
    return np.hstack([u, orthonormal_complement(u)])


def rotate_coeffs(x: np.ndarray, bases: Sequence[np.ndarray]) -> np.ndarray:
    """Coefficients of ``x`` in per-mode orthonormal bases.

    Applies each basis transpose along its mode, so entry (c1, ..., cd) of
    the result is the coefficient of x along column c_j of bases[j] in every
    mode.  With bases [U ; U_perp] built from Tucker factors of x, the
    coefficients concentrate in the leading rank block.
    """
    if len(bases) != x.ndim:
        raise ValueError(f"{len(bases)} bases for an order-{x.ndim} tensor")
    out = x
    for axis, b in enumerate(bases):
        out = marginal_multiply(out, b.T, axis)
    return out


def _rank_flags(dims: Sequence[int], ranks: Sequence[int]) -> list[np.ndarray]:
    dims, ranks = tuple(dims), tuple(ranks)
    if len(ranks) != len(dims):
        raise ValueError("ranks and dims must have equal length")
    flags = []
    for p, r in zip(dims, ranks):
        if not 0 <= r <= p:
            raise ValueError(f"rank {r} out of range for dim {p}")
        f = np.zeros(p, dtype=bool)
        f[:r] = True
        flags.append(f)
    return flags


def head_mask(dims: Sequence[int], ranks: Sequence[int]) -> np.ndarray:
    """Boolean tensor marking the leading rank block (all indices below rank)."""
    return reduce(np.multiply.outer, _rank_flags(dims, ranks))


def complement_block_mask(dims: Sequence[int], ranks: Sequence[int]) -> np.ndarray:
    """Boolean tensor marking entries whose every index exceeds its rank."""
    return reduce(np.multiply.outer, [~f for f in _rank_flags(dims, ranks)])


def blocked_order(dims: Sequence[int], ranks: Sequence[int]) -> np.ndarray:
    """Permutation of flat offsets used by the blocked vectorization.

    Rank-block entries (every index below its rank) come first, entries whose
    indices all exceed their ranks come last, and mixed entries sit in
    between; within each group entries keep canonical flat order.  The last
    group therefore has exactly prod (p_j - r_j) entries, matching the
    heavily penalized coordinate block of the elimination ridge, and the
    permutation is a fixed bijection.
    """
    head = head_mask(dims, ranks).ravel()
    tail = complement_block_mask(dims, ranks).ravel()
    tier = np.ones(head.size, dtype=np.int8)
    tier[head] = 0
    tier[tail] = 2
    return np.argsort(tier, kind="stable")


def vectorize_blocked(y: np.ndarray, ranks: Sequence[int]) -> np.ndarray:
    """Flatten ``y`` with the leading rank block first (see :func:`blocked_order`)."""
    return y.ravel()[blocked_order(y.shape, ranks)]


@dataclass
class TuckerDecomp:
    """Core tensor plus per-mode factor matrices (factors[j] is p_j x r_j)."""

    core: np.ndarray
    factors: list[np.ndarray]

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(self.core.shape)

    def validate(self, tol: float = 1e-10) -> None:
        """Check factor shapes and orthonormality of factor columns."""
        if len(self.factors) != self.core.ndim:
            raise ValueError("number of factors must match core order")
        for j, f in enumerate(self.factors):
            if f.shape[1] != self.core.shape[j]:
                raise ValueError(f"factor {j} has {f.shape[1]} columns, core expects {self.core.shape[j]}")
            if f.shape[1] > f.shape[0]:
                raise ValueError(f"factor {j} rank exceeds dimension: {f.shape}")
            err = np.max(np.abs(f.T @ f - np.eye(f.shape[1])))
            if err > tol:
                raise ValueError(f"factor {j} columns not orthonormal (max deviation {err:.2e})")

    def reconstruct(self) -> np.ndarray:
        return tucker_reconstruct(self)


def tucker_reconstruct(t: TuckerDecomp) -> np.ndarray:
    """Multiply the core by every factor: S x_1 U_1 ... x_d U_d."""
    out = t.core
    for axis, f in enumerate(t.factors):
        if f.shape[1] != out.shape[axis]:
            raise ValueError(f"factor {axis} of shape {f.shape} inconsistent with core {t.core.shape}")
        out = marginal_multiply(out, f, axis)
    return out


def save_tensor(path, x: np.ndarray) -> None:
    """Write the text form: a dims header line, then entries in canonical order."""
    with open(path, "w") as fh:
        fh.write("dims: " + " ".join(str(p) for p in x.shape) + "\n")
        flat = x.ravel()
        for start in range(0, flat.size, 8):
            fh.write(" ".join(f"{v:.17g}" for v in flat[start:start + 8]) + "\n")


def load_tensor(path) -> np.ndarray:
    """Parse the text form written by :func:`save_tensor`."""
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("dims:"):
            raise ValueError(f"{path}: line 1: expected 'dims: p1 p2 ...' header")
        try:
            dims = tuple(int(tok) for tok in header[len("dims:"):].split())
        except ValueError as exc:
            raise ValueError(f"{path}: line 1: bad dimension list: {exc}") from exc
        if not dims or any(p <= 0 for p in dims):
            raise ValueError(f"{path}: line 1: dimensions must be positive integers")
        values: list[float] = []
        for lineno, line in enumerate(fh, start=2):
            for tok in line.split():
                try:
                    values.append(float(tok))
                except ValueError as exc:
                    raise ValueError(f"{path}: line {lineno}: bad value {tok!r}") from exc
    expected = int(np.prod(dims, dtype=np.int64))
    if len(values) != expected:
        raise ValueError(f"{path}: expected {expected} values for dims {dims}, got {len(values)}")
    return np.array(values).reshape(dims)
