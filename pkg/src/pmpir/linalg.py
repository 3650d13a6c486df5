"""Dense matrices over a prime field.

:class:`Mat` wraps a read-only ``int64`` array of residues together with its
:class:`~pmpir.field.PrimeField`. Products and eliminations go through the
kernels in :mod:`pmpir._accel`.
"""

import numpy as np

from . import _accel
from .errors import (
    InconsistentSystemError,
    ModulusMismatchError,
    RankDeficientError,
    ShapeError,
    SingularMatrixError,
)
from .field import FieldElement, PrimeField


class Mat:
    """Immutable matrix over GF(q)."""

    __slots__ = ("a", "field")

    def __init__(self, entries, field: PrimeField):
        if isinstance(entries, Mat):
            entries = entries.a
        arr = np.asarray(entries)
        if arr.dtype == object or not np.issubdtype(arr.dtype, np.integer):
            arr = np.asarray([[int(x) for x in row] for row in np.atleast_2d(arr)], dtype=object)
            arr = np.mod(arr, field.q).astype(np.int64)
        else:
            arr = np.mod(arr.astype(np.int64), field.q)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
        if arr.ndim != 2:
            raise ShapeError(f"matrix entries must be 2-D, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self.a = arr
        self.field = field

    @classmethod
    def identity(cls, size, field):
        return cls(np.eye(size, dtype=np.int64), field)

    @classmethod
    def zeros(cls, rows, cols, field):
        return cls(np.zeros((rows, cols), dtype=np.int64), field)

    @property
    def shape(self):
        return self.a.shape

    @property
    def rows(self):
        return self.a.shape[0]

    @property
    def cols(self):
        return self.a.shape[1]

    @property
    def q(self):
        return self.field.q

    @property
    def T(self):
        return transpose(self)

    def entry(self, i, j) -> FieldElement:
        return FieldElement(int(self.a[i, j]), self.field)

    def row(self, i) -> np.ndarray:
        return self.a[i]

    def select_rows(self, idx):
        return Mat(self.a[list(idx)], self.field)

    def select_cols(self, idx):
        return Mat(self.a[:, list(idx)], self.field)

    def tolist(self):
        return self.a.tolist()

    def __matmul__(self, other):
        if isinstance(other, Mat):
            return mat_mul(self, other)
        return NotImplemented

    def __add__(self, other):
        _check_compatible(self, other)
        if self.shape != other.shape:
            raise ShapeError(f"cannot add {self.shape} and {other.shape}")
        return Mat((self.a + other.a) % self.q, self.field)

    def __sub__(self, other):
        _check_compatible(self, other)
        if self.shape != other.shape:
            raise ShapeError(f"cannot subtract {self.shape} and {other.shape}")
        return Mat((self.a - other.a) % self.q, self.field)

    def __eq__(self, other):
        if not isinstance(other, Mat):
            return NotImplemented
        return (
            self.q == other.q
            and self.shape == other.shape
            and bool(np.array_equal(self.a, other.a))
        )

    def __hash__(self):
        return hash((self.q, self.shape, self.a.tobytes()))

    def __repr__(self):
        return f"Mat(GF({self.q}), {self.a.tolist()})"


def _check_compatible(a: Mat, b: Mat):
    if a.q != b.q:
        raise ModulusMismatchError(f"GF({a.q}) matrix combined with GF({b.q}) matrix")


def mat_mul(a: Mat, b: Mat) -> Mat:
    _check_compatible(a, b)
    if a.cols != b.rows:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return Mat(_accel.matmul_mod(a.a, b.a, a.q), a.field)


def transpose(a: Mat) -> Mat:
    return Mat(a.a.T, a.field)


def rref(a: Mat):
    """Reduced row echelon form and the pivot columns."""
    reduced, pivots = _accel.rref_mod(a.a, a.q)
    return Mat(reduced, a.field), [int(p) for p in pivots]


def rank(a: Mat) -> int:
    if a.a.size == 0:
        return 0
    _, pivots = _accel.rref_mod(a.a, a.q)
    return len(pivots)


def mat_inv(a: Mat) -> Mat:
    if a.rows != a.cols:
        raise ShapeError(f"cannot invert non-square {a.shape} matrix")
    size = a.rows
    aug = np.hstack([a.a, np.eye(size, dtype=np.int64)])
    reduced, pivots = _accel.rref_mod(aug, a.q, size)
    if len(pivots) < size:
        raise SingularMatrixError(f"matrix is singular (rank {len(pivots)} < {size})")
    return Mat(reduced[:, size:], a.field)


def solve(a: Mat, y):
    """Unique ``x`` with ``a @ x = y``.

    ``y`` may be a 1-D vector or a :class:`Mat` of right-hand sides; the
    result has the same kind. Over-determined systems are accepted when every
    equation is satisfied exactly.
    """
    vector = not isinstance(y, Mat)
    rhs = np.asarray(y, dtype=np.int64).reshape(-1, 1) if vector else y.a
    if isinstance(y, Mat):
        _check_compatible(a, y)
    if rhs.shape[0] != a.rows:
        raise ShapeError(f"right-hand side has {rhs.shape[0]} rows, matrix has {a.rows}")
    rhs = np.mod(rhs, a.q)
    unknowns = a.cols
    aug = np.hstack([a.a, rhs])
    reduced, pivots = _accel.rref_mod(aug, a.q, unknowns)
    r = len(pivots)
    if np.any(reduced[r:, unknowns:]):
        raise InconsistentSystemError("linear system is inconsistent")
    if r < unknowns:
        raise RankDeficientError(
            f"linear system has {unknowns} unknowns but rank {r}; solution is not unique"
        )
    x = np.zeros((unknowns, rhs.shape[1]), dtype=np.int64)
    x[pivots] = reduced[:r, unknowns:]
    if vector:
        return x[:, 0]
    return Mat(x, a.field)


def left_nullspace(a: Mat) -> Mat:
    """Rows spanning ``{p : p @ a = 0}``; shape ``(a.rows - rank, a.rows)``."""
    return nullspace(transpose(a))


def nullspace(a: Mat) -> Mat:
    """Rows spanning ``{x : a @ x = 0}``."""
    q = a.q
    cols = a.cols
    reduced, pivots = _accel.rref_mod(a.a, q)
    pivots = [int(p) for p in pivots]
    free = [c for c in range(cols) if c not in set(pivots)]
    basis = np.zeros((len(free), cols), dtype=np.int64)
    for k, f in enumerate(free):
        basis[k, f] = 1
        for i, p in enumerate(pivots):
            basis[k, p] = (-reduced[i, f]) % q
    return Mat(basis.reshape(len(free), cols), a.field)


def vandermonde(xs, cols: int, field: PrimeField) -> Mat:
    """Row ``i`` is ``(1, x_i, x_i^2, ..., x_i^(cols-1))``."""
    pts = [int(x) % field.q for x in xs]
    if len(set(pts)) != len(pts):
        raise ValueError(f"evaluation points are not pairwise distinct mod {field.q}: {pts}")
    if cols < 1:
        raise ShapeError("vandermonde needs at least one column")
    out = np.empty((len(pts), cols), dtype=np.int64)
    for i, x in enumerate(pts):
        v = 1
        for j in range(cols):
            out[i, j] = v
            v = (v * x) % field.q
    return Mat(out, field)
