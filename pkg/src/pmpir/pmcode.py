"""Product-matrix MSR and MBR regenerating codes.

A record of ``ell`` symbols is packed into a structured message matrix
``M`` and stored as ``C = Psi @ M``; node ``i`` keeps row ``i`` of ``C``.
Any ``k`` rows recover the record and any ``r`` surviving nodes can rebuild
a lost row exactly, each sending one symbol per record.
"""

import enum
import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from .errors import EncodingMatrixError, ParameterError, RepairError, ShapeError
from .field import PrimeField, next_prime
from .linalg import Mat, mat_inv, mat_mul, rank, solve, vandermonde

# Above this many nodes the r-subset conditions are sampled rather than enumerated.
EXHAUSTIVE_CHECK_MAX_N = 12
SAMPLED_SUBSETS = 500


class CodeFamily(enum.Enum):
    MSR = "MSR"
    MBR = "MBR"


@dataclass(frozen=True)
class CodeParams:
    family: CodeFamily
    n: int
    k: int
    r: int
    alpha: int
    beta: int
    ell: int

    def __post_init__(self):
        n, k, r, a, b, ell = self.n, self.k, self.r, self.alpha, self.beta, self.ell
        if min(n, k, r, a, b, ell) < 1:
            raise ParameterError(f"all parameters must be positive: {self.as_tuple()}")
        if self.family is CodeFamily.MSR:
            if k < 2:
                raise ParameterError("MSR codes need k >= 2")
            expect = (2 * k - 2, k - 1, 1, k * (k - 1))
            if (r, a, b, ell) != expect:
                raise ParameterError(
                    f"MSR with k={k} requires (r, alpha, beta, ell) = {expect}, got {(r, a, b, ell)}"
                )
            if n <= r:
                raise ParameterError(f"MSR needs n > r = 2k-2 = {r}, got n={n}")
        else:
            if not k <= r < n:
                raise ParameterError(f"MBR needs k <= r < n, got k={k}, r={r}, n={n}")
            expect = (r, 1, k * (2 * r - k + 1) // 2)
            if (a, b, ell) != expect:
                raise ParameterError(
                    f"MBR with k={k}, r={r} requires (alpha, beta, ell) = {expect}, got {(a, b, ell)}"
                )
        if ell > capacity_bound(k, r, a, b):
            raise ParameterError(f"ell={ell} exceeds the regenerating-code capacity bound")

    @property
    def B(self):
        return self.ell

    def as_tuple(self):
        return (self.n, self.k, self.r, self.alpha, self.beta, self.ell)

    def __str__(self):
        return f"{self.family.value}{self.as_tuple()}"


def capacity_bound(k, r, alpha, beta):
    """``sum_{i<k} min(alpha, (r - i) * beta)``: the most symbols such a code can hold."""
    return sum(min(alpha, (r - i) * beta) for i in range(k))


def derive_params(family, k, n, r=None) -> CodeParams:
    family = CodeFamily(family) if not isinstance(family, CodeFamily) else family
    if family is CodeFamily.MSR:
        return CodeParams(family, n, k, 2 * k - 2, k - 1, 1, k * (k - 1))
    if r is None:
        raise ParameterError("MBR parameters need r")
    if r < k:
        raise ParameterError(f"MBR needs r >= k, got r={r} < k={k}")
    return CodeParams(family, n, k, r, r, 1, k * (2 * r - k + 1) // 2)


def _exact(num, den, what):
    f = Fraction(num, den)
    if f.denominator != 1:
        raise ParameterError(f"{what} = {f} is not an integer")
    return f.numerator


def msr_point(ell, k, r):
    """``(alpha, beta)`` at the minimum-storage point."""
    if not k <= r:
        raise ParameterError("need k <= r")
    return _exact(ell, k, "alpha"), _exact(ell, k * (r - k + 1), "beta")


def mbr_point(ell, k, r):
    """``(alpha, beta)`` at the minimum-bandwidth point."""
    if not k <= r:
        raise ParameterError("need k <= r")
    den = k * (2 * r - k + 1)
    return _exact(2 * r * ell, den, "alpha"), _exact(2 * ell, den, "beta")


# ---------------------------------------------------------------------------
# Encoding matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EncodingMatrix:
    psi: Mat
    family: CodeFamily
    phi: Mat
    lam: tuple | None  # MSR diagonal of Lambda
    delta: Mat | None  # MBR trailing block
    repair_capable: bool
    xs: tuple | None = None

    @property
    def field(self):
        return self.psi.field

    @property
    def n(self):
        return self.psi.rows


def _subsets(n, size, seed=0):
    if n <= EXHAUSTIVE_CHECK_MAX_N or comb(n, size) <= SAMPLED_SUBSETS:
        yield from itertools.combinations(range(n), size)
        return
    rng = np.random.default_rng(seed)
    for _ in range(SAMPLED_SUBSETS):
        yield tuple(sorted(rng.choice(n, size=size, replace=False).tolist()))


def _all_subsets_full_rank(m: Mat, size: int) -> bool:
    return all(rank(m.select_rows(s)) == min(size, m.cols) for s in _subsets(m.rows, size))


def _decompose(params: CodeParams, psi: Mat, xs=None) -> EncodingMatrix:
    n, k, r, alpha = params.n, params.k, params.r, params.alpha
    if psi.shape != (n, r):
        raise EncodingMatrixError(f"encoding matrix must be {n}x{r}, got {psi.shape}")
    if not _all_subsets_full_rank(psi, r):
        raise EncodingMatrixError("some r rows of the encoding matrix are linearly dependent")
    q = psi.q
    if params.family is CodeFamily.MSR:
        phi = psi.select_cols(range(alpha))
        tail = psi.a[:, alpha:]
        lam = []
        for i in range(n):
            nz = np.nonzero(phi.a[i])[0]
            if nz.size == 0:
                raise EncodingMatrixError(f"row {i} of Phi is zero")
            j = int(nz[0])
            li = (int(tail[i, j]) * pow(int(phi.a[i, j]), -1, q)) % q
            if not np.array_equal(tail[i], (phi.a[i] * li) % q):
                raise EncodingMatrixError(f"row {i} is not of the form [phi, lambda*phi]")
            lam.append(li)
        if not _all_subsets_full_rank(phi, k - 1):
            raise EncodingMatrixError("some k-1 rows of Phi are linearly dependent")
        capable = len(set(lam)) == n
        return EncodingMatrix(psi, params.family, phi, tuple(lam), None, capable, xs)
    phi = psi.select_cols(range(k))
    delta = psi.select_cols(range(k, r))
    if not _all_subsets_full_rank(phi, k):
        raise EncodingMatrixError("some k rows of Phi are linearly dependent")
    return EncodingMatrix(psi, params.family, phi, None, delta, True, xs)


def build_encoding_matrix(params: CodeParams, field: PrimeField, xs=None) -> EncodingMatrix:
    """Vandermonde encoding matrix on points ``xs`` (default ``1..n``)."""
    if field.q <= params.n:
        raise EncodingMatrixError(f"GF({field.q}) has too few elements for n={params.n} nodes")
    if xs is None:
        xs = range(1, params.n + 1)
    xs = tuple(int(x) % field.q for x in xs)
    if len(xs) != params.n:
        raise EncodingMatrixError(f"need {params.n} evaluation points, got {len(xs)}")
    if len(set(xs)) != len(xs):
        raise EncodingMatrixError(f"evaluation points are not distinct: {xs}")
    psi = vandermonde(xs, params.r, field)
    return _decompose(params, psi, xs)


def encoding_matrix_from_psi(params: CodeParams, psi: Mat) -> EncodingMatrix:
    """Rebuild the structured view of a stored encoding matrix."""
    return _decompose(params, psi)


def default_modulus(params: CodeParams) -> int:
    """Smallest prime that makes the default Vandermonde matrix repair capable."""
    n = params.n
    if params.family is CodeFamily.MBR:
        return next_prime(n)
    q = next_prime(n * n)
    while len({pow(x, params.alpha, q) for x in range(1, n + 1)}) != n:
        q = next_prime(q)
    return q


# ---------------------------------------------------------------------------
# Message matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MessageMatrix:
    m: Mat
    family: CodeFamily


def _sym_from_upper(values, size):
    out = np.zeros((size, size), dtype=np.int64)
    iu = np.triu_indices(size)
    out[iu] = values
    out.T[iu] = values
    return out


def _as_residues(record, field):
    return np.asarray([int(x) for x in record], dtype=np.int64) % field.q


def pack_message(record, params: CodeParams, field: PrimeField) -> MessageMatrix:
    rec = _as_residues(record, field)
    if rec.size != params.ell:
        raise ShapeError(f"record has {rec.size} symbols, code stores {params.ell}")
    if params.family is CodeFamily.MSR:
        a = params.alpha
        t = a * (a + 1) // 2
        m = np.vstack([_sym_from_upper(rec[:t], a), _sym_from_upper(rec[t:], a)])
    else:
        k, r = params.k, params.r
        t = k * (k + 1) // 2
        m = np.zeros((r, r), dtype=np.int64)
        m[:k, :k] = _sym_from_upper(rec[:t], k)
        s2 = rec[t:].reshape(k, r - k)
        m[:k, k:] = s2
        m[k:, :k] = s2.T
    return MessageMatrix(Mat(m, field), params.family)


def unpack_message(msg: MessageMatrix, params: CodeParams) -> np.ndarray:
    m = msg.m.a
    if params.family is CodeFamily.MSR:
        a = params.alpha
        if m.shape != (2 * a, a):
            raise ShapeError(f"MSR message matrix must be {2 * a}x{a}, got {m.shape}")
        s1, s2 = m[:a], m[a:]
        if not (np.array_equal(s1, s1.T) and np.array_equal(s2, s2.T)):
            raise ValueError("MSR message blocks must be symmetric")
        iu = np.triu_indices(a)
        return np.concatenate([s1[iu], s2[iu]])
    k, r = params.k, params.r
    if m.shape != (r, r):
        raise ShapeError(f"MBR message matrix must be {r}x{r}, got {m.shape}")
    if not np.array_equal(m, m.T) or np.any(m[k:, k:]):
        raise ValueError("MBR message matrix must be symmetric with a zero lower-right block")
    return np.concatenate([m[:k, :k][np.triu_indices(k)], m[:k, k:].reshape(-1)])


def encode(enc: EncodingMatrix, msg: MessageMatrix) -> Mat:
    if enc.psi.cols != msg.m.rows:
        raise ShapeError(f"encoding matrix {enc.psi.shape} does not fit message {msg.m.shape}")
    return mat_mul(enc.psi, msg.m)


def stripe(record, ell):
    """Split a long record into zero-padded chunks of ``ell`` symbols."""
    rec = [int(x) for x in record]
    if not rec:
        return [[0] * ell]
    chunks = []
    for s in range(0, len(rec), ell):
        chunk = rec[s:s + ell]
        chunks.append(chunk + [0] * (ell - len(chunk)))
    return chunks


# ---------------------------------------------------------------------------
# Recovery and repair
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _generator_cached(params: CodeParams, q: int, psi_bytes: bytes):
    field = PrimeField(q)
    psi = np.frombuffer(psi_bytes, dtype=np.int64).reshape(params.n, params.r)
    enc_psi = Mat(psi, field)
    cols = []
    for t in range(params.ell):
        unit = np.zeros(params.ell, dtype=np.int64)
        unit[t] = 1
        cols.append(mat_mul(enc_psi, pack_message(unit, params, field).m).a.reshape(-1))
    g = np.stack(cols, axis=1)
    g.flags.writeable = False
    return g


def generator_matrix(params: CodeParams, enc: EncodingMatrix) -> Mat:
    """``(n*alpha) x ell`` matrix mapping a record to its flattened code matrix."""
    return Mat(_generator_cached(params, enc.psi.q, enc.psi.a.tobytes()), enc.field)


def recover(params: CodeParams, enc: EncodingMatrix, node_rows) -> np.ndarray:
    """Rebuild a record from ``(node_index, row)`` pairs of at least ``k`` nodes."""
    node_rows = list(node_rows)
    idx = [int(i) for i, _ in node_rows]
    if len(set(idx)) != len(idx):
        raise ValueError(f"duplicate node indices {idx}")
    if len(idx) < params.k:
        raise ValueError(f"need rows from {params.k} nodes, got {len(idx)}")
    g = generator_matrix(params, enc).a
    a = params.alpha
    sel = np.concatenate([np.arange(i * a, (i + 1) * a) for i in idx])
    y = np.concatenate([np.asarray(row, dtype=np.int64).reshape(-1) for _, row in node_rows])
    if y.size != len(idx) * a:
        raise ShapeError(f"each node row must have {a} symbols")
    return solve(Mat(g[sel], enc.field), y)


def repair_target(params: CodeParams, enc: EncodingMatrix, failed: int) -> np.ndarray:
    """Vector each helper projects its row onto when node ``failed`` is rebuilt."""
    if params.family is CodeFamily.MSR:
        return enc.phi.a[failed]
    return enc.psi.a[failed]


def repair_projection(helper_row, target_vec, field: PrimeField) -> int:
    """The single symbol a helper sends: ``helper_row . target_vec``."""
    h = np.asarray(helper_row, dtype=np.int64).reshape(-1)
    t = np.asarray(target_vec, dtype=np.int64).reshape(-1)
    if h.size != t.size:
        raise ShapeError(f"helper row has {h.size} symbols, target vector {t.size}")
    acc = 0
    for x, y in zip(h.tolist(), t.tolist()):
        acc = (acc + x * y) % field.q
    return acc


def repair_reconstruct(params: CodeParams, enc: EncodingMatrix, failed: int, projections):
    """Row of node ``failed`` from ``(helper_index, symbol)`` pairs of ``r`` helpers."""
    if not enc.repair_capable:
        raise RepairError(
            "encoding matrix is not repair capable: the diagonal of Lambda has repeated values"
        )
    projections = list(projections)
    helpers = [int(h) for h, _ in projections]
    if len(helpers) != params.r:
        raise RepairError(f"repair needs exactly r={params.r} helpers, got {len(helpers)}")
    if len(set(helpers)) != len(helpers):
        raise RepairError(f"duplicate helpers {helpers}")
    if failed in helpers:
        raise RepairError(f"failed node {failed} cannot help repair itself")
    if not 0 <= failed < params.n or any(not 0 <= h < params.n for h in helpers):
        raise RepairError("node index out of range")
    field = enc.field
    q = field.q
    y = np.asarray([int(s) for _, s in projections], dtype=np.int64)
    # M @ target, recovered through the invertible r x r block of Psi
    m_t = mat_mul(mat_inv(enc.psi.select_rows(helpers)), Mat(y.reshape(-1, 1), field)).a[:, 0]
    if params.family is CodeFamily.MSR:
        a = params.alpha
        return (m_t[:a] + enc.lam[failed] * m_t[a:]) % q
    return m_t % q
