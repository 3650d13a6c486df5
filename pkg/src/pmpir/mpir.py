"""Multi-record private retrieval over product-matrix coded storage.

Node ``i`` receives ``Q_i = U + sum_u V[i, u] @ E[f_u]`` where ``U`` is a
uniformly random ``d x (m*alpha)`` matrix, ``E[f]`` selects the ``alpha``
columns of record ``f`` and ``V[i, u]`` is a ``d x alpha`` 0/1 matrix that
says which stored symbol of the ``u``-th desired record the node leaks into
each subquery. Since ``U`` is a one-time pad on every query, no single node
learns which records were asked for. The answers are ``A_i = Q_i @ C_i^T``.

Three retrieval patterns are provided:

* ``MSR_A``: identity blocks, ``d = alpha``, ``n = p*k + 2k - 2``.
* ``MSR_B``: cyclically shifted ``[I; 0]`` blocks, ``d = k``,
  ``n = (p + 2)(k - 1)`` with ``p <= 2k - 2``.
* ``MBR``: identity blocks on an MBR code, ``d = alpha = r``, ``n = p*k + r``.
"""

import enum
import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    DecodeError,
    NodeStateError,
    NotDecodableError,
    ParameterError,
    RankDeficientError,
    ShapeError,
    SingularMatrixError,
    InconsistentSystemError,
)
from .field import PrimeField
from .linalg import Mat, left_nullspace, mat_inv, solve
from .pmcode import CodeFamily, CodeParams, derive_params, generator_matrix, recover

PRIVACY_ENUMERATION_LIMIT = 10**6


class SchemeId(enum.Enum):
    MSR_A = "msr-a"
    MSR_B = "msr-b"
    MBR = "mbr"

    @property
    def family(self):
        return CodeFamily.MBR if self is SchemeId.MBR else CodeFamily.MSR


class SchemeConstraintError(ParameterError):
    pass


def scheme_n(scheme: SchemeId, k: int, p: int, r: int | None = None) -> int:
    if scheme is SchemeId.MSR_A:
        return p * k + 2 * k - 2
    if scheme is SchemeId.MSR_B:
        return (p + 2) * (k - 1)
    return p * k + (k if r is None else r)


def scheme_params(scheme: SchemeId, k: int, p: int, r: int | None = None) -> CodeParams:
    """Code parameters the given scheme needs to retrieve ``p`` records."""
    scheme = SchemeId(scheme)
    if p < 1:
        raise SchemeConstraintError(f"need at least one desired record, got p={p}")
    if scheme is SchemeId.MSR_B and p > 2 * k - 2:
        raise SchemeConstraintError(
            f"MSR_B requires p <= 2k-2 = {2 * k - 2}, got p={p}; larger p still decodes "
            "but no longer meets the storage/download trade-off with equality"
        )
    if scheme is SchemeId.MBR:
        r = k if r is None else r
        return derive_params(CodeFamily.MBR, k, scheme_n(scheme, k, p, r), r)
    return derive_params(CodeFamily.MSR, k, scheme_n(scheme, k, p))


def scheme_d(scheme: SchemeId, params: CodeParams) -> int:
    return params.k if scheme is SchemeId.MSR_B else params.alpha


def infer_scheme(params: CodeParams, p: int) -> SchemeId:
    """The scheme whose node count matches a stored code for ``p`` desired records."""
    if params.family is CodeFamily.MBR:
        return SchemeId.MBR
    for s in (SchemeId.MSR_A, SchemeId.MSR_B):
        if scheme_n(s, params.k, p) == params.n:
            return s
    raise SchemeConstraintError(
        f"no MSR scheme retrieves p={p} records from n={params.n}, k={params.k}"
    )


# ---------------------------------------------------------------------------
# patterns and queries
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RetrievalPattern:
    scheme: SchemeId
    n: int
    alpha: int
    p: int
    d: int
    v: dict  # (node, slot) -> d x alpha 0/1 array; absent blocks are zero

    def block(self, node, slot):
        blk = self.v.get((node, slot))
        if blk is None:
            return np.zeros((self.d, self.alpha), dtype=np.int64)
        return blk

    def truncated(self, d):
        """Same pattern keeping only the first ``d`` subqueries."""
        return RetrievalPattern(self.scheme, self.n, self.alpha, self.p, d,
                                {key: blk[:d].copy() for key, blk in self.v.items()})


def _check_pattern(pattern: RetrievalPattern):
    for (node, slot), blk in pattern.v.items():
        if blk.shape != (pattern.d, pattern.alpha):
            raise ShapeError(f"V block {(node, slot)} has shape {blk.shape}")
        if np.any((blk != 0) & (blk != 1)):
            raise ValueError(f"V block {(node, slot)} is not binary")
        if np.any(blk.sum(axis=0) > 1) or np.any(blk.sum(axis=1) > 1):
            raise ValueError(f"V block {(node, slot)} has more than one 1 in a row or column")


def make_pattern(scheme, params: CodeParams, p: int) -> RetrievalPattern:
    scheme = SchemeId(scheme)
    if params.family is not scheme.family:
        raise SchemeConstraintError(f"{scheme.name} needs a {scheme.family.value} code")
    if scheme is SchemeId.MSR_B and p > 2 * params.k - 2:
        raise SchemeConstraintError(
            f"MSR_B requires p <= 2k-2 = {2 * params.k - 2}, got p={p}; larger p still decodes "
            "but no longer meets the storage/download trade-off with equality"
        )
    expected_n = scheme_n(scheme, params.k, p, params.r)
    if params.n != expected_n:
        raise SchemeConstraintError(
            f"{scheme.name} with k={params.k}, p={p} needs n={expected_n}, code has n={params.n}"
        )
    k, alpha = params.k, params.alpha
    d = scheme_d(scheme, params)
    v = {}
    if scheme is SchemeId.MSR_B:
        first = np.vstack([np.eye(k - 1, dtype=np.int64), np.zeros((1, k - 1), dtype=np.int64)])
        for u in range(p):
            for j in range(k):
                v[(u * k + j, u)] = np.roll(first, j, axis=0)
    else:
        for u in range(p):
            for j in range(k):
                v[(u * k + j, u)] = np.eye(alpha, dtype=np.int64)
    pattern = RetrievalPattern(scheme, params.n, alpha, p, d, v)
    _check_pattern(pattern)
    return pattern


def label_table(pattern: RetrievalPattern, desired, m) -> np.ndarray:
    """``(m*alpha) x n`` grid of subquery labels (1-based, 0 = not retrieved)."""
    desired = normalize_desired(desired, m, pattern.p)
    a = pattern.alpha
    table = np.zeros((m * a, pattern.n), dtype=np.int64)
    for (node, slot), blk in pattern.v.items():
        f = desired[slot]
        for t, b in zip(*np.nonzero(blk)):
            table[f * a + b, node] = t + 1
    return table


def normalize_desired(desired, m, p=None):
    idx = [int(f) for f in desired]
    if len(set(idx)) != len(idx):
        raise ValueError(f"duplicate desired records {idx}")
    if any(not 0 <= f < m for f in idx):
        raise IndexError(f"desired records {idx} out of range for m={m}")
    if p is not None and len(idx) != p:
        raise ValueError(f"pattern retrieves {p} records, {len(idx)} requested")
    return tuple(sorted(idx))


def query_offset(pattern: RetrievalPattern, desired, m, node) -> np.ndarray:
    """``sum_u V[node, u] @ E[f_u]`` for sorted desired records."""
    a = pattern.alpha
    off = np.zeros((pattern.d, m * a), dtype=np.int64)
    for slot, f in enumerate(desired):
        off[:, f * a:(f + 1) * a] += pattern.block(node, slot)
    return off


@dataclass(frozen=True, eq=False)
class QueryPlan:
    u_matrix: np.ndarray
    desired: tuple
    queries: tuple
    pattern: RetrievalPattern
    m: int
    field: PrimeField
    seed: object = None

    def to_bytes(self):
        return self.u_matrix.tobytes() + b"".join(q.tobytes() for q in self.queries)


def gen_queries(pattern: RetrievalPattern, desired, m, field: PrimeField, seed=None) -> QueryPlan:
    """Sample ``U`` and build every node's query.

    ``seed`` is an int (recorded on the plan) or a ready ``numpy`` Generator.
    """
    desired = normalize_desired(desired, m, pattern.p)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = field.random(rng, (pattern.d, m * pattern.alpha))
    queries = tuple(
        (u + query_offset(pattern, desired, m, i)) % field.q for i in range(pattern.n)
    )
    for qm in queries:
        qm.flags.writeable = False
    u.flags.writeable = False
    recorded = None if isinstance(seed, np.random.Generator) else seed
    return QueryPlan(u, desired, queries, pattern, m, field, recorded)


# ---------------------------------------------------------------------------
# answering
# ---------------------------------------------------------------------------

def answer(node_row, query, field: PrimeField) -> np.ndarray:
    """``Q @ C_i^T`` for one node."""
    row = np.asarray(node_row, dtype=np.int64).reshape(-1, 1)
    qm = np.asarray(query, dtype=np.int64)
    if qm.shape[1] != row.shape[0]:
        raise ShapeError(f"query has {qm.shape[1]} columns, node stores {row.shape[0]} symbols")
    return (Mat(qm, field) @ Mat(row, field)).a[:, 0]


@dataclass(frozen=True, eq=False)
class AnswerSet:
    answers: tuple
    downloaded_symbols: int


def answer_all(edb, plan: QueryPlan) -> AnswerSet:
    """Every node answers its query; a dead node raises."""
    if plan.pattern.n != edb.n or plan.m != edb.m:
        raise ShapeError("query plan does not match the stored database")
    answers = []
    for i in range(edb.n):
        if not edb.alive[i]:
            raise NodeStateError(f"node {i} is dead and cannot answer")
        answers.append(answer(edb.read_node(i), plan.queries[i], edb.field))
    return AnswerSet(tuple(answers), sum(a.size for a in answers))


# ---------------------------------------------------------------------------
# structured decoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubqueryTrace:
    interference_nodes: tuple
    # (desired record, node, column in the node's full row) -> symbol
    extracted: dict


def interference_nodes(pattern: RetrievalPattern, t: int) -> tuple:
    """Nodes whose subquery ``t`` carries no desired symbol."""
    busy = set()
    for (node, _), blk in pattern.v.items():
        if np.any(blk[t]):
            busy.add(node)
    return tuple(i for i in range(pattern.n) if i not in busy)


def decode_with_trace(plan: QueryPlan, answers: AnswerSet, enc, params: CodeParams):
    pattern = plan.pattern
    if pattern.d != scheme_d(pattern.scheme, params):
        raise DecodeError(
            f"structured decoding expects d={scheme_d(pattern.scheme, params)}, plan has d={pattern.d}"
        )
    if len(answers.answers) != params.n:
        raise DecodeError(f"need answers from all {params.n} nodes")
    field = enc.field
    q = field.q
    a = params.alpha
    A = np.vstack([np.asarray(x, dtype=np.int64) for x in answers.answers])
    got = {}  # (slot, node, b) -> symbol
    traces = []
    for t in range(pattern.d):
        inter = interference_nodes(pattern, t)
        if len(inter) != params.r:
            raise DecodeError(f"subquery {t} has {len(inter)} interference rows, need r={params.r}")
        try:
            psi_inv = mat_inv(enc.psi.select_rows(inter))
        except SingularMatrixError as exc:
            raise DecodeError(f"interference block for subquery {t} is singular") from exc
        interference = (psi_inv @ Mat(A[list(inter), t].reshape(-1, 1), field)).a[:, 0]
        residual = (A[:, t] - (enc.psi @ Mat(interference.reshape(-1, 1), field)).a[:, 0]) % q
        extracted = {}
        for (node, slot), blk in pattern.v.items():
            cols = np.nonzero(blk[t])[0]
            if cols.size:
                b = int(cols[0])
                got[(slot, node, b)] = int(residual[node])
                extracted[(plan.desired[slot], node, plan.desired[slot] * a + b)] = int(residual[node])
        traces.append(SubqueryTrace(inter, extracted))
    records = []
    for slot in range(pattern.p):
        nodes = sorted({node for (node, s) in pattern.v if s == slot})
        rows = []
        for node in nodes:
            row = [got.get((slot, node, b)) for b in range(a)]
            if None in row:
                raise DecodeError(f"node {node} row of desired slot {slot} incomplete after decoding")
            rows.append((node, np.asarray(row, dtype=np.int64)))
        try:
            records.append(recover(params, enc, rows))
        except (InconsistentSystemError, RankDeficientError) as exc:
            raise DecodeError(f"recovery of desired slot {slot} failed: {exc}") from exc
    return records, traces


def decode(plan: QueryPlan, answers: AnswerSet, enc, params: CodeParams):
    """Desired records, in sorted desired-index order."""
    return decode_with_trace(plan, answers, enc, params)[0]


# ---------------------------------------------------------------------------
# generic decodability oracle
# ---------------------------------------------------------------------------

def decodability_system(plan: QueryPlan, answers: AnswerSet, enc, params: CodeParams):
    """Coefficient matrix and right-hand side of the full retrieval system.

    Unknown order: ``z[i, j] = C_i . U_j`` for node ``i`` and subquery ``j``
    (``n*d`` of them), then the code matrix of each desired record
    flattened row-major (``p * n * alpha``).
    """
    pattern = plan.pattern
    n, d, a, p = params.n, pattern.d, params.alpha, pattern.p
    q = enc.field.q
    nz = n * d
    unknowns = nz + p * n * a

    def z(i, j):
        return i * d + j

    def c(u, i, b):
        return nz + u * n * a + i * a + b

    eqs, rhs = [], []
    # answers
    for i in range(n):
        for j in range(d):
            row = np.zeros(unknowns, dtype=np.int64)
            row[z(i, j)] = 1
            for u in range(p):
                for b in np.nonzero(pattern.block(i, u)[j])[0]:
                    row[c(u, i, int(b))] = 1
            eqs.append(row)
            rhs.append(int(answers.answers[i][j]) % q)
    # each column z[:, j] lies in the column space of Psi
    parity = left_nullspace(enc.psi).a
    for j in range(d):
        for prow in parity:
            row = np.zeros(unknowns, dtype=np.int64)
            for i in range(n):
                row[z(i, j)] = prow[i]
            eqs.append(row)
            rhs.append(0)
    # each desired code matrix is a codeword
    code_parity = left_nullspace(generator_matrix(params, enc)).a
    for u in range(p):
        for hrow in code_parity:
            row = np.zeros(unknowns, dtype=np.int64)
            row[nz + u * n * a: nz + (u + 1) * n * a] = hrow
            eqs.append(row)
            rhs.append(0)
    return Mat(np.vstack(eqs), enc.field), np.asarray(rhs, dtype=np.int64)


def decodability_oracle(plan: QueryPlan, answers: AnswerSet, enc, params: CodeParams):
    """Solve the whole retrieval system generically; desired records if unique.

    Raises :class:`NotDecodableError` when the answers do not pin the desired
    records down.
    """
    system, rhs = decodability_system(plan, answers, enc, params)
    try:
        sol = solve(system, rhs)
    except RankDeficientError as exc:
        raise NotDecodableError(f"retrieval system has no unique solution: {exc}") from exc
    except InconsistentSystemError as exc:
        raise NotDecodableError(f"retrieval system is inconsistent: {exc}") from exc
    n, d, a = params.n, plan.pattern.d, params.alpha
    g = generator_matrix(params, enc)
    records = []
    for u in range(plan.pattern.p):
        cw = sol[n * d + u * n * a: n * d + (u + 1) * n * a]
        records.append(solve(g, cw))
    return records


# ---------------------------------------------------------------------------
# privacy
# ---------------------------------------------------------------------------

def privacy_bijection_check(pattern: RetrievalPattern, node: int, m: int, field: PrimeField,
                            query_fn=None, sampled=None, seed=0) -> bool:
    """Whether ``U -> Q_node`` is a bijection for every desired set.

    With every desired set producing a bijection the query a node sees is
    uniform whatever was requested. ``query_fn(U, desired)`` overrides the
    query map (used for negative controls). Enumeration covers all ``q**(d*m*alpha)``
    matrices; above :data:`PRIVACY_ENUMERATION_LIMIT` pass ``sampled`` to
    check that many random ``U`` round-trip instead.
    """
    shape = (pattern.d, m * pattern.alpha)
    size = shape[0] * shape[1]
    q = field.q
    if query_fn is None:
        def query_fn(u, desired):
            return (u + query_offset(pattern, desired, m, node)) % q
    desired_sets = list(itertools.combinations(range(m), pattern.p))
    total = q ** size
    if total > PRIVACY_ENUMERATION_LIMIT:
        if sampled is None:
            raise ValueError(
                f"{total} query matrices exceed the enumeration limit; pass sampled=N"
            )
        rng = np.random.default_rng(seed)
        for _ in range(sampled):
            desired = desired_sets[rng.integers(len(desired_sets))]
            u = field.random(rng, shape)
            qm = np.asarray(query_fn(u, desired)) % q
            if not np.array_equal((qm - query_offset(pattern, desired, m, node)) % q, u):
                return False
        return True
    # every U as a row of base-q digits
    codes = np.arange(total, dtype=np.int64)
    digits = (codes[:, None] // q ** np.arange(size, dtype=np.int64)[None, :]) % q
    for desired in desired_sets:
        images = set()
        for flat in digits:
            qm = np.asarray(query_fn(flat.reshape(shape), desired), dtype=np.int64) % q
            images.add(qm.tobytes())
        if len(images) != total:
            return False
    return True


# ---------------------------------------------------------------------------
# costs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    so: Fraction
    cpop: Fraction
    rr: Fraction

    def to_dict(self):
        return {"so": fraction_str(self.so), "cpop": fraction_str(self.cpop), "rr": fraction_str(self.rr)}


def fraction_str(f):
    f = Fraction(f)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def metrics(params: CodeParams, d: int, p: int, m: int = 1) -> Metrics:
    """Storage overhead, download cost per desired symbol, and repair ratio."""
    n, a, ell, r = params.n, params.alpha, params.ell, params.r
    return Metrics(
        so=Fraction(n * m * a, m * ell),
        cpop=Fraction(d * n, p * ell),
        rr=Fraction(m * r, m * a),
    )


@dataclass(frozen=True)
class TradeoffResult:
    bound_holds: bool
    identity: Fraction


def tradeoff_check(params: CodeParams, d: int, p: int) -> TradeoffResult:
    """``p*k*alpha <= (n - r)*d`` and the value ``cPoP * (n - r) / (k * SO)``."""
    met = metrics(params, d, p)
    holds = p * params.k * params.alpha <= (params.n - params.r) * d
    identity = met.cpop * Fraction(params.n - params.r, params.k) / met.so
    return TradeoffResult(holds, identity)
