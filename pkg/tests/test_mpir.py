import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmpir.dbstore import Database, fail_node, ingest
from pmpir.errors import DecodeError, NodeStateError, NotDecodableError, ShapeError
from pmpir.field import PrimeField
from pmpir.mpir import (
    RetrievalPattern,
    SchemeConstraintError,
    SchemeId,
    answer,
    answer_all,
    decodability_oracle,
    decode,
    decode_with_trace,
    gen_queries,
    interference_nodes,
    label_table,
    make_pattern,
    metrics,
    privacy_bijection_check,
    query_offset,
    scheme_d,
    scheme_n,
    scheme_params,
    tradeoff_check,
)
from pmpir.pmcode import build_encoding_matrix, default_modulus

from conftest import build_system

MSR_A_LABELS = [
    [1, 1, 1, 0, 0, 0, 0, 0, 0, 0],
    [2, 2, 2, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 1, 1, 1, 0, 0, 0, 0],
    [0, 0, 0, 2, 2, 2, 0, 0, 0, 0],
    [0] * 10,
    [0] * 10,
]

MSR_B_LABELS = [
    [1, 2, 3, 0, 0, 0, 0, 0],
    [2, 3, 1, 0, 0, 0, 0, 0],
    [0, 0, 0, 1, 2, 3, 0, 0],
    [0, 0, 0, 2, 3, 1, 0, 0],
    [0] * 8,
    [0] * 8,
]


def retrieve(system, desired, seed):
    params, field, enc, db, edb, pattern = system
    plan = gen_queries(pattern, desired, edb.m, field, seed)
    answers = answer_all(edb, plan)
    return plan, answers


def test_scheme_sizes():
    assert scheme_n(SchemeId.MSR_A, 3, 2) == 10
    assert scheme_n(SchemeId.MSR_B, 3, 2) == 8
    assert scheme_n(SchemeId.MBR, 2, 2, 2) == 6
    assert scheme_params(SchemeId.MBR, 2, 2).as_tuple() == (6, 2, 2, 2, 1, 3)
    with pytest.raises(SchemeConstraintError, match="p <= 2k-2"):
        scheme_params(SchemeId.MSR_B, 3, 5)


def test_label_table_example1():
    params = scheme_params(SchemeId.MSR_A, 3, 2)
    pattern = make_pattern(SchemeId.MSR_A, params, 2)
    assert label_table(pattern, [0, 1], 3).tolist() == MSR_A_LABELS


def test_label_table_example2():
    params = scheme_params(SchemeId.MSR_B, 3, 2)
    pattern = make_pattern(SchemeId.MSR_B, params, 2)
    assert pattern.d == 3
    assert label_table(pattern, [0, 1], 3).tolist() == MSR_B_LABELS


@pytest.mark.parametrize("k,p", [(2, 1), (3, 1), (3, 3), (4, 2), (5, 4)])
def test_msr_a_general_block(k, p):
    params = scheme_params(SchemeId.MSR_A, k, p)
    table = label_table(make_pattern(SchemeId.MSR_A, params, p), range(p), p)
    a = k - 1
    for j in range(p):
        block = table[j * a:(j + 1) * a]
        for b in range(a):
            expect = [0] * params.n
            expect[j * k:(j + 1) * k] = [b + 1] * k
            assert block[b].tolist() == expect


@pytest.mark.parametrize("k,p", [(3, 1), (3, 4), (4, 2), (4, 6), (5, 3)])
def test_msr_b_general_block(k, p):
    params = scheme_params(SchemeId.MSR_B, k, p)
    table = label_table(make_pattern(SchemeId.MSR_B, params, p), range(p), p)
    a = k - 1
    for j in range(p):
        for b in range(a):
            expect = [0] * params.n
            for c in range(k):
                expect[j * k + c] = (b + c) % k + 1
            assert table[j * a + b].tolist() == expect


def test_mbr_pattern():
    params = scheme_params(SchemeId.MBR, 2, 2)
    pattern = make_pattern(SchemeId.MBR, params, 2)
    assert (pattern.d, pattern.n) == (2, 6)
    assert interference_nodes(pattern, 0) == (4, 5)


def test_pattern_errors():
    params = scheme_params(SchemeId.MSR_A, 3, 2)
    with pytest.raises(SchemeConstraintError):
        make_pattern(SchemeId.MSR_A, params, 1)
    with pytest.raises(SchemeConstraintError):
        make_pattern(SchemeId.MBR, params, 2)


def test_example1_queries(example1):
    params, field, enc, db, edb, pattern = example1
    plan = gen_queries(pattern, [1, 0], 3, field, 42)
    assert plan.desired == (0, 1)
    u = plan.u_matrix
    eye = np.eye(2, dtype=np.int64)
    zero = np.zeros((2, 2), dtype=np.int64)
    for i in range(10):
        offset = (plan.queries[i] - u) % 13
        if i < 3:
            assert offset.tolist() == np.hstack([eye, zero, zero]).tolist()
        elif i < 6:
            assert offset.tolist() == np.hstack([zero, eye, zero]).tolist()
        else:
            assert not offset.any()


def test_query_errors(example1):
    params, field, enc, db, edb, pattern = example1
    with pytest.raises(ValueError):
        gen_queries(pattern, [0, 0], 3, field, 0)
    with pytest.raises(IndexError):
        gen_queries(pattern, [0, 3], 3, field, 0)
    with pytest.raises(ValueError):
        gen_queries(pattern, [0], 3, field, 0)


def test_query_plan_deterministic(example1):
    params, field, enc, db, edb, pattern = example1
    a = gen_queries(pattern, [0, 2], 3, field, 9)
    b = gen_queries(pattern, [0, 2], 3, field, 9)
    c = gen_queries(pattern, [0, 2], 3, field, 10)
    assert a.to_bytes() == b.to_bytes()
    assert a.to_bytes() != c.to_bytes()
    assert a.seed == 9


def test_empty_pattern_queries_are_u(gf13):
    pattern = RetrievalPattern(SchemeId.MSR_A, 4, 2, 0, 2, {})
    plan = gen_queries(pattern, [], 2, gf13, 1)
    for qm in plan.queries:
        assert np.array_equal(qm, plan.u_matrix)
    assert privacy_bijection_check(pattern, 0, 1, PrimeField(3))


def test_answer_selector_and_zero(gf13):
    row = np.array([5, 7, 11, 2])
    sel = np.array([[0, 0, 1, 0], [1, 0, 0, 0]])
    assert answer(row, sel, gf13).tolist() == [11, 5]
    assert not answer(np.zeros(4), sel, gf13).any()
    with pytest.raises(ShapeError):
        answer(row, np.ones((2, 3)), gf13)


def test_example1_first_answer_equation(example1):
    params, field, enc, db, edb, pattern = example1
    plan, answers = retrieve(example1, [0, 1], 3)
    u1 = plan.u_matrix[0]
    big_m = edb.message  # r x m*alpha
    interference = (big_m @ u1) % 13  # I^1_1 .. I^1_4
    c1_11 = edb.node_rows[0, 0]
    assert answers.answers[0][0] == (c1_11 + interference.sum()) % 13


def test_answer_all_dead_node(example1):
    params, field, enc, db, edb, pattern = example1
    plan = gen_queries(pattern, [0, 1], 3, field, 0)
    fail_node(edb, 3)
    with pytest.raises(NodeStateError):
        answer_all(edb, plan)


@pytest.mark.parametrize("seed", range(5))
def test_example1_decode(example1, seed):
    params, field, enc, db, edb, pattern = example1
    plan, answers = retrieve(example1, [0, 1], seed)
    assert answers.downloaded_symbols == 20
    records, traces = decode_with_trace(plan, answers, enc, params)
    assert [r.tolist() for r in records] == [db.records[0].tolist(), db.records[1].tolist()]
    assert traces[0].interference_nodes == (6, 7, 8, 9)
    assert {node for (_, node, _) in traces[0].extracted} == set(range(6))


def test_example2_subquery1(example2):
    params, field, enc, db, edb, pattern = example2
    plan, answers = retrieve(example2, [0, 1], 0)
    records, traces = decode_with_trace(plan, answers, enc, params)
    assert set(traces[0].extracted) == {(0, 0, 0), (0, 2, 1), (1, 3, 2), (1, 5, 3)}
    assert traces[0].interference_nodes == (1, 4, 6, 7)
    for (rec, node, col), val in traces[0].extracted.items():
        assert val == edb.node_rows[node, col]
    assert answers.downloaded_symbols == 24
    assert [r.tolist() for r in records] == [db.records[0].tolist(), db.records[1].tolist()]


def test_zero_database_decodes_to_zero(gf13):
    params = scheme_params(SchemeId.MBR, 2, 2)
    enc = build_encoding_matrix(params, gf13)
    edb = ingest(Database([[0, 0, 0]] * 3, gf13), params, enc)
    pattern = make_pattern(SchemeId.MBR, params, 2)
    plan = gen_queries(pattern, [0, 2], 3, gf13, 0)
    assert all(not r.any() for r in decode(plan, answer_all(edb, plan), enc, params))


def test_decode_rejects_wrong_d(example1):
    params, field, enc, db, edb, pattern = example1
    short = pattern.truncated(1)
    plan = gen_queries(short, [0, 1], 3, field, 0)
    with pytest.raises(DecodeError):
        decode(plan, answer_all(edb, plan), enc, params)


@pytest.mark.parametrize("seed", range(50))
def test_oracle_agrees_example1(example1, seed):
    params, field, enc, db, edb, pattern = example1
    plan, answers = retrieve(example1, [0, 1], seed)
    a = decode(plan, answers, enc, params)
    b = decodability_oracle(plan, answers, enc, params)
    assert [x.tolist() for x in a] == [y.tolist() for y in b]


def test_oracle_agrees_example2(example2):
    params, field, enc, db, edb, pattern = example2
    plan, answers = retrieve(example2, [0, 2], 5)
    a = decode(plan, answers, enc, params)
    b = decodability_oracle(plan, answers, enc, params)
    assert [x.tolist() for x in a] == [y.tolist() for y in b]


@pytest.mark.parametrize("fixture", ["example1", "example2"])
def test_oracle_rejects_too_few_subqueries(fixture, request):
    params, field, enc, db, edb, pattern = request.getfixturevalue(fixture)
    short = pattern.truncated(pattern.d - 1)
    assert not tradeoff_check(params, short.d, 2).bound_holds
    plan = gen_queries(short, [0, 1], 3, field, 0)
    with pytest.raises(NotDecodableError):
        decodability_oracle(plan, answer_all(edb, plan), enc, params)


def test_privacy_exhaustive_tiny():
    params = scheme_params(SchemeId.MBR, 2, 1)
    pattern = make_pattern(SchemeId.MBR, params, 1)
    f2 = PrimeField(2)
    for node in range(params.n):
        assert privacy_bijection_check(pattern, node, 1, f2)


def test_privacy_exhaustive_two_records():
    params = scheme_params(SchemeId.MBR, 2, 1)
    pattern = make_pattern(SchemeId.MBR, params, 1)
    for node in range(params.n):
        assert privacy_bijection_check(pattern, node, 2, PrimeField(2))


def test_privacy_negative_control():
    params = scheme_params(SchemeId.MBR, 2, 1)
    pattern = make_pattern(SchemeId.MBR, params, 1)
    f2 = PrimeField(2)

    def leaky(u, desired):
        return (u + u[0, 0]) % 2

    assert not privacy_bijection_check(pattern, 0, 1, f2, query_fn=leaky)
    assert not privacy_bijection_check(pattern, 0, 1, PrimeField(101), query_fn=leaky, sampled=50)


def test_privacy_guard(example1):
    params, field, enc, db, edb, pattern = example1
    with pytest.raises(ValueError):
        privacy_bijection_check(pattern, 0, 3, field)
    assert privacy_bijection_check(pattern, 0, 3, field, sampled=200)


def test_metrics_examples():
    p = scheme_params(SchemeId.MSR_A, 3, 2)
    assert metrics(p, 2, 2) == metrics(p, 2, 2, m=5)
    met = metrics(p, 2, 2)
    assert (met.so, met.cpop, met.rr) == (Fraction(10, 3), Fraction(5, 3), 2)
    met = metrics(scheme_params(SchemeId.MBR, 2, 2), 2, 2)
    assert (met.so, met.cpop, met.rr) == (4, 2, 1)
    met = metrics(scheme_params(SchemeId.MSR_B, 3, 2), 3, 2)
    assert (met.so, met.cpop) == (Fraction(8, 3), 2)
    assert met.to_dict() == {"so": "8/3", "cpop": "2", "rr": "2"}


@pytest.mark.parametrize("k", [2, 3, 4, 5])
@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_closed_forms(k, p):
    a = metrics(scheme_params(SchemeId.MSR_A, k, p), k - 1, p)
    assert a.so == (p + 2) - Fraction(2, k)
    assert a.cpop == 1 + Fraction(2 * k - 2, p * k)
    if k >= 3 and p <= 2 * k - 2:
        b = metrics(scheme_params(SchemeId.MSR_B, k, p), k, p)
        assert b.so == Fraction((p + 2) * (k - 1), k)
        assert b.cpop == 1 + Fraction(2, p)
    c = metrics(scheme_params(SchemeId.MBR, k, p), k, p)
    assert c.so == Fraction(2 * k * (p + 1), k + 1)
    assert c.cpop == Fraction(2 * k * (p + 1), p * (k + 1))


def test_tradeoff_examples():
    p = scheme_params(SchemeId.MSR_A, 3, 2)
    res = tradeoff_check(p, 2, 2)
    assert res.bound_holds and res.identity == 1
    assert not tradeoff_check(p, 1, 2).bound_holds
    res = tradeoff_check(scheme_params(SchemeId.MSR_B, 3, 2), 3, 2)
    assert res.bound_holds and res.identity == 1


SMALL = [("msr-a", 2, 1, None), ("msr-a", 3, 1, None), ("msr-a", 3, 2, None), ("msr-a", 4, 1, None),
         ("msr-b", 3, 1, None), ("msr-b", 3, 3, None), ("msr-b", 4, 2, None),
         ("mbr", 2, 1, 2), ("mbr", 2, 2, 3), ("mbr", 3, 1, 3), ("mbr", 3, 2, 4)]


@given(st.sampled_from(SMALL), st.integers(0, 2**32 - 1), st.data())
@settings(max_examples=60, deadline=None)
def test_end_to_end_decode(case, seed, data):
    scheme, k, p, r = case
    params = scheme_params(SchemeId(scheme), k, p, r)
    m = data.draw(st.integers(p, p + 2))
    system = build_system(scheme, k, p, default_modulus(params), m=m, seed=seed, r=r)
    desired = data.draw(st.lists(st.integers(0, m - 1), min_size=p, max_size=p, unique=True))
    plan, answers = retrieve(system, desired, seed)
    db = system[3]
    got = decode(plan, answers, system[2], params)
    assert [g.tolist() for g in got] == [db.records[f].tolist() for f in sorted(desired)]
    assert answers.downloaded_symbols == scheme_d(SchemeId(scheme), params) * params.n
    assert Fraction(answers.downloaded_symbols, p * params.ell) == metrics(
        params, plan.pattern.d, p).cpop


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_query_minus_offset_is_u(seed):
    params = scheme_params(SchemeId.MSR_B, 3, 2)
    pattern = make_pattern(SchemeId.MSR_B, params, 2)
    f = PrimeField(101)
    rng = np.random.default_rng(seed)
    desired = sorted(rng.choice(4, size=2, replace=False).tolist())
    plan = gen_queries(pattern, desired, 4, f, rng)
    for i in range(params.n):
        off = query_offset(pattern, plan.desired, 4, i)
        assert np.array_equal((plan.queries[i] - off) % 101, plan.u_matrix)


def test_msr_b_interference_rotates():
    params = scheme_params(SchemeId.MSR_B, 3, 2)
    pattern = make_pattern(SchemeId.MSR_B, params, 2)
    got = [tuple(i + 1 for i in interference_nodes(pattern, t)) for t in range(3)]
    assert got == [(2, 5, 7, 8), (3, 6, 7, 8), (1, 4, 7, 8)]
