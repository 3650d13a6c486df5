import itertools
import sys

import numpy as np
import pytest

from pmpir.dbstore import Database, ingest
from pmpir.field import PrimeField
from pmpir.mpir import SchemeId, make_pattern, scheme_params
from pmpir.pmcode import build_encoding_matrix


def brute_det(a, q):
    """Leibniz determinant mod q; only for tiny matrices."""
    a = np.asarray(a, dtype=object)
    n = a.shape[0]
    total = 0
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = -1 if inversions % 2 else 1
        for i in range(n):
            term *= int(a[i, perm[i]])
        total += term
    return total % q


@pytest.fixture(scope="session")
def gf13():
    return PrimeField(13)


@pytest.fixture(scope="session")
def gf101():
    return PrimeField(101)


def build_system(scheme, k, p, q, m=3, seed=0, r=None):
    scheme = SchemeId(scheme)
    params = scheme_params(scheme, k, p, r)
    field = PrimeField(q)
    enc = build_encoding_matrix(params, field)
    db = Database.random(m, params.ell, field, np.random.default_rng(seed))
    edb = ingest(db, params, enc)
    pattern = make_pattern(scheme, params, p)
    return params, field, enc, db, edb, pattern


@pytest.fixture
def example1():
    return build_system("msr-a", 3, 2, 13)


@pytest.fixture
def example2():
    return build_system("msr-b", 3, 2, 13)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
