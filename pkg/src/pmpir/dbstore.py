"""Encoded multi-record storage: node state, failures, repair and the on-disk format.

Binary layout (all integers unsigned 64-bit little-endian)::

    b"PMPIR1"
    family n k r alpha beta ell m q           # family: 0 = MSR, 1 = MBR
    Psi, n*r residues, row-major
    node rows, n * (m*alpha) residues, node order
    liveness bitmap, ceil(n/8) bytes, node i -> bit (i % 8) of byte i // 8
    CRC-32 of every preceding byte, 4 bytes little-endian
"""

import json
import struct
import zlib
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

import numpy as np

from .errors import FormatError, NodeStateError, ParameterError, RepairError
from .field import MAX_MODULUS, PrimeField
from .linalg import Mat
from .pmcode import (
    CodeFamily,
    CodeParams,
    EncodingMatrix,
    encode,
    encoding_matrix_from_psi,
    pack_message,
    repair_projection,
    repair_reconstruct,
    repair_target,
    stripe,
)

MAGIC = b"PMPIR"
VERSION = b"1"
_FAMILY_CODES = {CodeFamily.MSR: 0, CodeFamily.MBR: 1}
_HEADER = struct.Struct("<9Q")


@dataclass
class Database:
    records: list
    field: PrimeField

    def __post_init__(self):
        if not self.records:
            raise ValueError("a database needs at least one record")
        self.records = [np.asarray([int(x) for x in rec], dtype=np.int64) % self.field.q
                        for rec in self.records]

    @property
    def m(self):
        return len(self.records)

    @classmethod
    def from_records(cls, records, field, ell, allow_stripe=True):
        """Fit raw records to ``ell`` symbols, striping long ones when allowed.

        Returns the database and, for each input record, the stored record
        indices holding its chunks.
        """
        fitted, layout = [], []
        for i, rec in enumerate(records):
            if len(rec) != ell and not allow_stripe:
                raise ParameterError(f"record {i} has {len(rec)} symbols, code stores {ell}")
            chunks = stripe(rec, ell)
            layout.append(list(range(len(fitted), len(fitted) + len(chunks))))
            fitted.extend(chunks)
        return cls(fitted, field), layout

    @classmethod
    def random(cls, m, ell, field, rng):
        return cls([field.random(rng, ell) for _ in range(m)], field)


def load_json_database(text):
    """Parse ``{"q": int, "records": [[int, ...], ...]}``."""
    try:
        doc = json.loads(text)
        q = int(doc["q"])
        records = [[int(x) for x in rec] for rec in doc["records"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed database JSON: {exc}") from exc
    return PrimeField(q), records


@dataclass
class RepairReport:
    node: int
    helpers: tuple
    symbols_downloaded: int
    per_helper: dict
    node_symbols: int

    @property
    def repair_ratio(self):
        return Fraction(self.symbols_downloaded, self.node_symbols)

    def to_dict(self):
        return {
            "node": self.node + 1,
            "helpers": [h + 1 for h in self.helpers],
            "symbols_downloaded": self.symbols_downloaded,
            "per_helper": {str(h + 1): c for h, c in self.per_helper.items()},
            "node_symbols": self.node_symbols,
            "repair_ratio": _frac(self.repair_ratio),
        }


def _frac(f):
    f = Fraction(f)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


@dataclass
class EncodedDatabase:
    params: CodeParams
    enc: EncodingMatrix
    m: int
    node_rows: np.ndarray
    alive: np.ndarray
    # plaintext message matrix, kept only so tests can check node contents
    message: np.ndarray | None = dc_field(default=None, repr=False)

    @property
    def field(self):
        return self.enc.field

    @property
    def n(self):
        return self.params.n

    def _check_index(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"node {i} out of range for n={self.n}")

    def read_node(self, i) -> np.ndarray:
        self._check_index(i)
        if not self.alive[i]:
            raise NodeStateError(f"node {i} is dead")
        return self.node_rows[i].copy()

    def read_block(self, i, j) -> np.ndarray:
        """Node ``i``'s share of record ``j``."""
        a = self.params.alpha
        return self.read_node(i)[j * a:(j + 1) * a]

    def alive_nodes(self):
        return [i for i in range(self.n) if self.alive[i]]

    def expected_rows(self):
        if self.message is None:
            return None
        return (Mat(self.enc.psi.a, self.field) @ Mat(self.message, self.field)).a

    def check_consistency(self):
        """Alive rows equal ``Psi @ M`` when the plaintext is known."""
        expected = self.expected_rows()
        if expected is None:
            return True
        ok = np.array_equal(self.node_rows[self.alive], expected[self.alive])
        if not ok:
            raise AssertionError("stored node rows diverged from Psi @ M")
        return True


def ingest(db: Database, params: CodeParams, enc: EncodingMatrix) -> EncodedDatabase:
    if db.field.q != enc.field.q:
        raise ParameterError(f"database over GF({db.field.q}), encoding matrix over GF({enc.field.q})")
    if enc.psi.shape != (params.n, params.r) or enc.family is not params.family:
        raise ParameterError(f"encoding matrix does not match {params}")
    blocks, msgs = [], []
    for j, rec in enumerate(db.records):
        if rec.size != params.ell:
            raise ParameterError(f"record {j} has {rec.size} symbols, code stores {params.ell}")
        msg = pack_message(rec, params, db.field)
        msgs.append(msg.m.a)
        blocks.append(encode(enc, msg).a)
    rows = np.hstack(blocks)
    edb = EncodedDatabase(
        params=params,
        enc=enc,
        m=db.m,
        node_rows=rows,
        alive=np.ones(params.n, dtype=bool),
        message=np.hstack(msgs),
    )
    edb.check_consistency()
    return edb


def fail_node(edb: EncodedDatabase, i: int):
    edb._check_index(i)
    if not edb.alive[i]:
        raise NodeStateError(f"node {i} already failed")
    edb.alive[i] = False
    edb.node_rows[i] = 0


def default_helpers(edb: EncodedDatabase, i: int):
    candidates = [h for h in edb.alive_nodes() if h != i]
    if len(candidates) < edb.params.r:
        raise RepairError(
            f"only {len(candidates)} live helpers for node {i}, repair needs r={edb.params.r}"
        )
    return tuple(candidates[: edb.params.r])


def repair_node(edb: EncodedDatabase, i: int, helpers=None) -> RepairReport:
    """Rebuild dead node ``i`` from ``r`` live helpers, one symbol per helper per record."""
    edb._check_index(i)
    if edb.alive[i]:
        raise NodeStateError(f"node {i} is alive; fail it before repairing")
    if not edb.enc.repair_capable:
        raise RepairError(
            "encoding matrix is not repair capable: the diagonal of Lambda has repeated values"
        )
    if helpers is None:
        helpers = default_helpers(edb, i)
    helpers = tuple(int(h) for h in helpers)
    params = edb.params
    if len(helpers) != params.r or len(set(helpers)) != len(helpers) or i in helpers:
        raise RepairError(f"need {params.r} distinct helpers other than node {i}, got {helpers}")
    target = repair_target(params, edb.enc, i)
    a = params.alpha
    row = np.zeros(edb.m * a, dtype=np.int64)
    per_helper = {h: 0 for h in helpers}
    downloaded = 0
    for j in range(edb.m):
        projections = []
        for h in helpers:
            projections.append((h, repair_projection(edb.read_block(h, j), target, edb.field)))
            per_helper[h] += 1
            downloaded += 1
        row[j * a:(j + 1) * a] = repair_reconstruct(params, edb.enc, i, projections)
    edb.node_rows[i] = row
    edb.alive[i] = True
    edb.check_consistency()
    return RepairReport(i, helpers, downloaded, per_helper, edb.m * a)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def serialize(edb: EncodedDatabase) -> bytes:
    p = edb.params
    parts = [
        MAGIC + VERSION,
        _HEADER.pack(_FAMILY_CODES[p.family], p.n, p.k, p.r, p.alpha, p.beta, p.ell,
                     edb.m, edb.field.q),
        edb.enc.psi.a.astype("<u8").tobytes(),
        edb.node_rows.astype("<u8").tobytes(),
        np.packbits(edb.alive.astype(np.uint8), bitorder="little").tobytes(),
    ]
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


def _take(buf, offset, size, what):
    if offset + size > len(buf):
        raise FormatError(f"truncated payload while reading {what}: need {size} bytes, "
                          f"{len(buf) - offset} left", offset)
    return buf[offset:offset + size], offset + size


def deserialize(buf: bytes) -> EncodedDatabase:
    buf = bytes(buf)
    head, off = _take(buf, 0, len(MAGIC) + 1, "magic")
    if head[:len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic {head!r}", 0)
    if head[len(MAGIC):] != VERSION:
        raise FormatError(f"unsupported format version {head[len(MAGIC):]!r}", len(MAGIC))
    raw, off = _take(buf, off, _HEADER.size, "header")
    fam, n, k, r, alpha, beta, ell, m, q = _HEADER.unpack(raw)
    if q > MAX_MODULUS:
        raise FormatError(f"modulus {q} exceeds 2^31-1", off - 8)
    families = {v: f for f, v in _FAMILY_CODES.items()}
    if fam not in families:
        raise FormatError(f"unknown code family {fam}", len(MAGIC) + 1)
    if m < 1 or n < 1:
        raise FormatError("empty database", len(MAGIC) + 1)
    try:
        params = CodeParams(families[fam], n, k, r, alpha, beta, ell)
        field = PrimeField(q)
    except (ParameterError, ValueError) as exc:
        raise FormatError(f"invalid header: {exc}", len(MAGIC) + 1) from exc
    psi_off = off
    raw, off = _take(buf, off, 8 * n * r, "encoding matrix")
    psi = np.frombuffer(raw, dtype="<u8").reshape(n, r)
    rows_off = off
    raw, off = _take(buf, off, 8 * n * m * alpha, "node rows")
    rows = np.frombuffer(raw, dtype="<u8").reshape(n, m * alpha)
    raw, off = _take(buf, off, (n + 7) // 8, "liveness bitmap")
    alive = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:n].astype(bool)
    crc_raw, end = _take(buf, off, 4, "checksum")
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after checksum", end)
    (crc,) = struct.unpack("<I", crc_raw)
    if zlib.crc32(buf[:off]) != crc:
        raise FormatError("CRC-32 mismatch", off)
    if np.any(psi >= q):
        raise FormatError("encoding matrix symbol out of range", psi_off)
    if np.any(rows >= q):
        raise FormatError("node symbol out of range", rows_off)
    try:
        enc = encoding_matrix_from_psi(params, Mat(psi.astype(np.int64), field))
    except ParameterError as exc:
        raise FormatError(f"invalid encoding matrix: {exc}", psi_off) from exc
    return EncodedDatabase(
        params=params,
        enc=enc,
        m=m,
        node_rows=rows.astype(np.int64),
        alive=alive,
    )


def save(edb: EncodedDatabase, path):
    with open(path, "wb") as fh:
        fh.write(serialize(edb))


def load(path) -> EncodedDatabase:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
