"""Multi-record private information retrieval on product-matrix MSR/MBR coded storage."""

from .field import FieldElement, PrimeField
from .linalg import Mat
from .pmcode import CodeFamily, CodeParams, build_encoding_matrix, default_modulus, derive_params
from .dbstore import Database, EncodedDatabase, fail_node, ingest, repair_node
from .mpir import (
    SchemeId,
    answer_all,
    decodability_oracle,
    decode,
    gen_queries,
    make_pattern,
    metrics,
    scheme_params,
    tradeoff_check,
)

__version__ = "0.1.0"

__all__ = [
    "CodeFamily",
    "CodeParams",
    "Database",
    "EncodedDatabase",
    "FieldElement",
    "Mat",
    "PrimeField",
    "SchemeId",
    "answer_all",
    "build_encoding_matrix",
    "decodability_oracle",
    "decode",
    "default_modulus",
    "derive_params",
    "fail_node",
    "gen_queries",
    "ingest",
    "make_pattern",
    "metrics",
    "repair_node",
    "scheme_params",
    "tradeoff_check",
]
