"""Prime-field arithmetic.

Scalars are :class:`FieldElement` instances; bulk data elsewhere in the
package is carried as ``int64`` numpy arrays of canonical residues and the
owning :class:`PrimeField`.
"""

from dataclasses import dataclass
from math import isqrt

import numpy as np

from .errors import FieldError, ModulusMismatchError

MAX_MODULUS = 2**31 - 1


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    if q % 2 == 0:
        return q == 2
    for f in range(3, isqrt(q) + 1, 2):
        if q % f == 0:
            return False
    return True


def next_prime(n: int) -> int:
    """Smallest prime strictly greater than ``n``."""
    c = max(n + 1, 2)
    while not is_prime(c):
        c += 1
    return c


@dataclass(frozen=True)
class PrimeField:
    q: int

    def __post_init__(self):
        q = int(self.q)
        object.__setattr__(self, "q", q)
        if q > MAX_MODULUS:
            raise FieldError(f"modulus {q} exceeds 2^31-1")
        if not is_prime(q):
            raise FieldError(f"modulus {q} is not prime")

    def __call__(self, value) -> "FieldElement":
        return FieldElement(int(value) % self.q, self)

    def __repr__(self):
        return f"GF({self.q})"

    @property
    def zero(self):
        return self(0)

    @property
    def one(self):
        return self(1)

    def elements(self):
        return [self(v) for v in range(self.q)]

    def array(self, values) -> np.ndarray:
        """Reduce arbitrary integers into an int64 residue array."""
        return np.mod(np.asarray(values, dtype=object), self.q).astype(np.int64)

    def random(self, rng, size=None):
        """Uniform residues; ``size=None`` gives a plain int."""
        # Generator.integers rejects out-of-range words internally, so no modulo bias.
        if size is None:
            return int(rng.integers(0, self.q))
        return rng.integers(0, self.q, size=size, dtype=np.int64)


@dataclass(frozen=True)
class FieldElement:
    value: int
    field: PrimeField

    def __post_init__(self):
        if not 0 <= self.value < self.field.q:
            raise FieldError(f"{self.value} is not a canonical residue mod {self.field.q}")

    def _coerce(self, other):
        if isinstance(other, FieldElement):
            if other.field.q != self.field.q:
                raise ModulusMismatchError(
                    f"cannot combine elements of GF({self.field.q}) and GF({other.field.q})"
                )
            return other
        if isinstance(other, (int, np.integer)):
            return self.field(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return add(self, -other)

    def __rsub__(self, other):
        return -self + other

    def __neg__(self):
        return FieldElement((-self.value) % self.field.q, self.field)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return mul(self, inv(other))

    def __pow__(self, e: int):
        if e < 0:
            return inv(self) ** (-e)
        return FieldElement(pow(self.value, e, self.field.q), self.field)

    def __eq__(self, other):
        if isinstance(other, FieldElement):
            return self.value == other.value and self.field.q == other.field.q
        if isinstance(other, (int, np.integer)):
            return self.value == int(other) % self.field.q
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.field.q))

    def __int__(self):
        return self.value

    __index__ = __int__

    def __repr__(self):
        return f"{self.value} (mod {self.field.q})"

    def inverse(self):
        return inv(self)


def _check_same(a: FieldElement, b: FieldElement):
    if a.field.q != b.field.q:
        raise ModulusMismatchError(
            f"cannot combine elements of GF({a.field.q}) and GF({b.field.q})"
        )


def add(a: FieldElement, b: FieldElement) -> FieldElement:
    _check_same(a, b)
    return FieldElement((a.value + b.value) % a.field.q, a.field)


def mul(a: FieldElement, b: FieldElement) -> FieldElement:
    _check_same(a, b)
    return FieldElement((a.value * b.value) % a.field.q, a.field)


def inv(a: FieldElement) -> FieldElement:
    if a.value == 0:
        raise ZeroDivisionError(f"0 has no inverse in GF({a.field.q})")
    return FieldElement(pow(a.value, -1, a.field.q), a.field)


def sample_uniform(rng: np.random.Generator, field: PrimeField) -> FieldElement:
    """Draw one uniformly distributed element using ``rng``."""
    return field(field.random(rng))
