"""Arithmetic on the divisibility lattice (Z+, |).

gcd/lcm, Moebius and totient functions, divisor enumeration, the incidence
matrix of a finite set, the coefficient vector of the canonical meet-tensor
decomposition and the coprime-product sets that give LCM tensor ranks.
"""
from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "LCM_MAX",
    "ScalarFunction",
    "identity",
    "power",
    "reciprocal",
    "get_function",
    "LatticeSet",
    "gcd",
    "lcm",
    "lcm_many",
    "mobius",
    "totient",
    "divisors",
    "poset_mobius",
    "mobius_table",
    "meet_coefficients",
    "incidence_matrix",
    "divisor_pairs",
    "coprime_product_set",
    "coprime_product_count",
    "lcm_value_set",
]

LCM_MAX = 2**63 - 1

# sieve-based paths are used while max(S) stays below this
_SIEVE_LIMIT = 2 * 10**7


# --------------------------------------------------------------------------
# smallest-prime-factor sieve


class _Sieve:
    def __init__(self):
        self._lock = threading.Lock()
        self._spf = np.zeros(2, dtype=np.int64)

    def spf(self, limit: int) -> np.ndarray:
        spf = self._spf
        if spf.size > limit:
            return spf
        with self._lock:
            if self._spf.size <= limit:
                size = max(limit + 1, 2 * self._spf.size, 1 << 16)
                self._spf = _build_spf(size)
            return self._spf


def _build_spf(size: int) -> np.ndarray:
    spf = np.zeros(size, dtype=np.int64)
    spf[1:] = 1
    for p in range(2, math.isqrt(size - 1) + 1):
        if spf[p] == 1:
            block = spf[p * p :: p]
            block[block == 1] = p
    unset = spf == 1
    unset[:2] = False
    spf[unset] = np.nonzero(unset)[0]
    spf[1] = 1
    return spf


_SIEVE = _Sieve()


def _factorize(k: int) -> list[tuple[int, int]]:
    """Prime factorization as [(p, e), ...] with ascending p."""
    if k < 1:
        raise ValueError(f"expected a positive integer, got {k}")
    out = []
    if k < _SIEVE_LIMIT:
        spf = _SIEVE.spf(k)
        while k > 1:
            p = int(spf[k])
            e = 0
            while k % p == 0:
                k //= p
                e += 1
            out.append((p, e))
        return out
    p = 2
    while p * p <= k:
        if k % p == 0:
            e = 0
            while k % p == 0:
                k //= p
                e += 1
            out.append((p, e))
        p += 1 if p == 2 else 2
    if k > 1:
        out.append((k, 1))
    return out


# --------------------------------------------------------------------------
# scalar functions


@dataclass(frozen=True)
class ScalarFunction:
    """A named real function on the positive integers.

    ``fn`` maps one integer to an exact value (int or Fraction) when possible;
    ``table`` evaluates it on 0..N as a numpy array (entry 0 is a placeholder).
    """

    name: str
    fn: Callable[[int], object]
    vectorized: Callable[[np.ndarray], np.ndarray]
    nonnegative: bool = True

    def __call__(self, k: int):
        return self.fn(k)

    def values(self, ks: np.ndarray) -> np.ndarray:
        return self.vectorized(np.asarray(ks))

    def table(self, N: int) -> np.ndarray:
        out = self.values(np.arange(1, N + 1))
        return np.concatenate([np.zeros(1, dtype=out.dtype), out])


def identity() -> ScalarFunction:
    return ScalarFunction("id", lambda k: k, lambda a: a.astype(np.int64))


def power(alpha: float) -> ScalarFunction:
    """x -> x**alpha; integer exponents keep exact integer values."""
    if float(alpha).is_integer() and alpha >= 0:
        e = int(alpha)

        def vec(a):
            a = a.astype(np.int64)
            if a.size and float(a.max()) ** e > LCM_MAX:
                return a.astype(np.float64) ** e
            return a**e

        return ScalarFunction(f"pow{e}", lambda k: k**e, vec)
    if float(alpha).is_integer():
        e = int(alpha)
        return ScalarFunction(
            f"pow{e}", lambda k: Fraction(1, k ** (-e)), lambda a: a.astype(np.float64) ** e
        )
    return ScalarFunction(
        f"pow{alpha:g}", lambda k: k**alpha, lambda a: a.astype(np.float64) ** alpha
    )


def reciprocal() -> ScalarFunction:
    return ScalarFunction("inv", lambda k: Fraction(1, k), lambda a: 1.0 / a.astype(np.float64))


def get_function(name: str) -> ScalarFunction:
    """Look up a function by CLI name: ``id``, ``inv``, ``sq`` or ``pow<alpha>``."""
    if name in ("id", "identity"):
        return identity()
    if name in ("inv", "reciprocal"):
        return reciprocal()
    if name in ("sq", "square"):
        return power(2)
    if name.startswith("pow"):
        return power(float(name[3:]))
    raise ValueError(f"unknown function {name!r}")


# --------------------------------------------------------------------------
# elementary arithmetic


def gcd(a: int, b: int) -> int:
    return math.gcd(a, b)


def lcm(a: int, b: int) -> int:
    """Least common multiple; raises OverflowError past the signed 64-bit range."""
    if a < 1 or b < 1:
        raise ValueError("lcm expects positive integers")
    out = a // math.gcd(a, b) * b
    if out > LCM_MAX:
        raise OverflowError(f"lcm({a}, {b}) exceeds 64-bit range")
    return out


def lcm_many(values: Iterable[int]) -> int:
    out = 1
    for v in values:
        out = lcm(out, v)
    return out


def mobius(k: int) -> int:
    out = 1
    for _, e in _factorize(k):
        if e > 1:
            return 0
        out = -out
    return out


def totient(k: int) -> int:
    out = k
    for p, _ in _factorize(k):
        out -= out // p
    return out


def divisors(k: int) -> list[int]:
    divs = [1]
    for p, e in _factorize(k):
        divs = [q * p**j for q in divs for j in range(e + 1)]
    return sorted(divs)


def poset_mobius(x: int, y: int) -> int:
    """Moebius function of the divisibility poset: mu(y/x) if x | y else 0."""
    if y % x:
        return 0
    return mobius(y // x)


def mobius_table(N: int) -> np.ndarray:
    """mu(0..N) with mu(0) = 0."""
    spf = _SIEVE.spf(N)[: N + 1]
    k = np.arange(N + 1)
    p = spf
    rest = np.zeros_like(k)
    rest[2:] = k[2:] // p[2:]
    mu = np.zeros(N + 1, dtype=np.int64)
    mu[1] = 1
    for i in range(2, N + 1):
        r = rest[i]
        mu[i] = 0 if r % p[i] == 0 else -mu[r]
    return mu


# --------------------------------------------------------------------------
# lattice sets


@dataclass(frozen=True)
class LatticeSet:
    """Finite set of positive integers ordered so that x_i | x_j only if i <= j."""

    elements: tuple[int, ...]

    def __init__(self, elements: Iterable[int]):
        elems = tuple(int(e) for e in elements)
        if not elems:
            raise ValueError("a lattice set needs at least one element")
        if min(elems) < 1:
            raise ValueError("elements must be positive integers")
        if len(set(elems)) != len(elems):
            raise ValueError("elements must be distinct")
        if any(a > b for a, b in zip(elems, elems[1:])):
            # unsorted input is allowed as long as no later element divides an earlier one
            for j, xj in enumerate(elems):
                for xi in elems[j + 1 :]:
                    if xj % xi == 0:
                        raise ValueError(
                            f"order violates divisibility: {xi} divides {xj} but comes later"
                        )
        object.__setattr__(self, "elements", elems)

    @classmethod
    def range(cls, n: int) -> "LatticeSet":
        return cls(range(1, n + 1))

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    @property
    def n(self) -> int:
        return len(self.elements)

    @property
    def max(self) -> int:
        return max(self.elements)

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.elements, dtype=np.int64)

    @cached_property
    def index(self) -> dict[int, int]:
        return {x: i for i, x in enumerate(self.elements)}

    @cached_property
    def _dense_index(self) -> np.ndarray | None:
        # value -> position lookup table; n marks "not in S"
        if self.max >= _SIEVE_LIMIT or self.max > 64 * self.n + 10**5:
            return None
        idx = np.full(self.max + 1, self.n, dtype=np.int64)
        idx[self.array] = np.arange(self.n)
        return idx

    @cached_property
    def meet_closed(self) -> bool:
        """True iff gcd(x, y) lies in the set for every pair of elements."""
        if self.elements == tuple(range(1, self.n + 1)):
            return True
        members = self.index
        # divisor-closed sets are meet-closed: check x/p for every prime p | x
        if all(x // p in members for x in self.elements for p, _ in _factorize(x)):
            return True
        arr = self.array
        for start in range(0, self.n, 512):
            g = np.gcd.outer(arr[start : start + 512], arr)
            if not np.isin(g, arr).all():
                return False
        return True


def _as_set(S) -> LatticeSet:
    return S if isinstance(S, LatticeSet) else LatticeSet(S)


def divisor_pairs(S) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j) with x_j | x_i, sorted by i then j."""
    S = _as_set(S)
    table = S._dense_index
    rows, cols = [], []
    if table is not None:
        n, N = S.n, S.max
        for j, x in enumerate(S.elements):
            hit = table[x::x]
            hit = hit[hit < n]
            rows.append(hit)
            cols.append(np.full(hit.size, j, dtype=np.int64))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
    else:
        members = S.index
        for i, x in enumerate(S.elements):
            for z in divisors(x):
                j = members.get(z)
                if j is not None:
                    rows.append(i)
                    cols.append(j)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
    order = np.lexsort((cols, rows))
    return rows[order], cols[order]


def incidence_matrix(S) -> sp.csr_array:
    """n x n 0/1 matrix with entry (i, j) = 1 iff x_j divides x_i."""
    S = _as_set(S)
    rows, cols = divisor_pairs(S)
    data = np.ones(rows.size, dtype=np.int64)
    return sp.csr_array((data, (rows, cols)), shape=(S.n, S.n))


def _mobius_transform(fv: np.ndarray) -> np.ndarray:
    """g(z) = sum_{y | z} f(y) mu(z / y) for z = 0..N, by sieving over y."""
    N = fv.size - 1
    mu = mobius_table(N)
    g = np.zeros_like(fv)
    for y in range(1, N + 1):
        fy = fv[y]
        if fy == 0:
            continue
        g[y::y] += fy * mu[1 : N // y + 1]
    return g


def meet_coefficients(S, f: ScalarFunction) -> np.ndarray:
    """Coefficients D_1..D_n of the canonical decomposition of the meet tensor.

    D_k sums g(z) = sum_{y|z} f(y) mu(z/y) over the divisors z of x_k that
    divide no earlier element of S. Integer-valued f gives an int64 vector.
    """
    S = _as_set(S)
    if not S.meet_closed:
        raise ValueError("meet coefficients require a meet-closed (gcd-closed) set")
    n = S.n
    table = S._dense_index
    if table is not None:
        N = S.max
        fv = f.table(N)
        g = _mobius_transform(fv)
        # first[z]: smallest position j with z | x_j (n if none)
        first = np.fromiter((table[z::z].min() for z in range(1, N + 1)), np.int64, N)
        z = np.nonzero(first < n)[0]
        D = np.zeros(n, dtype=g.dtype)
        np.add.at(D, first[z], g[z + 1])
        return D

    first: dict[int, int] = {}
    for k, x in enumerate(S.elements):
        for z in divisors(x):
            first.setdefault(z, k)
    D = [0] * n
    for z, k in first.items():
        D[k] += sum(f(y) * mobius(z // y) for y in divisors(z))
    if all(isinstance(v, int) for v in D):
        return np.asarray(D, dtype=np.int64)
    return np.asarray([float(v) for v in D])


# --------------------------------------------------------------------------
# LCM sets


def coprime_product_set(n: int, k: int) -> set[int]:
    """{i_1 ... i_k : 1 <= i_j <= n, pairwise coprime}."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    products = set(range(1, n + 1))
    for _ in range(k - 1):
        # coprime to each earlier factor <=> coprime to their product
        products = {p * i for p in products for i in range(1, n + 1) if math.gcd(p, i) == 1}
    return products


def coprime_product_count(n: int, k: int) -> int:
    return len(coprime_product_set(n, k))


def lcm_value_set(n: int, k: int) -> set[int]:
    """{[i_1, ..., i_k] : 1 <= i_j <= n}."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    values = set(range(1, n + 1))
    for _ in range(k - 1):
        values = {lcm(v, i) for v in values for i in range(1, n + 1)}
    return values
