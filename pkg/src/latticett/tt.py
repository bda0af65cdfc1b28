"""Tensor trains with sparse cores.

A core of shape (r0, n, r1) keeps its nonzeros grouped by mode index: the
entries of slice G(i) are ``left/right/values[mode_ptr[i]:mode_ptr[i+1]]``.
All contraction kernels accept one vector ``x`` of shape (n,) or a batch of
shape (m, n) and never form the full tensor.
"""
from __future__ import annotations

import io
import math
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .lattice import LatticeSet, ScalarFunction, divisor_pairs, meet_coefficients

__all__ = [
    "DENSE_CAP",
    "PRECISIONS",
    "Core",
    "TTTensor",
    "element",
    "elements",
    "contract_scalar",
    "contract_vector",
    "contract_matrix",
    "meet_tt",
    "ones_tt",
    "rank1_tt",
    "to_dense",
    "unfolding_rank",
    "tt_ranks",
    "dumps",
    "loads",
    "save",
    "load",
]

DENSE_CAP = 10**7

PRECISIONS = {"double": np.float64, "extended": np.longdouble}


class Core:
    """One TT core stored as its nonzero entries, grouped by mode index."""

    def __init__(self, shape, left, mode, right, values, dtype=np.float64):
        r0, n, r1 = (int(s) for s in shape)
        left = np.asarray(left, dtype=np.int64)
        mode = np.asarray(mode, dtype=np.int64)
        right = np.asarray(right, dtype=np.int64)
        values = np.asarray(values, dtype=dtype)
        if not (left.shape == mode.shape == right.shape == values.shape):
            raise ValueError("entry arrays must have equal length")
        if left.size and (
            left.min() < 0 or left.max() >= r0 or right.min() < 0 or right.max() >= r1
            or mode.min() < 0 or mode.max() >= n
        ):
            raise ValueError("core entry out of range")
        order = np.lexsort((right, left, mode))
        self.shape = (r0, n, r1)
        self.left = left[order]
        self.right = right[order]
        self.values = values[order]
        self.mode = mode[order]
        self.mode_ptr = np.searchsorted(self.mode, np.arange(n + 1)).astype(np.int64)
        for a in (self.left, self.right, self.values, self.mode, self.mode_ptr):
            a.setflags(write=False)

    @classmethod
    def from_dense(cls, array, dtype=np.float64) -> "Core":
        array = np.asarray(array)
        if array.ndim != 3:
            raise ValueError("a dense core must be 3-way")
        a, i, b = np.nonzero(array)
        return cls(array.shape, a, i, b, array[a, i, b], dtype=dtype)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def nbytes(self) -> int:
        return int(self.left.nbytes + self.right.nbytes + self.values.nbytes + self.mode_ptr.nbytes)

    def astype(self, dtype) -> "Core":
        return Core(self.shape, self.left, self.mode, self.right, self.values.astype(dtype), dtype)

    def slice(self, i: int) -> sp.csr_array:
        """The r0 x r1 matrix G(i)."""
        s = slice(self.mode_ptr[i], self.mode_ptr[i + 1])
        r0, _, r1 = self.shape
        return sp.csr_array((self.values[s], (self.left[s], self.right[s])), shape=(r0, r1))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=self.dtype)
        out[self.left, self.mode, self.right] = self.values
        return out

    # scatter operators for the kernels: entry e adds into slot index[e]
    def _scatter(self, index: np.ndarray, size: int) -> "_Scatter":
        data = np.ones(self.nnz, dtype=self.dtype)
        matrix = sp.csr_array((data, (index, np.arange(self.nnz))), shape=(size, self.nnz))
        return _Scatter(index, size, matrix)

    @cached_property
    def scatter_right(self):
        return self._scatter(self.right, self.shape[2])

    @cached_property
    def scatter_left(self):
        return self._scatter(self.left, self.shape[0])

    @cached_property
    def scatter_mode(self):
        return self._scatter(self.mode, self.shape[1])

    @cached_property
    def scatter_left_mode(self):
        return self._scatter(self.left * self.shape[1] + self.mode, self.shape[0] * self.shape[1])

    @cached_property
    def mode_matrix(self) -> sp.csr_array:
        """The n x r1 matrix G(i)[0, :] of a first core."""
        return sp.csr_array(
            (self.values, (self.mode, self.right)), shape=(self.shape[1], self.shape[2])
        )

    def __eq__(self, other):
        if not isinstance(other, Core):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.mode, other.mode)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self):
        return f"Core(shape={self.shape}, nnz={self.nnz})"


class _Scatter(NamedTuple):
    index: np.ndarray
    size: int
    matrix: sp.csr_array  # size x nnz


def _scatter_sum(T: np.ndarray, scatter: _Scatter) -> np.ndarray:
    # (m, nnz) -> (m, size); bincount skips the sparse overhead for one vector
    if T.shape[0] == 1 and T.dtype == np.float64:
        return np.bincount(scatter.index, weights=T[0], minlength=scatter.size)[None, :]
    return np.asarray(scatter.matrix @ T.T).T


class TTTensor:
    """A tensor train G_1(i_1) ... G_d(i_d) with boundary ranks 1.

    The same Core object may occupy several positions (the meet constructor
    shares one middle core); storage is counted once per distinct core.
    """

    def __init__(self, cores: Sequence[Core], meta: dict | None = None):
        cores = list(cores)
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for a, b in zip(cores, cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError(f"rank mismatch between cores: {a.shape} then {b.shape}")
        dtypes = {c.dtype for c in cores}
        if len(dtypes) != 1:
            raise ValueError("all cores must share one dtype")
        self.cores = tuple(cores)
        self.meta = dict(meta or {})

    @classmethod
    def from_dense_cores(cls, arrays, dtype=np.float64, meta=None) -> "TTTensor":
        return cls([Core.from_dense(a, dtype) for a in arrays], meta=meta)

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def n(self) -> int:
        dims = set(self.dims)
        if len(dims) != 1:
            raise ValueError("tensor has unequal mode sizes")
        return dims.pop()

    @property
    def ranks(self) -> list[int]:
        return [1] + [c.shape[2] for c in self.cores]

    @property
    def dtype(self):
        return self.cores[0].dtype

    def unique_cores(self) -> list[Core]:
        seen, out = set(), []
        for c in self.cores:
            if id(c) not in seen:
                seen.add(id(c))
                out.append(c)
        return out

    @property
    def nbytes(self) -> int:
        return sum(c.nbytes for c in self.unique_cores())

    def astype(self, dtype) -> "TTTensor":
        """Copy at another precision, preserving core sharing."""
        converted = {id(c): c.astype(dtype) for c in self.unique_cores()}
        return TTTensor([converted[id(c)] for c in self.cores], meta=self.meta)

    def __getitem__(self, idx):
        return element(self, idx)

    def __repr__(self):
        return f"TTTensor(dims={self.dims}, ranks={self.ranks})"


# --------------------------------------------------------------------------
# evaluation


def _check_index(t: TTTensor, idx) -> tuple[int, ...]:
    idx = tuple(int(i) for i in idx)
    if len(idx) != t.d:
        raise IndexError(f"expected {t.d} indices, got {len(idx)}")
    for i, n in zip(idx, t.dims):
        if not 0 <= i < n:
            raise IndexError(f"index {idx} out of range for dims {t.dims}")
    return idx


def element(t: TTTensor, idx) -> float:
    """G_1(i_1) ... G_d(i_d) for a 0-based multi-index."""
    idx = _check_index(t, idx)
    v = np.ones(1, dtype=t.dtype)
    for core, i in zip(t.cores, idx):
        s = slice(core.mode_ptr[i], core.mode_ptr[i + 1])
        w = np.zeros(core.shape[2], dtype=t.dtype)
        np.add.at(w, core.right[s], v[core.left[s]] * core.values[s])
        v = w
    return v[0]


def elements(t: TTTensor, idx: np.ndarray) -> np.ndarray:
    """Vectorized element evaluation for an (m, d) array of 0-based indices."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 2 or idx.shape[1] != t.d:
        raise IndexError(f"expected an (m, {t.d}) index array")
    if idx.size and ((idx < 0).any() or (idx >= np.asarray(t.dims)).any()):
        raise IndexError("index out of range")
    dense = {}
    V = np.ones((idx.shape[0], 1), dtype=t.dtype)
    for k, core in enumerate(t.cores):
        G = dense.get(id(core))
        if G is None:
            G = dense[id(core)] = core.to_dense()
        V = np.einsum("sa,asb->sb", V, G[:, idx[:, k], :])
    return V[:, 0]


def _as_batch(t: TTTensor, x) -> tuple[np.ndarray, bool]:
    X = np.asarray(x)
    single = X.ndim == 1
    X = np.atleast_2d(X).astype(np.result_type(X.dtype, t.dtype), copy=False)
    if X.ndim != 2 or X.shape[1] != t.n:
        raise ValueError(f"vector length {X.shape[-1]} does not match dimension {t.n}")
    return X, single


def _sweep_left(core: Core, L: np.ndarray, X: np.ndarray) -> np.ndarray:
    T = L[:, core.left] * X[:, core.mode] * core.values
    return _scatter_sum(T, core.scatter_right)


def _sweep_right(core: Core, R: np.ndarray, X: np.ndarray) -> np.ndarray:
    T = R[:, core.right] * X[:, core.mode] * core.values
    return _scatter_sum(T, core.scatter_left)


def _right_environment(t: TTTensor, X: np.ndarray, start: int) -> np.ndarray:
    R = np.ones((X.shape[0], 1), dtype=X.dtype)
    for core in reversed(t.cores[start:]):
        R = _sweep_right(core, R, X)
    return R


def contract_scalar(t: TTTensor, x):
    """A x^d: all d modes contracted, accumulated left to right."""
    X, single = _as_batch(t, x)
    L = np.ones((X.shape[0], 1), dtype=X.dtype)
    for core in t.cores:
        L = _sweep_left(core, L, X)
    return L[0, 0] if single else L[:, 0]


def contract_vector(t: TTTensor, x):
    """A x^{d-1}: modes 2..d contracted, mode 1 left free."""
    X, single = _as_batch(t, x)
    R = _right_environment(t, X, 1)
    first = t.cores[0]
    Y = _scatter_sum(R[:, first.right] * first.values, first.scatter_mode)
    return Y[0] if single else Y


def contract_matrix(t: TTTensor, x):
    """A x^{d-2}: modes 3..d contracted, an n x n matrix per input vector."""
    if t.d < 2:
        raise ValueError("contract_matrix needs order d >= 2")
    X, single = _as_batch(t, x)
    R = _right_environment(t, X, 2)
    second = t.cores[1]
    r1, n, _ = second.shape
    P = _scatter_sum(R[:, second.right] * second.values, second.scatter_left_mode)
    P = P.reshape(-1, r1, n)
    G1 = t.cores[0].mode_matrix
    if G1.shape[0] * G1.shape[1] <= 10**6:
        M = G1.toarray() @ P
    else:
        M = np.stack([np.asarray(G1 @ Pm) for Pm in P])
    return M[0] if single else M


# --------------------------------------------------------------------------
# constructors


def meet_tt(S, f: ScalarFunction, d: int, dtype=np.float64) -> TTTensor:
    """Exact rank-n tensor train of the meet (GCD) tensor f(gcd(x_i1, ..., x_id)).

    Cores: G_1(i)[0, j] = D_j E[i, j], G(i)[j, j] = E[i, j], G_d(i)[j, 0] = E[i, j].
    Positions 2..d-1 all reference the same middle core.
    """
    S = S if isinstance(S, LatticeSet) else LatticeSet(S)
    if d < 2:
        raise ValueError("meet_tt needs order d >= 2")
    D = meet_coefficients(S, f)
    n = S.n
    rows, cols = divisor_pairs(S)
    zeros = np.zeros(rows.size, dtype=np.int64)
    ones = np.ones(rows.size)
    first = Core((1, n, n), zeros, rows, cols, D[cols].astype(dtype), dtype)
    last = Core((n, n, 1), cols, rows, zeros, ones, dtype)
    cores = [first]
    if d > 2:
        middle = Core((n, n, n), cols, rows, cols, ones, dtype)
        cores += [middle] * (d - 2)
    cores.append(last)
    return TTTensor(cores, meta={"kind": "meet", "function": f.name, "nonnegative": f.nonnegative})


def ones_tt(n: int, d: int, dtype=np.float64) -> TTTensor:
    """Rank-1 tensor train of all ones."""
    return rank1_tt(np.ones(n), d, dtype)


def rank1_tt(u, d: int, dtype=np.float64) -> TTTensor:
    """u (x) u (x) ... (x) u as a rank-1 tensor train."""
    u = np.asarray(u, dtype=dtype)
    core = Core.from_dense(u.reshape(1, -1, 1), dtype)
    return TTTensor([core] * d)


# --------------------------------------------------------------------------
# dense views


def to_dense(t: TTTensor, cap: int = DENSE_CAP) -> np.ndarray:
    size = math.prod(t.dims)
    if size > cap:
        raise ValueError(f"dense tensor of {size} elements exceeds cap {cap}")
    M = t.cores[0].to_dense().reshape(t.dims[0], -1)
    for core in t.cores[1:]:
        r0, n, r1 = core.shape
        M = (M @ core.to_dense().reshape(r0, n * r1)).reshape(-1, r1)
    return M.reshape(t.dims)


def unfolding_rank(a: np.ndarray, k: int, tol: float = 1e-10, cap: int = DENSE_CAP) -> int:
    """Numerical rank of the unfolding A_[k] (singular values above tol * sigma_max)."""
    a = np.asarray(a)
    if not 1 <= k <= a.ndim - 1:
        raise ValueError(f"split position must lie in 1..{a.ndim - 1}")
    if a.size > cap:
        raise ValueError(f"dense tensor of {a.size} elements exceeds cap {cap}")
    rows = math.prod(a.shape[:k])
    s = np.linalg.svd(a.reshape(rows, -1).astype(np.float64), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def tt_ranks(t: TTTensor) -> list[int]:
    return t.ranks


# --------------------------------------------------------------------------
# text serialization: header "tt <d> <n> <r_0> ... <r_d>", then "k i row col value"


def _format_value(v) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def dumps(t: TTTensor) -> str:
    out = io.StringIO()
    out.write("tt {} {} {}\n".format(t.d, t.n, " ".join(map(str, t.ranks))))
    for k, core in enumerate(t.cores):
        for i, a, b, v in zip(core.mode, core.left, core.right, core.values):
            out.write(f"{k} {i} {a} {b} {_format_value(v)}\n")
    return out.getvalue()


def loads(text: str, dtype=np.float64) -> TTTensor:
    lines = text.splitlines()
    header = lines[0].split()
    if not header or header[0] != "tt":
        raise ValueError("not a tensor-train file")
    d, n = int(header[1]), int(header[2])
    ranks = [int(r) for r in header[3:]]
    if len(ranks) != d + 1:
        raise ValueError("rank list does not match the order")
    entries = [[] for _ in range(d)]
    for line in lines[1:]:
        if line.strip():
            k, i, a, b, v = line.split()
            entries[int(k)].append((int(i), int(a), int(b), float(v)))
    cores = []
    for k in range(d):
        e = np.asarray(entries[k], dtype=np.float64).reshape(-1, 4)
        cores.append(
            Core((ranks[k], n, ranks[k + 1]), e[:, 1], e[:, 0], e[:, 2], e[:, 3], dtype)
        )
    return TTTensor(cores)


def save(t: TTTensor, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(t))


def load(path, dtype=np.float64) -> TTTensor:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), dtype)
