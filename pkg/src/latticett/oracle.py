"""Dense brute-force references.

Everything here is deliberately naive: entries are evaluated one index tuple
at a time with the standard library gcd/lcm, and contractions are plain
tensordots over full arrays. Nothing is shared with the TT code paths, so a
bug in one cannot hide in the other.
"""
from __future__ import annotations

import itertools
import math
from functools import reduce

import numpy as np

from .eigen import ContractionProvider, Eigenpair, MixedSignError, SolverConfig
from .lattice import LCM_MAX
from .tt import DENSE_CAP


def _check_cap(n, d, cap):
    if n**d > cap:
        raise ValueError(f"{n}^{d} entries exceed the dense cap {cap}")


def _dense(S, f, d, op, cap):
    xs = [int(v) for v in S]
    n = len(xs)
    _check_cap(n, d, cap)
    out = np.empty((n,) * d)
    for idx in itertools.product(range(n), repeat=d):
        v = reduce(op, (xs[i] for i in idx))
        if v > LCM_MAX:
            raise OverflowError(f"lattice value {v} exceeds 64 bits")
        out[idx] = float(f(v))
    return out


def dense_meet(S, f, d: int, cap: int = DENSE_CAP) -> np.ndarray:
    """Array of f(gcd(x_i1, ..., x_id)) over all index tuples."""
    return _dense(S, f, d, math.gcd, cap)


def dense_join(S, f, d: int, cap: int = DENSE_CAP) -> np.ndarray:
    """Array of f(lcm(x_i1, ..., x_id)) over all index tuples."""
    return _dense(S, f, d, math.lcm, cap)


def dense_contract(a: np.ndarray, x, times: int) -> np.ndarray:
    """Contract the last ``times`` modes of ``a`` with ``x``."""
    a = np.asarray(a)
    x = np.asarray(x)
    if times < 0 or times > a.ndim:
        raise ValueError(f"cannot contract {times} modes of an order-{a.ndim} array")
    for _ in range(times):
        if a.shape[-1] != x.shape[0]:
            raise ValueError("dimension mismatch")
        a = np.tensordot(a, x, axes=([a.ndim - 1], [0]))
    return a


def unfolding(a: np.ndarray, k: int) -> np.ndarray:
    return np.reshape(a, (int(np.prod(a.shape[:k])), -1))


class DenseProvider(ContractionProvider):
    """Contraction provider backed by a full array."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)
        self.d = self.a.ndim
        self.n = self.a.shape[0]

    def _scalar(self, X):
        return np.array([dense_contract(self.a, x, self.d) for x in X])

    def _vector(self, X):
        return np.array([dense_contract(self.a, x, self.d - 1) for x in X])

    def _matrix(self, X):
        return np.array([dense_contract(self.a, x, self.d - 2) for x in X])


def dense_shopm(a: np.ndarray, cfg: SolverConfig, x0) -> Eigenpair:
    """The higher-order power method on a full array, one vector at a time."""
    a = np.asarray(a, dtype=float)
    d = a.ndim
    m = d if cfg.mode == "H" else 2
    x = np.asarray(x0, dtype=float)
    x = x / np.linalg.norm(x)

    def rayleigh(x):
        return dense_contract(a, x, d) / np.sum(np.abs(x) ** m)

    def defect(x, lam):
        b = x ** (d - 1) if m == d else x
        return np.linalg.norm(dense_contract(a, x, d - 1) - lam * b)

    lam = rayleigh(x)
    history = [lam]
    converged = False
    k = 0
    for k in range(1, cfg.max_iters + 1):
        y = dense_contract(a, x, d - 1)
        if m == d:
            if np.any(y < 0):
                raise MixedSignError("negative entry under a fractional power")
            z = y ** (1.0 / (m - 1))
        else:
            z = y
        x = z / np.linalg.norm(z)
        new = rayleigh(x)
        history.append(new)
        scale = max(1.0, abs(new))
        converged = abs(new - lam) < cfg.tol * scale and defect(x, new) <= cfg.res_tol * scale
        lam = new
        if converged:
            break
    return Eigenpair(lam, x, k, converged, float(defect(x, lam)), history=history)


def eigenvalues_2d(a: np.ndarray, b: np.ndarray | str = "H", grid: int = 20001) -> np.ndarray:
    """All real eigenvalues of Ax^{d-1} = lam Bx^{d-1} for n = 2, by a sign scan.

    ``b`` is a full array or "H" / "Z" for the Kronecker / identity tensors.
    Writing x = (cos t, sin t), eigenvectors are the zeros of the 2D cross
    product of Ax^{d-1} and Bx^{d-1}; every sign change on a fine grid is
    refined by bisection. Directions where Bx^d vanishes are dropped.
    """
    a = np.asarray(a, dtype=float)
    d = a.ndim
    if a.shape[0] != 2:
        raise ValueError("the scan oracle handles n = 2 only")

    def bvec(x):
        if isinstance(b, str):
            return x ** (d - 1) if b == "H" else np.linalg.norm(x) ** (d - 2) * x
        return dense_contract(b, x, d - 1)

    def point(t):
        return np.array([math.cos(t), math.sin(t)])

    def g(t):
        x = point(t)
        u, v = dense_contract(a, x, d - 1), bvec(x)
        return u[0] * v[1] - u[1] * v[0]

    ts = np.linspace(0.0, math.pi, grid)
    gs = np.array([g(t) for t in ts])
    roots = [t for t, v in zip(ts, gs) if v == 0.0]
    for k in np.flatnonzero(np.sign(gs[:-1]) * np.sign(gs[1:]) < 0):
        lo, hi, glo = ts[k], ts[k + 1], gs[k]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if gm == 0.0 or hi - lo < 1e-16:
                break
            if np.sign(gm) == np.sign(glo):
                lo, glo = mid, gm
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    lams = []
    for t in roots:
        x = point(t)
        den = float(x @ bvec(x))
        if abs(den) > 1e-12:
            lams.append(float(dense_contract(a, x, d)) / den)
    return np.unique(np.round(np.array(lams), 12))
