"""TT-DMRG cross interpolation and the MaxVol row selection it relies on."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import tt
from .lattice import LCM_MAX, ScalarFunction, identity, lcm_many

__all__ = ["ElementOracle", "CrossConfig", "maxvol", "dmrg_cross", "lcm_oracle", "lcm_tt"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ElementOracle:
    """Element access to a tensor that is never stored in full.

    ``batch`` (optional) maps an (m, d) array of 0-based indices to m values
    and is preferred over calling ``eval`` once per index.
    """

    dims: tuple[int, ...]
    eval: Callable[[tuple[int, ...]], float]
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def values(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, len(self.dims))
        if self.batch is not None:
            return np.asarray(self.batch(idx), dtype=np.float64)
        return np.fromiter((self.eval(tuple(i)) for i in idx), np.float64, idx.shape[0])


@dataclass(frozen=True)
class CrossConfig:
    eps: float = 1e-14
    max_sweeps: int = 20
    initial_rank: int = 2
    seed: int = 0
    max_rank: Optional[int] = None
    kick: int = 2
    n_check: int = 1000

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.initial_rank < 1:
            raise ValueError("initial_rank must be at least 1")


def maxvol(m: np.ndarray, delta: float = 1e-2, max_swaps: int = 200) -> np.ndarray:
    """Rows of a tall matrix spanning a quasi-dominant square submatrix.

    On return every entry of ``m @ inv(m[idx])`` is at most 1 + delta in
    absolute value, unless ``max_swaps`` ran out first.
    """
    m = np.asarray(m, dtype=np.float64)
    N, r = m.shape
    if N < r:
        raise ValueError("maxvol needs at least as many rows as columns")
    if r == 0:
        return np.zeros(0, dtype=np.int64)
    idx = _lu_rows(m)
    B = np.linalg.solve(m[idx].T, m.T).T
    for _ in range(max_swaps):
        i, j = np.unravel_index(np.argmax(np.abs(B)), B.shape)
        if abs(B[i, j]) <= 1 + delta:
            break
        # rank-one update of B after replacing row idx[j] by row i
        col = B[:, j].copy()
        row = B[i, :].copy()
        row[j] -= 1.0
        B -= np.outer(col, row) / B[i, j]
        idx[j] = i
    return idx


def _lu_rows(m: np.ndarray) -> np.ndarray:
    # rows selected by Gaussian elimination with partial pivoting
    N, r = m.shape
    A = m.copy()
    rows = np.arange(N)
    floor = np.finfo(float).eps * max(N, r) * np.abs(m).max()
    for k in range(r):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) <= floor:
            raise np.linalg.LinAlgError("maxvol: matrix is rank deficient")
        A[[k, p]] = A[[p, k]]
        rows[[k, p]] = rows[[p, k]]
        A[k + 1 :, k:] -= np.outer(A[k + 1 :, k] / A[k, k], A[k, k:])
    return rows[:r].copy()


def _grid(left: np.ndarray, n1: int, n2: int, right: np.ndarray) -> np.ndarray:
    """All indices (left[a], i, j, right[b]) in C order over (a, i, j, b)."""
    rl, rr = left.shape[0], right.shape[0]
    parts = [
        np.broadcast_to(left[:, None, None, None, :], (rl, n1, n2, rr, left.shape[1])),
        np.broadcast_to(np.arange(n1)[None, :, None, None, None], (rl, n1, n2, rr, 1)),
        np.broadcast_to(np.arange(n2)[None, None, :, None, None], (rl, n1, n2, rr, 1)),
        np.broadcast_to(right[None, None, None, :, :], (rl, n1, n2, rr, right.shape[1])),
    ]
    return np.concatenate(parts, axis=-1).reshape(-1, left.shape[1] + right.shape[1] + 2)


def _core_grid(left: np.ndarray, n: int, right: np.ndarray) -> np.ndarray:
    rl, rr = left.shape[0], right.shape[0]
    parts = [
        np.broadcast_to(left[:, None, None, :], (rl, n, rr, left.shape[1])),
        np.broadcast_to(np.arange(n)[None, :, None, None], (rl, n, rr, 1)),
        np.broadcast_to(right[None, None, :, :], (rl, n, rr, right.shape[1])),
    ]
    return np.concatenate(parts, axis=-1).reshape(-1, left.shape[1] + right.shape[1] + 1)


def _random_left_sets(dims, r, rng):
    d = len(dims)
    I = [np.zeros((1, 0), dtype=np.int64)]
    for b in range(1, d):
        prev = I[-1]
        size = min(r, prev.shape[0] * dims[b - 1])
        pick = rng.integers(prev.shape[0], size=size)
        mode = rng.integers(dims[b - 1], size=size)
        new = np.unique(np.hstack([prev[pick], mode[:, None]]), axis=0)
        I.append(new)
    return I


def _random_right_sets(dims, r, rng):
    d = len(dims)
    J = [None] * (d + 1)
    J[d] = np.zeros((1, 0), dtype=np.int64)
    for b in range(d - 1, 0, -1):
        prev = J[b + 1]
        size = min(r, prev.shape[0] * dims[b])
        pick = rng.integers(prev.shape[0], size=size)
        mode = rng.integers(dims[b], size=size)
        J[b] = np.unique(np.hstack([mode[:, None], prev[pick]]), axis=0)
    return J


def _kicked(base: np.ndarray, pivots: np.ndarray, dims, kick: int, rng) -> np.ndarray:
    # extra multi-indices widen the sampled fibers, not the kept rank
    if base.shape[1] == 0:
        return base
    extra = np.column_stack([rng.integers(n, size=kick) for n in dims])
    merged = np.vstack([base, pivots, extra])
    _, first = np.unique(merged, axis=0, return_index=True)
    return merged[np.sort(first)]


def _structured_indices(dims) -> np.ndarray:
    """Constant indices plus single-mode moves away from the zero corner.

    Uniform samples rarely land on these, yet low indices are where lattice
    tensors tend to hide their rarest fibres.
    """
    d = len(dims)
    rows = [np.full(d, v) for v in range(min(dims))]
    for k, n in enumerate(dims):
        for v in range(1, n):
            row = np.zeros(d, dtype=np.int64)
            row[k] = v
            rows.append(row)
    return np.array(rows, dtype=np.int64)


def _assemble(oracle: ElementOracle, I, J) -> tt.TTTensor:
    """Cross-interpolation tensor train: core_k = A(I_k, i, J_{k+1}) A(I_{k+1}, J_{k+1})^{-1}."""
    dims = oracle.dims
    d = len(dims)
    cores = []
    for k in range(d):
        left, right = I[k], J[k + 1]
        C = oracle.values(_core_grid(left, dims[k], right))
        C = C.reshape(left.shape[0] * dims[k], right.shape[0])
        if k < d - 1:
            P = oracle.values(
                np.hstack([np.repeat(I[k + 1], J[k + 1].shape[0], axis=0),
                           np.tile(J[k + 1], (I[k + 1].shape[0], 1))])
            ).reshape(I[k + 1].shape[0], J[k + 1].shape[0])
            C = np.linalg.solve(P.T, C.T).T
        cores.append(C.reshape(left.shape[0], dims[k], right.shape[0]))
    return tt.TTTensor.from_dense_cores(cores)


def dmrg_cross(oracle: ElementOracle, cfg: CrossConfig = CrossConfig()) -> tt.TTTensor:
    """Interpolate a tensor train from element evaluations.

    Each bond b carries left indices I_b and right indices J_b of equal size
    r_b. Updating bond b samples the supercore A(I_{b-1}, i_b, i_{b+1}, J_{b+1}),
    truncates its SVD at ``eps`` relative to the leading singular value and
    picks the new I_b / J_b with maxvol on the singular vectors. A sweep visits
    bonds 1..d-1 and then d-2..1. The result carries a ``meta`` dict with
    ``converged``, ``sweeps``, ``rank_capped`` and ``symmetry_error``.
    """
    dims = tuple(int(n) for n in oracle.dims)
    d = len(dims)
    if d == 0:
        raise ValueError("oracle has no modes")
    rng = np.random.default_rng(cfg.seed)
    if d == 1:
        core = oracle.values(np.arange(dims[0])[:, None]).reshape(1, dims[0], 1)
        return tt.TTTensor.from_dense_cores([core], meta={"converged": True, "sweeps": 0})

    I = _random_left_sets(dims, cfg.initial_rank, rng)
    J = _random_right_sets(dims, cfg.initial_rank, rng)
    check = np.vstack([_structured_indices(dims), np.column_stack([rng.integers(n, size=cfg.n_check) for n in dims])])
    exact = oracle.values(check)
    exact_norm = max(float(np.linalg.norm(exact)), np.finfo(float).tiny)
    pivots = np.zeros((0, d), dtype=np.int64)
    rank_capped = False

    def update(b):
        nonlocal rank_capped
        n1, n2 = dims[b - 1], dims[b]
        left = _kicked(I[b - 1], pivots[:, : b - 1], dims[: b - 1], cfg.kick, rng)
        right = _kicked(J[b + 1], pivots[:, b + 1 :], dims[b + 1 :], cfg.kick, rng)
        W = oracle.values(_grid(left, n1, n2, right)).reshape(left.shape[0] * n1, n2 * right.shape[0])
        U, s, Vt = np.linalg.svd(W, full_matrices=False)
        r = max(int(np.count_nonzero(s > cfg.eps * s[0])), 1) if s[0] > 0 else 1
        if cfg.max_rank is not None and r > cfg.max_rank:
            r = cfg.max_rank
            rank_capped = True
        rows = maxvol(U[:, :r])
        cols = maxvol(Vt[:r].T)
        a, i = np.divmod(rows, n1)
        I[b] = np.hstack([left[a], i[:, None]])
        j, c = np.divmod(cols, right.shape[0])
        J[b] = np.hstack([j[:, None], right[c]])

    converged = False
    prev_est = prev_ranks = None
    best = best_err = None
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        for b in list(range(1, d)) + list(range(d - 2, 0, -1)):
            update(b)
        result = _assemble(oracle, I, J)
        approx = tt.elements(result, check)
        est = float(np.linalg.norm(approx))
        miss = np.abs(approx - exact)
        err = float(np.linalg.norm(miss)) / exact_norm
        ranks = result.ranks
        log.debug("sweep %d: ranks %s, sample norm %.17g, sample error %.3g", sweeps, ranks, est, err)
        if best_err is None or err <= best_err:
            best, best_err = result, err
        if (
            prev_est is not None
            and ranks == prev_ranks
            and abs(est - prev_est) <= cfg.eps * max(est, np.finfo(float).tiny)
            and err <= 10 * cfg.eps
        ):
            converged = True
            best, best_err = result, err
            break
        if err > 10 * cfg.eps:
            # the worst-fitting sample becomes a candidate pivot for every bond
            pivots = np.vstack([pivots, check[np.argmax(miss)]])
        prev_est, prev_ranks = est, ranks

    best.meta.update(
        converged=converged,
        sweeps=sweeps,
        rank_capped=rank_capped,
        sample_error=best_err,
        symmetry_error=_symmetry_error(best, rng),
    )
    return best


def _symmetry_error(t: tt.TTTensor, rng, samples: int = 100) -> float:
    # largest relative change under a random index permutation (reported only)
    idx = np.column_stack([rng.integers(n, size=samples) for n in t.dims])
    if len(set(t.dims)) != 1:
        return float("nan")
    perm = np.array([rng.permutation(t.d) for _ in range(samples)])
    shuffled = np.take_along_axis(idx, perm, axis=1)
    a, b = tt.elements(t, idx), tt.elements(t, shuffled)
    scale = max(float(np.abs(a).max()), np.finfo(float).tiny)
    return float(np.abs(a - b).max() / scale)


def _lcm_upto(n: int) -> int:
    out = 1
    for k in range(2, n + 1):
        out = math.lcm(out, k)
    return out


def lcm_oracle(n: int, d: int, f: ScalarFunction | None = None) -> ElementOracle:
    """idx -> f(lcm(i_1 + 1, ..., i_d + 1)) over S = {1..n}."""
    f = f or identity()
    # a d-ary lcm over 1..n divides lcm(1..n) and is at most n^d
    if n**d > LCM_MAX and _lcm_upto(n) > LCM_MAX:
        raise OverflowError(f"order-{d} lcm values over 1..{n} can exceed the 64-bit range")

    def batch(idx):
        vals = np.lcm.reduce(idx + 1, axis=1)
        return f.values(vals).astype(np.float64)

    def single(idx):
        return float(f(lcm_many(i + 1 for i in idx)))

    return ElementOracle((n,) * d, single, batch)


def lcm_tt(n: int, d: int, f: ScalarFunction | None = None, cfg: CrossConfig = CrossConfig()) -> tt.TTTensor:
    if n < 1 or d < 2:
        raise ValueError("lcm_tt needs n >= 1 and d >= 2")
    f = f or identity()
    t = dmrg_cross(lcm_oracle(n, d, f), cfg)
    t.meta.update(kind="join", function=f.name)
    return t
