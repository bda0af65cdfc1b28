"""Tensor eigenvalue solvers working on contraction providers.

A provider hands out ``Bx^d``, ``Bx^{d-1}`` and ``Bx^{d-2}`` for a symmetric
tensor B, either from a tensor train or from a closed form (the Kronecker
tensor for H-eigenvalues, the identity tensor for Z-eigenvalues). On top of
that sit the higher-order power method (``shopm``), the adaptive shifted power
method (``geap``) with its analytic Hessian, the meet-tensor inclusion bound
and the random-start prescreening used for minimal eigenvalues.

Every provider method is batched: ``x`` may be a single vector of length n or
an (m, n) stack, and the result gains a leading axis of length m in the
second case.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tt
from .lattice import LatticeSet, ScalarFunction

__all__ = [
    "ContractionProvider",
    "TTProvider",
    "KroneckerProvider",
    "IdentityProvider",
    "NegatedProvider",
    "as_provider",
    "SolverConfig",
    "Eigenpair",
    "MixedSignError",
    "IndefiniteError",
    "shopm",
    "shopm_trials",
    "geap",
    "hessian",
    "shift_alpha",
    "eigen_bound",
    "gershgorin_disks",
    "prescreen",
    "random_guesses",
    "residual",
    "write_trace",
]

log = logging.getLogger(__name__)


class MixedSignError(ValueError):
    """H-mode power step met a negative entry under a fractional power."""


class IndefiniteError(ValueError):
    """The denominator tensor is not positive along the iterate path."""


def _batch(x, n: int) -> tuple[np.ndarray, bool]:
    X = np.asarray(x)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.ndim != 2 or X.shape[1] != n:
        raise ValueError(f"expected vectors of length {n}, got shape {np.shape(x)}")
    return X, single


# --------------------------------------------------------------------------
# providers


class ContractionProvider:
    """Base class. Subclasses implement the three batched ``_`` methods."""

    n: int
    d: int

    def _scalar(self, X):
        raise NotImplementedError

    def _vector(self, X):
        raise NotImplementedError

    def _matrix(self, X):
        raise NotImplementedError

    def scalar(self, x):
        X, single = _batch(x, self.n)
        s = self._scalar(X)
        return s[0] if single else s

    def vector(self, x):
        X, single = _batch(x, self.n)
        v = self._vector(X)
        return v[0] if single else v

    def matrix(self, x):
        X, single = _batch(x, self.n)
        M = self._matrix(X)
        return M[0] if single else M

    def contractions(self, X):
        """(Bx^d, Bx^{d-1}, Bx^{d-2}) for a batch X of shape (m, n)."""
        return self._scalar(X), self._vector(X), self._matrix(X)


class TTProvider(ContractionProvider):
    def __init__(self, t: tt.TTTensor):
        if len(set(t.dims)) != 1:
            raise ValueError("a symmetric tensor needs equal mode sizes")
        self.t = t
        self.n = t.n
        self.d = t.d

    def _scalar(self, X):
        return tt.contract_scalar(self.t, X)

    def _vector(self, X):
        return tt.contract_vector(self.t, X)

    def _matrix(self, X):
        return tt.contract_matrix(self.t, X)

    def contractions(self, X):
        # one pass through the train; the lower contractions follow from the matrix
        M = self._matrix(X)
        v = np.einsum("mij,mj->mi", M, X)
        s = np.einsum("mi,mi->m", v, X)
        return s, v, M

    def __repr__(self):
        return f"TTProvider(n={self.n}, d={self.d}, ranks={self.t.ranks})"


class KroneckerProvider(ContractionProvider):
    """The diagonal tensor with unit diagonal; its B-eigenvalues are H-eigenvalues."""

    def __init__(self, n: int, d: int):
        self.n, self.d = int(n), int(d)

    def _scalar(self, X):
        return np.sum(X**self.d, axis=1)

    def _vector(self, X):
        return X ** (self.d - 1)

    def _matrix(self, X):
        m, n = X.shape
        M = np.zeros((m, n, n), dtype=X.dtype)
        M[:, np.arange(n), np.arange(n)] = X ** (self.d - 2)
        return M

    def __repr__(self):
        return f"KroneckerProvider(n={self.n}, d={self.d})"


class IdentityProvider(ContractionProvider):
    """The tensor with Ex^d = |x|^d; its B-eigenvalues are Z-eigenvalues."""

    def __init__(self, n: int, d: int):
        self.n, self.d = int(n), int(d)

    def _norms(self, X):
        return np.linalg.norm(X, axis=1)

    def _scalar(self, X):
        return self._norms(X) ** self.d

    def _vector(self, X):
        return (self._norms(X) ** (self.d - 2))[:, None] * X

    def _matrix(self, X):
        d = self.d
        r = self._norms(X)
        eye = np.eye(self.n, dtype=X.dtype)
        M = (r ** (d - 2))[:, None, None] * eye
        if d != 2:
            M = M + ((d - 2) * r ** (d - 4))[:, None, None] * np.einsum("mi,mj->mij", X, X)
        return M / (d - 1)

    def __repr__(self):
        return f"IdentityProvider(n={self.n}, d={self.d})"


class NegatedProvider(ContractionProvider):
    def __init__(self, base: ContractionProvider):
        self.base = base
        self.n, self.d = base.n, base.d

    def _scalar(self, X):
        return -self.base._scalar(X)

    def _vector(self, X):
        return -self.base._vector(X)

    def _matrix(self, X):
        return -self.base._matrix(X)

    def contractions(self, X):
        s, v, M = self.base.contractions(X)
        return -s, -v, -M

    def __repr__(self):
        return f"NegatedProvider({self.base!r})"


def as_provider(obj) -> ContractionProvider:
    if isinstance(obj, ContractionProvider):
        return obj
    if isinstance(obj, tt.TTTensor):
        return TTProvider(obj)
    raise TypeError(f"cannot build a contraction provider from {type(obj).__name__}")


def _denominator(mode: str, n: int, d: int) -> ContractionProvider:
    if mode == "H":
        return KroneckerProvider(n, d)
    if mode == "Z":
        return IdentityProvider(n, d)
    raise ValueError(f"mode {mode!r} has no built-in denominator tensor")


# --------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "H"
    beta: int = 1
    tau: float = 10.0
    tol: float = 1e-14
    max_iters: int = 20
    seed: int = 0
    precision: str = "double"
    hessian_bound: str = "eigh"
    res_tol: float = 1e-8

    def __post_init__(self):
        if self.mode not in ("H", "Z", "B"):
            raise ValueError(f"mode must be H, Z or B, not {self.mode!r}")
        if self.beta not in (1, -1):
            raise ValueError("beta must be +1 or -1")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.precision not in tt.PRECISIONS:
            raise ValueError(f"unknown precision {self.precision!r}")
        if self.hessian_bound not in ("eigh", "gershgorin"):
            raise ValueError("hessian_bound must be 'eigh' or 'gershgorin'")


@dataclass
class Eigenpair:
    lam: float
    x: np.ndarray
    iterations: int
    converged: bool
    residual: float
    history: list = field(default_factory=list)
    shifted_min: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    def __repr__(self):
        return (
            f"Eigenpair(lam={self.lam!r}, iterations={self.iterations}, "
            f"converged={self.converged}, residual={self.residual:.3g})"
        )


def _close(new, old, tol):
    return np.abs(new - old) < tol * np.maximum(1.0, np.abs(new))


def _unit(x, dtype=np.float64) -> np.ndarray:
    x = np.asarray(x, dtype=dtype)
    nrm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(nrm == 0):
        raise ValueError("starting vector must be nonzero")
    return x / nrm


def random_guesses(n: int, count: int, seed: int, low: float = -1.0, high: float = 1.0) -> np.ndarray:
    """Unit starting vectors; guess t comes from its own stream seeded by (seed, t)."""
    X = np.empty((count, n))
    for t in range(count):
        X[t] = np.random.default_rng([seed, t]).uniform(low, high, size=n)
    return _unit(X)


def _default_start(mode: str, n: int, seed: int) -> np.ndarray:
    low = 0.0 if mode == "H" else -1.0
    return random_guesses(n, 1, seed, low=low)[0]


# --------------------------------------------------------------------------
# higher-order power method


def _shopm_batch(a: ContractionProvider, X0: np.ndarray, cfg: SolverConfig):
    if cfg.mode not in ("H", "Z"):
        raise ValueError("shopm handles H and Z modes only")
    d = a.d
    m = d if cfg.mode == "H" else 2
    X = X0.copy()
    Y = a.vector(X)
    lam = np.einsum("ki,ki->k", X, Y) / _mnorm(X, m)
    histories = [[v] for v in lam]
    iters = np.zeros(len(X), dtype=int)
    done = np.zeros(len(X), dtype=bool)
    for k in range(1, cfg.max_iters + 1):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        Ya = Y[act]
        if m == 2:
            Z = Ya
        else:
            if np.any(Ya < 0):
                raise MixedSignError(
                    "H-mode power step produced a negative entry; use geap with a Kronecker denominator"
                )
            Z = Ya ** (1.0 / (m - 1))
        Xa = _unit(Z, dtype=X.dtype)
        Ynew = a.vector(Xa)
        lam_new = np.einsum("ki,ki->k", Xa, Ynew) / _mnorm(Xa, m)
        # lam settles long before x does, so the defect must be small as well
        defect = np.linalg.norm(Ynew - lam_new[:, None] * _bvec(Xa, m, d), axis=1)
        conv = _close(lam_new, lam[act], cfg.tol) & (defect <= cfg.res_tol * np.maximum(1.0, np.abs(lam_new)))
        X[act], Y[act] = Xa, Ynew
        lam[act] = lam_new
        iters[act] = k
        for j, v in zip(act, lam_new):
            histories[j].append(v)
        done[act[conv]] = True
    return lam, X, iters, done, histories


def _bvec(X, m, d):
    return X ** (d - 1) if m == d else X


def _mnorm(X, m):
    if m == 2:
        return np.einsum("ki,ki->k", X, X)
    return np.sum(np.abs(X) ** m, axis=1)


def _as_tt_provider(a, cfg: SolverConfig) -> ContractionProvider:
    if isinstance(a, tt.TTTensor):
        return TTProvider(a.astype(tt.PRECISIONS[cfg.precision]))
    return as_provider(a)


def shopm_trials(a, cfg: SolverConfig, X0) -> list[Eigenpair]:
    """Run the power method from every row of X0 as one batch."""
    a = _as_tt_provider(a, cfg)
    X0 = _unit(np.atleast_2d(X0), dtype=tt.PRECISIONS[cfg.precision])
    lam, X, iters, done, hist = _shopm_batch(a, X0, cfg)
    b = _denominator(cfg.mode, a.n, a.d)
    res = np.linalg.norm(a.vector(X) - lam[:, None] * b.vector(X), axis=1)
    return [
        Eigenpair(lam[j], X[j], int(iters[j]), bool(done[j]), float(res[j]), history=hist[j])
        for j in range(len(X))
    ]


def shopm(a, cfg: SolverConfig = SolverConfig(), x0=None) -> Eigenpair:
    """Higher-order power method for H- (m = d) or Z- (m = 2) eigenpairs.

    ``a`` is a TTTensor or a provider. Without ``x0`` the start is drawn from
    the seeded stream: uniform on [0, 1]^n for H-mode, on [-1, 1]^n for Z.
    """
    if x0 is None:
        n = a.n if isinstance(a, (tt.TTTensor, ContractionProvider)) else len(a)
        x0 = _default_start(cfg.mode, n, cfg.seed)
    return shopm_trials(a, cfg, np.asarray(x0)[None, :])[0]


# --------------------------------------------------------------------------
# adaptive shifted power method


def _hessian_batch(A, a, A2, B, b, B2, X, d):
    def outer(u, v):
        return u[:, :, None] * v[:, None, :]

    n = X.shape[1]
    A_ = A[:, None, None]
    B_ = B[:, None, None]
    H = (2 * d * d) * A_ / B_**3 * outer(b, b)
    H += d / B_ * ((d - 1) * A2 + A_ * (d - 2) * outer(X, X) + d * (outer(a, X) + outer(X, a)))
    H[:, np.arange(n), np.arange(n)] += (d * A / B)[:, None]
    H -= d / B_**2 * ((d - 1) * A_ * B2 + d * (outer(a, b) + outer(b, a)) + d * A_ * (outer(X, b) + outer(b, X)))
    return 0.5 * (H + np.swapaxes(H, 1, 2))


def hessian(a, b, x) -> np.ndarray:
    """Hessian of x -> (Ax^d / Bx^d) |x|^d, valid on the unit sphere."""
    a, b = as_provider(a), as_provider(b)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    A, va, A2 = a.contractions(X)
    B, vb, B2 = b.contractions(X)
    if np.any(B == 0):
        raise IndefiniteError("Bx^d vanishes; the Hessian is undefined here")
    return _hessian_batch(A, va, A2, B, vb, B2, X, a.d)[0]


def _lambda_min(H, how="eigh"):
    if how == "eigh":
        return np.linalg.eigvalsh(H)[..., 0]
    # a Gershgorin lower bound: cheaper and still safe for the shift
    diag = np.diagonal(H, axis1=-2, axis2=-1)
    off = np.sum(np.abs(H), axis=-1) - np.abs(diag)
    return np.min(diag - off, axis=-1)


def shift_alpha(h, tau: float, beta: int, d: int) -> float:
    lmin = _lambda_min(beta * np.asarray(h, dtype=float))
    return beta * max(0.0, (tau - lmin) / d)


def _geap_step(a, b, X, lam, A, va, A2, B, vb, B2, cfg):
    d = a.d
    beta = cfg.beta
    H = _hessian_batch(A, va, A2, B, vb, B2, X, d)
    lmin = _lambda_min(beta * H, cfg.hessian_bound)
    alpha = beta * np.maximum(0.0, (cfg.tau - lmin) / d)
    Xh = beta * (va - lam[:, None] * vb + ((alpha + lam) * B)[:, None] * X)
    return Xh / np.linalg.norm(Xh, axis=1, keepdims=True), alpha, H


def _check_positive(B):
    if np.any(~(B > 0)):
        raise IndefiniteError("Bx^d <= 0 at an iterate: B is not positive along the path")


def geap(a, b, cfg: SolverConfig, x0=None, record: bool = True) -> Eigenpair:
    """Adaptive shifted power method for Ax^{d-1} = lam Bx^{d-1}.

    ``beta = +1`` climbs to a local maximum of Ax^d / Bx^d on the sphere and
    ``beta = -1`` descends to a local minimum. Each step picks the smallest
    shift that makes ``beta`` times the shifted Hessian have eigenvalues at
    least ``tau``, which keeps the lam sequence monotone.
    """
    a, b = as_provider(a), as_provider(b)
    if a.n != b.n or a.d != b.d:
        raise ValueError("A and B must share dimension and order")
    if x0 is None:
        x0 = _default_start(cfg.mode if cfg.mode != "B" else "Z", a.n, cfg.seed)
    X = _unit(np.asarray(x0, dtype=float))[None, :]
    A, va, A2 = a.contractions(X)
    B, vb, B2 = b.contractions(X)
    _check_positive(B)
    lam = A / B
    pair = Eigenpair(float(lam[0]), X[0], 0, False, np.inf, history=[float(lam[0])])
    converged = False
    k = 0
    for k in range(1, cfg.max_iters + 1):
        Xn, alpha, H = _geap_step(a, b, X, lam, A, va, A2, B, vb, B2, cfg)
        if record:
            shifted = cfg.beta * (H[0] + alpha[0] * a.d * np.eye(a.n))
            pair.shifted_min.append(float(np.linalg.eigvalsh(shifted)[0]))
            res = float(np.linalg.norm(va[0] - lam[0] * vb[0]))
            pair.trace.append((k - 1, float(lam[0]), float(alpha[0]), res))
        X = Xn
        A, va, A2 = a.contractions(X)
        B, vb, B2 = b.contractions(X)
        _check_positive(B)
        new = A / B
        pair.history.append(float(new[0]))
        converged = bool(_close(new, lam, cfg.tol)[0])
        lam = new
        if converged:
            break
    pair.lam = float(lam[0])
    pair.x = X[0]
    pair.iterations = k
    pair.converged = converged
    pair.residual = float(np.linalg.norm(va[0] - lam[0] * vb[0]))
    if record:
        pair.trace.append((k, pair.lam, float("nan"), pair.residual))
    log.debug("geap: %d iterations, lam=%r, converged=%s", k, pair.lam, converged)
    return pair


def _geap_values(a, b, X, cfg: SolverConfig, iters: int) -> np.ndarray:
    """lam after ``iters`` steps for each row of X; rows that hit Bx^d <= 0 give inf."""
    A, va, A2 = a.contractions(X)
    B, vb, B2 = b.contractions(X)
    valid = B > 0
    lam = np.where(valid, A / np.where(valid, B, 1.0), np.inf)
    for _ in range(iters):
        act = np.flatnonzero(valid)
        if act.size == 0:
            break
        Xn, _, _ = _geap_step(
            a, b, X[act], lam[act], A[act], va[act], A2[act], B[act], vb[act], B2[act], cfg
        )
        X[act] = Xn
        A, va, A2 = a.contractions(X)
        B, vb, B2 = b.contractions(X)
        valid &= B > 0
        lam = np.where(valid, A / np.where(valid, B, 1.0), np.inf)
    return np.where(np.isfinite(lam), lam, np.inf)


def prescreen(a, b, cfg: SolverConfig, num_guesses: int = 1000, pre_iters: int = 100,
              guesses: Optional[np.ndarray] = None) -> np.ndarray:
    """Pick the starting vector whose short GEAP run ends smallest in magnitude.

    Guesses are uniform on [-1, 1]^n and normalized, one seeded stream per
    guess; ties go to the lowest index. Guesses along which Bx^d turns
    nonpositive are never selected unless all of them do.
    """
    if num_guesses < 1:
        raise ValueError("num_guesses must be at least 1")
    a, b = as_provider(a), as_provider(b)
    X0 = random_guesses(a.n, num_guesses, cfg.seed) if guesses is None else _unit(np.atleast_2d(guesses))
    if len(X0) == 1:
        return X0[0]
    chunk = max(1, 4_000_000 // (a.n * a.n))
    vals = np.concatenate([
        _geap_values(a, b, X0[s : s + chunk].copy(), cfg, pre_iters) for s in range(0, len(X0), chunk)
    ])
    return X0[int(np.argmin(np.abs(vals)))]


def residual(a, b, pair: Eigenpair) -> float:
    a, b = as_provider(a), as_provider(b)
    return float(np.linalg.norm(a.vector(pair.x) - pair.lam * b.vector(pair.x)))


def write_trace(pair: Eigenpair, path) -> None:
    """Write the GEAP trace as CSV rows iter,lambda,alpha,residual."""
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("iter,lambda,alpha,residual\n")
        for k, lam, alpha, res in pair.trace:
            fh.write(f"{k},{lam!r},{alpha!r},{res!r}\n")


# --------------------------------------------------------------------------
# inclusion bound


def eigen_bound(a: tt.TTTensor) -> float:
    """Largest entry of A 1^{d-1}; every H- and Z-eigenvalue of a meet tensor
    with nonnegative f lies below it."""
    if a.meta.get("nonnegative") is False:
        raise ValueError("the row-sum bound needs a nonnegative scalar function")
    return float(np.max(tt.contract_vector(a, np.ones(a.n, dtype=a.dtype))))


def gershgorin_disks(S: LatticeSet, f: ScalarFunction, d: int, cap: int = tt.DENSE_CAP) -> list[tuple[float, float]]:
    """Centers f(x_k) and radii summing |f(x_k ^ x_i2 ^ ... ^ x_id)| over the
    off-diagonal positions of row k."""
    if d < 2:
        raise ValueError("order d must be at least 2")
    n = S.n
    centers = np.asarray(f.values(S.array), dtype=float)
    if f.nonnegative:
        rows = tt.contract_vector(tt.meet_tt(S, f, d), np.ones(n))
        radii = rows - centers
    else:
        if n**d > cap:
            raise ValueError(f"dense radius sums need {n}^{d} entries, above the cap {cap}")
        radii = np.empty(n)
        grid = np.meshgrid(*([S.array] * (d - 1)), indexing="ij")
        for k in range(n):
            g = np.gcd.reduce(np.stack([np.full_like(grid[0], S.array[k])] + list(grid)), axis=0)
            radii[k] = np.sum(np.abs(f.values(g.ravel()))) - abs(centers[k])
    return [(float(c), float(r)) for c, r in zip(centers, radii)]
