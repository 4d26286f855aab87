"""Seeded linear algebra kernels shared by the whole package.

Everything is float64. The spectral radius is estimated by power iteration
(no dense eigensolver on the hot path); dense decompositions stay in the
test suite as oracles.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, SingularMatrixError


class Rng:
    """Deterministic random stream with derivable children.

    Same seed -> bit-identical stream. Children are derived from the parent
    entropy plus an integer key, so forking is order-independent.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._spawn_key: tuple = ()
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    @classmethod
    def _with_key(cls, seed: int, spawn_key: tuple) -> "Rng":
        rng = cls.__new__(cls)
        rng.seed = int(seed)
        rng._spawn_key = tuple(int(k) for k in spawn_key)
        seq = np.random.SeedSequence(rng.seed, spawn_key=rng._spawn_key)
        rng._gen = np.random.Generator(np.random.PCG64(seq))
        return rng

    def child(self, key: int) -> "Rng":
        return Rng._with_key(self.seed, self._spawn_key + (int(key),))

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def sample_uniform(shape, low: float, high: float, rng: Rng) -> np.ndarray:
    """Seeded uniform matrix draw in [low, high)."""
    if high < low:
        raise ConfigError(f"empty interval [{low}, {high})")
    return np.asarray(rng.uniform(low, high, shape), dtype=np.float64)


def _as_square(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ConfigError("matrix has non-finite entries")
    return w


def _power_iteration(matvec, n: int, n_iter: int, tol: float, seed: int, v0=None):
    """Power iteration with a 2x2 Krylov projection.

    Complex-conjugate dominant pairs resolve to their magnitude from the
    projected block's quadratic (sqrt(det) when the discriminant goes
    negative) instead of oscillating. Returns (radius, dominant eigenvalue
    estimate as complex, converged flag).
    """
    if n == 0:
        return 0.0, 0.0 + 0.0j, True
    if v0 is not None:
        v = np.asarray(v0, dtype=np.float64).copy()
    else:
        v = Rng(seed).uniform(-1.0, 1.0, n)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        v = np.ones(n)
        nv = np.linalg.norm(v)
    v /= nv

    est_prev = -1.0
    stable = 0
    est = 0.0
    mu = 0.0 + 0.0j
    for it in range(n_iter):
        av = matvec(v)
        na = np.linalg.norm(av)
        if na == 0.0:
            # iterate collapsed into the kernel: spectrum reachable from v is {0}
            return 0.0, 0.0 + 0.0j, True
        coef = float(av @ v)
        r = av - coef * v
        nr = np.linalg.norm(r)
        res_rel = np.inf
        if nr <= 1e-13 * na:
            est = na
            mu = complex(coef)
            res_rel = nr / max(na, 1e-300)
        else:
            q2 = r / nr
            aq2 = matvec(q2)
            h00, h01 = coef, float(aq2 @ v)
            h10, h11 = nr, float(aq2 @ q2)
            tr = 0.5 * (h00 + h11)
            det = h00 * h11 - h01 * h10
            disc = tr * tr - det
            # component of A q2 outside span{v, q2}: nonzero means the
            # Krylov plane is not invariant and the 2x2 roots can be bogus
            perp = aq2 - h01 * v - h11 * q2
            if disc >= 0.0:
                sq = np.sqrt(disc)
                theta = tr + sq if abs(tr + sq) >= abs(tr - sq) else tr - sq
                est = abs(theta)
                mu = complex(theta)
                # dominant Ritz vector y and its residual ||Ay - theta*y||
                g0, g1 = h01, theta - h00
                gn = np.hypot(g0, g1)
                if gn <= 1e-300:
                    g0, g1 = theta - h11, h10
                    gn = np.hypot(g0, g1)
                if gn > 0.0:
                    g0, g1 = g0 / gn, g1 / gn
                    ry = (g0 * av + g1 * aq2) - theta * (g0 * v + g1 * q2)
                    res_rel = np.linalg.norm(ry) / max(est, 1e-300)
            else:
                est = np.sqrt(det)
                mu = complex(tr, np.sqrt(-disc))
                res_rel = np.linalg.norm(perp) / max(est, 1e-300)
        v = av / na
        if it >= 5 and abs(est - est_prev) <= tol * max(est, 1e-300):
            stable += 1
            if stable >= 3 and res_rel <= 1e-8:
                return float(est), mu, True
        else:
            stable = 0
        est_prev = est
    return float(est), mu, False


def _radius_by_squaring(w: np.ndarray, tol: float = 1e-13) -> float:
    """Spectral radius via repeated squaring with log-scale bookkeeping.

    With A^(2^j) = b_j * exp(c_j) (b_j kept normalized), the Gelfand
    estimate est_j = (log||b_j||_F + c_j) / 2^j is monotone non-increasing
    and upper-bounds log rho(A) with error shrinking like 2^-j, so it
    converges even for exactly tied dominant magnitudes.
    """
    b = w.astype(np.float64, copy=True)
    c = 0.0
    est_prev = None
    for j in range(56):
        f = float(np.max(np.abs(b)))
        if f == 0.0:
            return 0.0  # nilpotent
        b /= f
        c += np.log(f)
        log_est = (np.log(float(np.linalg.norm(b))) + c) / (2.0 ** j)
        if est_prev is not None and j >= 8 and est_prev - log_est <= 0.3 * tol * max(abs(log_est), 1.0):
            return float(np.exp(log_est))
        est_prev = log_est
        b = b @ b
        c *= 2.0
    return float(np.exp(est_prev))


def spectral_radius_matvec(matvec, n: int, n_iter: int = 5000, tol: float = 1e-13,
                           seed: int = 7, v0=None) -> float:
    """Largest |eigenvalue| of the operator given by ``matvec``."""
    est, _, _ = _power_iteration(matvec, n, n_iter, tol, seed, v0)
    return est


def dominant_eigenvalue(w, n_iter: int = 5000, tol: float = 1e-13, seed: int = 7) -> complex:
    """Dominant eigenvalue estimate (complex for conjugate pairs)."""
    w = _as_square(w)
    if w.shape[0] == 1:
        return complex(w[0, 0])
    _, mu, _ = _power_iteration(lambda v: w @ v, w.shape[0], n_iter, tol, seed)
    return mu


def spectral_radius(w, n_iter: int = 5000, tol: float = 1e-13, seed: int = 7) -> float:
    """Spectral radius of a square matrix.

    Power iteration first; if the estimate stalls (near-tied magnitudes the
    2x2 projection cannot separate), escalate to repeated squaring.
    """
    w = _as_square(w)
    n = w.shape[0]
    if n == 1:
        return float(abs(w[0, 0]))
    est, _, converged = _power_iteration(lambda v: w @ v, n, min(n_iter, 1200), tol, seed)
    if converged:
        return est
    return _radius_by_squaring(w, tol=tol)


def rescale_spectral_radius(w, target: float, n_iter: int = 5000, seed: int = 7) -> np.ndarray:
    """Scale a matrix so its spectral radius equals ``target``."""
    w = _as_square(w)
    if target < 0:
        raise ConfigError("target spectral radius must be >= 0")
    if target == 0:
        return np.zeros_like(w)
    rho = spectral_radius(w, n_iter=n_iter, seed=seed)
    if rho == 0.0:
        raise ConfigError("matrix has zero spectral radius; cannot rescale to a positive target")
    return w * (target / rho)


def softmax(x, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along an axis."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ConfigError("softmax input has non-finite entries")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def ridge_solve(a, b, lam: float) -> np.ndarray:
    """Solve min_X ||a X - b||^2 + lam ||X||^2 via the normal equations.

    The Gram matrix is factored with Cholesky; a singular factorization at
    lam == 0 raises SingularMatrixError suggesting a positive lam.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2:
        raise ConfigError(f"design matrix must be 2-D, got shape {a.shape}")
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    if b.shape[0] != a.shape[0]:
        raise ConfigError(f"row mismatch: a has {a.shape[0]}, b has {b.shape[0]}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ConfigError("ridge inputs have non-finite entries")
    if lam < 0:
        raise ConfigError("ridge penalty must be >= 0")
    gram = a.T @ a
    gram[np.diag_indices_from(gram)] += lam
    try:
        factor = cho_factor(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            "normal matrix is singular at lam=%g; pass lam > 0" % lam) from exc
    x = cho_solve(factor, a.T @ b, check_finite=False)
    return x[:, 0] if squeeze else x
