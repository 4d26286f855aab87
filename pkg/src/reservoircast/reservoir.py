"""Leaky-integrator echo state reservoir with frozen weights.

State update: x_t = (1 - alpha) x_{t-1} + alpha * tanh(W_in h_t + theta + W x_{t-1}).

The recurrent matrix is conditioned at init time and never changes. By
default the spectral-radius target applies to the effective leaky matrix
(1 - alpha) I + alpha W (the operator that actually propagates state);
rescale_target="raw_w" conditions W itself instead. Targets at or below
1 - alpha are unreachable in the default mode and rejected.
rescale_target="circular" scales W analytically via the circular law
(approximate radius, no eigensolve) for large reservoirs where the exact
solve is prohibitively slow, e.g. scaling probes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .linalg import Rng, dominant_eigenvalue, ridge_solve, sample_uniform, spectral_radius

INIT_SCHEMES = ("random", "zero", "constant", "normal", "uniform")
RESCALE_TARGETS = ("leaky_matrix", "raw_w", "circular")


@dataclass
class ReservoirConfig:
    n_r: int = 50
    d_in: int = 32
    alpha: float = 0.7
    rho: float = 0.9
    sigma_in: float = 0.5
    init_scheme: str = "random"
    rescale_target: str = "leaky_matrix"
    seed: int = 0

    def validate(self) -> "ReservoirConfig":
        if self.n_r < 1 or self.d_in < 1:
            raise ConfigError("n_r and d_in must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.rho < 0.0:
            raise ConfigError(f"rho must be >= 0, got {self.rho}")
        if self.sigma_in < 0.0:
            raise ConfigError("sigma_in must be >= 0")
        if self.init_scheme not in INIT_SCHEMES:
            raise ConfigError(f"unknown init_scheme {self.init_scheme!r}; choose from {INIT_SCHEMES}")
        if self.rescale_target not in RESCALE_TARGETS:
            raise ConfigError(f"unknown rescale_target {self.rescale_target!r}")
        return self


@dataclass
class Reservoir:
    config: ReservoirConfig
    w: np.ndarray       # (n_r, n_r) recurrent, frozen
    w_in: np.ndarray    # (n_r, d_in) input coupling, frozen
    theta: np.ndarray   # (n_r,) bias, frozen

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.config.n_r)

    def params_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.w.tobytes())
        digest.update(self.w_in.tobytes())
        digest.update(self.theta.tobytes())
        digest.update(np.float64(self.config.alpha).tobytes())
        return digest.hexdigest()

    def retained_bytes(self) -> int:
        return self.w.nbytes + self.w_in.nbytes + self.theta.nbytes


class _ZeroRadiusError(ConfigError):
    """Recurrent draw has zero spectral radius and cannot be conditioned."""


def _draw_input_weights(scheme: str, shape, sigma: float, rng: Rng) -> np.ndarray:
    if scheme == "random":
        return rng.uniform(-sigma, sigma, shape)
    if scheme == "zero":
        return np.zeros(shape)
    if scheme == "constant":
        return np.full(shape, sigma, dtype=np.float64)
    if scheme == "normal":
        return rng.normal(0.0, sigma, shape)
    if scheme == "uniform":
        return rng.uniform(0.0, sigma, shape)
    raise ConfigError(f"unknown init_scheme {scheme!r}")


def solve_leaky_scale(w: np.ndarray, alpha: float, target: float,
                      tol: float = 1e-9, max_iter: int = 80) -> float:
    """Scale s such that rho((1 - alpha) I + alpha * s * W) = target.

    Safeguarded Newton on the dominant-eigenvalue envelope: each radius
    evaluation also yields the active eigenvalue lambda*, and
    |1 - alpha + alpha * s * lambda*| = target is solved in closed form.
    Bisection brackets guard against the active eigenvalue switching.
    """
    n = w.shape[0]
    one_m = 1.0 - alpha
    if target <= one_m + 1e-12:
        raise ConfigError(
            f"leaky-matrix radius target {target} unreachable with alpha={alpha} "
            f"(floor is 1-alpha={one_m}); raise rho or use rescale_target='raw_w'")
    rho_w = spectral_radius(w)
    if rho_w == 0.0:
        raise _ZeroRadiusError("recurrent matrix has zero spectral radius; cannot condition it")

    eye = np.eye(n)

    def radius_at(s: float) -> float:
        return spectral_radius(one_m * eye + alpha * s * w)

    lo, hi = 0.0, None
    s = (target - one_m) / (alpha * rho_w)  # exact if the dominant eigenvalue is positive real
    for _ in range(max_iter):
        m = one_m * eye + alpha * s * w
        g = spectral_radius(m)
        if abs(g - target) <= tol:
            return s
        if g < target:
            lo = max(lo, s)
        else:
            hi = s if hi is None else min(hi, s)
        mu = dominant_eigenvalue(m)
        lam = (mu - one_m) / (alpha * s)
        a = (alpha * abs(lam)) ** 2
        b = 2.0 * one_m * alpha * lam.real
        c = one_m * one_m - target * target
        disc = b * b - 4.0 * a * c
        s_new = (-b + np.sqrt(disc)) / (2.0 * a) if a > 0 and disc >= 0 else -1.0
        in_bracket = s_new > lo and (hi is None or s_new < hi)
        if not np.isfinite(s_new) or not in_bracket:
            s_new = lo * 2.0 if hi is None else 0.5 * (lo + hi)
        if s_new == s:
            s_new = lo * 1.5 + 1e-12 if hi is None else 0.5 * (lo + hi)
        s = s_new
    raise ConfigError("leaky-matrix rescale did not converge")


def _condition_recurrent(w_raw: np.ndarray, config: ReservoirConfig) -> np.ndarray:
    if config.rho == 0.0:
        return np.zeros_like(w_raw)
    if config.rescale_target == "raw_w":
        rho_w = spectral_radius(w_raw)
        if rho_w == 0.0:
            raise _ZeroRadiusError(
                "recurrent matrix has zero spectral radius; cannot condition it")
        return w_raw * (config.rho / rho_w)
    if config.rescale_target == "circular":
        # analytic conditioning: iid entries of variance s^2 have spectral
        # radius ~ s*sqrt(n_r) (circular law), so this hits rho approximately
        # without an eigensolve -- intended for large timing probes where the
        # exact solve is prohibitive; U(-1,1) draws have variance 1/3
        return w_raw * (config.rho * np.sqrt(3.0 / config.n_r))
    if config.alpha == 0.0:
        raise ConfigError("alpha=0 leaves the leaky matrix at the identity; "
                          "use rescale_target='raw_w'")
    return w_raw * solve_leaky_scale(w_raw, config.alpha, config.rho)


def init_reservoir(config: ReservoirConfig) -> Reservoir:
    """Draw and condition frozen reservoir weights from the config seed.

    A recurrent draw with exactly zero spectral radius cannot be rescaled;
    it is redrawn from derived seeds up to three times before erroring.
    """
    config.validate()
    rng = Rng(config.seed)
    w_raw = sample_uniform((config.n_r, config.n_r), -1.0, 1.0, rng.child(0))
    w_in = _draw_input_weights(config.init_scheme, (config.n_r, config.d_in),
                               config.sigma_in, rng.child(1))
    theta = _draw_input_weights(config.init_scheme, (config.n_r,),
                                config.sigma_in, rng.child(2))
    for retry in range(4):
        try:
            w = _condition_recurrent(w_raw, config)
            break
        except _ZeroRadiusError:
            if retry == 3:
                raise ConfigError(
                    f"recurrent draw kept zero spectral radius after 3 retries "
                    f"(seed {config.seed})") from None
            w_raw = sample_uniform((config.n_r, config.n_r), -1.0, 1.0,
                                   rng.child(3 + retry))
    return Reservoir(config=config, w=w, w_in=w_in, theta=theta)


def reservoir_step(res: Reservoir, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """One leaky-integrator update. Pure function of (state, input row)."""
    a = res.config.alpha
    pre = res.w_in @ h + res.theta + res.w @ x
    return (1.0 - a) * x + a * np.tanh(pre)


def run_reservoir(res: Reservoir, inputs: np.ndarray, x0=None) -> np.ndarray:
    """Drive the reservoir over (T, d_in) inputs; returns (T, n_r) states."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if inputs.shape[1] != res.config.d_in:
        raise ConfigError(f"input width {inputs.shape[1]} != d_in {res.config.d_in}")
    x = res.zero_state() if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    states = np.empty((inputs.shape[0], res.config.n_r))
    for t in range(inputs.shape[0]):
        x = reservoir_step(res, x, inputs[t])
        states[t] = x
    return states


@dataclass
class LinearReadout:
    w_out: np.ndarray   # (n_r, m)
    theta_out: np.ndarray  # (m,)


def init_readout(n_r: int, m: int, rng: Rng) -> LinearReadout:
    s = 1.0 / np.sqrt(n_r)
    return LinearReadout(w_out=rng.uniform(-s, s, (n_r, m)), theta_out=np.zeros(m))


def fit_linear_readout(states: np.ndarray, targets: np.ndarray, lam: float = 0.0) -> LinearReadout:
    """Ridge fit of targets from states, bias handled by a constant column."""
    states = np.asarray(states, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    if states.shape[0] != targets.shape[0]:
        raise ConfigError("states and targets must have equal length")
    design = np.hstack([states, np.ones((states.shape[0], 1))])
    coef = ridge_solve(design, targets, lam)
    return LinearReadout(w_out=coef[:-1], theta_out=coef[-1])


def apply_readout(readout: LinearReadout, states: np.ndarray) -> np.ndarray:
    return np.atleast_2d(states) @ readout.w_out + readout.theta_out
