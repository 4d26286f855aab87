"""Ensemble of independently seeded reservoirs with a shared attention readout.

Each member gets its own spectral radius (and optionally leak rate) draw plus
a distinct weight seed, so the ensemble averages over initialization noise.
Member outputs pass through per-member affine readouts and a tanh, are summed
into a single vector o_t, and o_t is re-read through token self-attention
(readout_mode="self_attention") or a plain elementwise map for the ablation
arms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .linalg import Rng
from .reservoir import (
    LinearReadout,
    Reservoir,
    ReservoirConfig,
    init_readout,
    init_reservoir,
    reservoir_step,
)

READOUT_MODES = ("linear", "relu", "tanh", "self_attention")

# margin keeping per-member leaky-matrix targets reachable: rho > 1-alpha
LEAKY_RHO_MARGIN = 0.02


@dataclass
class GroupConfig:
    l: int = 5
    n_r: int = 50
    d_in: int = 32
    m: int = 32
    n_tokens: int = 8
    alpha: float = 0.7
    alpha_range: tuple | None = None
    rho_range: tuple = (0.5, 0.9)
    sigma_in: float = 0.5
    init_scheme: str = "random"
    rescale_target: str = "leaky_matrix"
    scale_dim: int | None = None      # attention scale divisor; defaults to d_in
    scale_by_token_dim: bool = False
    readout_mode: str = "self_attention"
    base_seed: int = 0

    def validate(self) -> "GroupConfig":
        if self.l < 0:
            raise ConfigError("l must be >= 0")
        if self.m < 1 or self.n_tokens < 1:
            raise ConfigError("m and n_tokens must be >= 1")
        if self.m % self.n_tokens != 0:
            raise ConfigError(f"m={self.m} must be divisible by n_tokens={self.n_tokens}")
        if self.readout_mode not in READOUT_MODES:
            raise ConfigError(f"unknown readout_mode {self.readout_mode!r}; choose from {READOUT_MODES}")
        lo, hi = self.rho_range
        if not (0.0 < lo <= hi < 1.0):
            raise ConfigError(f"rho_range must satisfy 0 < lo <= hi < 1, got {self.rho_range}")
        if self.alpha_range is not None:
            alo, ahi = self.alpha_range
            if not (0.0 < alo <= ahi <= 1.0):
                raise ConfigError(f"alpha_range must lie in (0, 1], got {self.alpha_range}")
        return self

    @property
    def d_tok(self) -> int:
        return self.m // self.n_tokens


@dataclass
class GroupReservoir:
    config: GroupConfig
    members: list[Reservoir]
    readouts: list[LinearReadout]   # initial values; trainable copies live in the model
    attn: dict                       # w_q_g / w_k_g / w_v_g, (d_tok, d_tok)
    member_rhos: np.ndarray = field(default_factory=lambda: np.zeros(0))
    member_alphas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def zero_states(self) -> list[np.ndarray]:
        return [m.zero_state() for m in self.members]

    def frozen_hash(self) -> str:
        digest = hashlib.sha256()
        for m in self.members:
            digest.update(m.params_hash().encode())
        return digest.hexdigest()

    def retained_bytes(self, states=None) -> int:
        total = sum(m.retained_bytes() for m in self.members)
        if states is None:
            total += sum(m.zero_state().nbytes for m in self.members)
        else:
            total += sum(x.nbytes for x in states)
        return total


def init_group(config: GroupConfig) -> GroupReservoir:
    config.validate()
    rng = Rng(config.base_seed)
    lo, hi = config.rho_range
    if config.alpha_range is not None:
        alphas = np.asarray(rng.child(102).uniform(*config.alpha_range, config.l))
    else:
        alphas = np.full(config.l, config.alpha)
    rho_rng = rng.child(101)
    rhos = np.empty(config.l)
    for i in range(config.l):
        lo_i = lo
        if config.rescale_target == "leaky_matrix":
            floor = 1.0 - alphas[i] + LEAKY_RHO_MARGIN
            lo_i = max(lo, floor)
            if lo_i > hi:
                raise ConfigError(
                    f"member {i}: rho_range {config.rho_range} entirely below the "
                    f"leaky floor {floor:.3f} for alpha={alphas[i]:.3f}")
        rhos[i] = rho_rng.uniform(lo_i, hi)

    members = []
    for i in range(config.l):
        members.append(init_reservoir(ReservoirConfig(
            n_r=config.n_r, d_in=config.d_in, alpha=float(alphas[i]), rho=float(rhos[i]),
            sigma_in=config.sigma_in, init_scheme=config.init_scheme,
            rescale_target=config.rescale_target, seed=config.base_seed + i)))
    readouts = [init_readout(config.n_r, config.m, rng.child(200 + i)) for i in range(config.l)]
    d_tok = config.d_tok
    s = 1.0 / np.sqrt(d_tok)
    attn_rng = rng.child(300)
    attn = {
        "w_q_g": attn_rng.uniform(-s, s, (d_tok, d_tok)),
        "w_k_g": attn_rng.uniform(-s, s, (d_tok, d_tok)),
        "w_v_g": attn_rng.uniform(-s, s, (d_tok, d_tok)),
    }
    return GroupReservoir(config=config, members=members, readouts=readouts, attn=attn,
                          member_rhos=rhos, member_alphas=alphas)


def group_step(group: GroupReservoir, states: list[np.ndarray], h_row: np.ndarray) -> list[np.ndarray]:
    """Advance every member one step on the shared input row."""
    return [reservoir_step(m, x, h_row) for m, x in zip(group.members, states)]


def stream_states(group: GroupReservoir, inputs: np.ndarray, states=None) -> list[np.ndarray]:
    """Drive all members over (T, d_in) inputs keeping only the final states."""
    if states is None:
        states = group.zero_states()
    for t in range(inputs.shape[0]):
        states = group_step(group, states, inputs[t])
    return states


def _lift(params: dict) -> dict:
    return {k: (v if isinstance(v, ad.Tensor) else ad.constant(v)) for k, v in params.items()}


def member_sum(member_states, readout_params: list[dict]) -> ad.Tensor:
    """o_t = sum_l tanh(x_l W_out^l + theta^l), shape (1, m)."""
    total = None
    for x, ro in zip(member_states, readout_params):
        p = _lift(ro)
        row = x if isinstance(x, ad.Tensor) else ad.constant(np.atleast_2d(x))
        term = ad.tanh(row @ p["w_out"] + p["theta_out"])
        total = term if total is None else total + term
    return total


def self_attention_readout(o: ad.Tensor, attn_params: dict, config: GroupConfig) -> ad.Tensor:
    """Token self-attention over o_t reshaped to (n_tokens, d_tok)."""
    p = _lift(attn_params)
    tokens = o.reshape(config.n_tokens, config.d_tok)
    q = tokens @ p["w_q_g"]
    k = tokens @ p["w_k_g"]
    v = tokens @ p["w_v_g"]
    if config.scale_by_token_dim:
        scale = float(config.d_tok)
    else:
        scale = float(config.scale_dim if config.scale_dim is not None else config.d_in)
    e = (q @ k.transpose()) / np.sqrt(scale)
    z = ad.softmax(e, axis=-1) @ v
    return z.reshape(1, config.m)


def group_output(group_config: GroupConfig, member_states, readout_params: list[dict],
                 attn_params: dict, dropout_mask=None) -> ad.Tensor:
    """z_t from member states; mode picks the map applied to the summed o_t."""
    if not readout_params:
        return ad.constant(np.zeros((1, group_config.m)))
    o = member_sum(member_states, readout_params)
    if dropout_mask is not None:
        o = o * dropout_mask
    mode = group_config.readout_mode
    if mode == "linear":
        return o
    if mode == "relu":
        return ad.relu(o)
    if mode == "tanh":
        return ad.tanh(o)
    return self_attention_readout(o, attn_params, group_config)
