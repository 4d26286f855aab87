"""The trainable forecaster: embedding -> group reservoir -> fused transformer.

Per window ending at t the model builds h_t (k x d_eps embedded window) and
z_t (group readout of the member states after consuming u[...t]), fuses them
as f_t = concat((1-kappa) z_t, kappa h_t) laid out as encoder tokens, and maps
the encoded tokens to a (horizon, n_features) prediction. Training minimizes
the Huber penalty of the prediction residuals.

Gradient flow stops at the reservoir states: they are produced by a
constant-memory streaming pass and enter the graph as constants, so the
trainable set is the embedding, the member readouts, the group attention,
kappa, the encoder, and the output head. The frozen member weights never
receive updates (hash-checked in tests).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .embedding import (
    EmbeddingConfig,
    RevinStats,
    embed_query_row,
    embed_window,
    init_embedding,
)
from .errors import ConfigError, TrainingDivergedError
from .group import GroupConfig, GroupReservoir, group_output, group_step, init_group
from .linalg import Rng
from .serialize import read_blob, write_blob

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    n_features: int
    window_k: int = 100
    horizon: int = 50
    d_eps: int = 32
    neighbor_i: int = 5
    # group reservoir
    l: int = 5
    n_r: int = 50
    m: int = 32
    n_tokens: int = 8
    alpha: float = 0.7
    alpha_range: tuple | None = None
    rho_range: tuple = (0.5, 0.9)
    sigma_in: float = 0.5
    init_scheme: str = "random"
    rescale_target: str = "leaky_matrix"
    scale_by_token_dim: bool = False
    readout_mode: str = "self_attention"
    # encoder
    n_blocks: int = 2
    n_heads: int = 4
    ffn_mult: int = 2
    # dropout rates (train mode only)
    dropout_hidden: float = 0.4
    dropout_readout: float = 0.1
    dropout_attn: float = 0.2
    seed: int = 0

    def validate(self) -> "ModelConfig":
        if self.n_features < 1:
            raise ConfigError("n_features must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.d_eps % self.n_heads != 0:
            raise ConfigError(f"d_eps={self.d_eps} must be divisible by n_heads={self.n_heads}")
        for p in (self.dropout_hidden, self.dropout_readout, self.dropout_attn):
            if not 0.0 <= p < 1.0:
                raise ConfigError("dropout rates must lie in [0, 1)")
        return self

    def embedding_config(self) -> EmbeddingConfig:
        return EmbeddingConfig(n_features=self.n_features, d_eps=self.d_eps,
                               window_k=self.window_k, neighbor_i=self.neighbor_i)

    def group_config(self) -> GroupConfig:
        return GroupConfig(l=self.l, n_r=self.n_r, d_in=self.d_eps, m=self.m,
                           n_tokens=self.n_tokens, alpha=self.alpha,
                           alpha_range=self.alpha_range, rho_range=self.rho_range,
                           sigma_in=self.sigma_in, init_scheme=self.init_scheme,
                           rescale_target=self.rescale_target, scale_dim=self.d_eps,
                           scale_by_token_dim=self.scale_by_token_dim,
                           readout_mode=self.readout_mode, base_seed=self.seed)

    @property
    def reservoir_tokens(self) -> int:
        return -(-self.m // self.d_eps)  # ceil

    @property
    def token_count(self) -> int:
        return self.reservoir_tokens + self.window_k


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = 1e-5
    optimizer: str = "sgd"   # "sgd" | "adam"
    batch: int = 16          # windows per update; 0 accumulates a full epoch
    stride: int = 1          # training window stride
    delta: float = 1.0       # Huber threshold
    freeze_group_attention: bool = False

    def validate(self) -> "TrainConfig":
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.batch < 0 or self.stride < 1:
            raise ConfigError("batch must be >= 0 and stride >= 1")
        if self.delta <= 0:
            raise ConfigError("delta must be > 0")
        return self


class ForecastModel:
    def __init__(self, config: ModelConfig):
        self.config = config.validate()
        rng = Rng(config.seed)
        self.group: GroupReservoir = init_group(config.group_config())
        self.params: dict[str, ad.Tensor] = {}

        for name, arr in init_embedding(config.embedding_config(), rng.child(1)).items():
            self.params[f"embed.{name}"] = ad.param(arr)
        for i, ro in enumerate(self.group.readouts):
            self.params[f"readout.{i}.w_out"] = ad.param(ro.w_out)
            self.params[f"readout.{i}.theta_out"] = ad.param(ro.theta_out[None, :])
        for name, arr in self.group.attn.items():
            self.params[f"group_attn.{name}"] = ad.param(arr)
        self.params["kappa_logit"] = ad.param(np.zeros((1, 1)))

        d = config.d_eps
        enc_rng = rng.child(2)
        s = 1.0 / np.sqrt(d)
        for b in range(config.n_blocks):
            r = enc_rng.child(b)
            for w in ("wq", "wk", "wv", "wo"):
                self.params[f"enc.{b}.{w}"] = ad.param(r.child(hash_key(w)).uniform(-s, s, (d, d)))
            hidden = config.ffn_mult * d
            self.params[f"enc.{b}.ffn_w1"] = ad.param(r.child(10).uniform(-s, s, (d, hidden)))
            self.params[f"enc.{b}.ffn_b1"] = ad.param(np.zeros((1, hidden)))
            self.params[f"enc.{b}.ffn_w2"] = ad.param(
                r.child(11).uniform(-1.0 / np.sqrt(hidden), 1.0 / np.sqrt(hidden), (hidden, d)))
            self.params[f"enc.{b}.ffn_b2"] = ad.param(np.zeros((1, d)))
            for ln in ("ln1", "ln2"):
                self.params[f"enc.{b}.{ln}_gain"] = ad.param(np.ones((1, d)))
                self.params[f"enc.{b}.{ln}_bias"] = ad.param(np.zeros((1, d)))
        self.params["enc.final_gain"] = ad.param(np.ones((1, d)))
        self.params["enc.final_bias"] = ad.param(np.zeros((1, d)))

        flat = config.token_count * d
        out_dim = config.horizon * config.n_features
        sh = 1.0 / np.sqrt(flat)
        self.params["head.w"] = ad.param(rng.child(3).uniform(-sh, sh, (flat, out_dim)))
        self.params["head.b"] = ad.param(np.zeros((1, out_dim)))

        self.revin: RevinStats | None = None

    # -- parameter access -------------------------------------------------
    def embed_param_values(self) -> dict:
        return {k.split(".", 1)[1]: t.value for k, t in self.params.items()
                if k.startswith("embed.")}

    def embed_params(self) -> dict:
        return {k.split(".", 1)[1]: t for k, t in self.params.items() if k.startswith("embed.")}

    def readout_params(self) -> list[dict]:
        out = []
        for i in range(self.config.l):
            out.append({"w_out": self.params[f"readout.{i}.w_out"],
                        "theta_out": self.params[f"readout.{i}.theta_out"]})
        return out

    def group_attn_params(self) -> dict:
        return {k.split(".", 1)[1]: t for k, t in self.params.items()
                if k.startswith("group_attn.")}

    def trainable(self, train_cfg: TrainConfig | None = None) -> dict[str, ad.Tensor]:
        params = dict(self.params)
        if train_cfg is not None and train_cfg.freeze_group_attention:
            for k in list(params):
                if k.startswith("group_attn."):
                    del params[k]
        return params

    def kappa(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.params["kappa_logit"].value[0, 0])))

    # -- forward -----------------------------------------------------------
    def _dropout_mask(self, shape, rate: float, rng) -> ad.Tensor | None:
        if rng is None or rate <= 0.0:
            return None
        keep = 1.0 - rate
        mask = (rng.uniform(0.0, 1.0, shape) < keep).astype(np.float64) / keep
        return ad.constant(mask)

    def fuse(self, z: ad.Tensor, h: ad.Tensor) -> ad.Tensor:
        """Tokens for the encoder: (1-kappa) z zero-padded, then kappa h rows."""
        cfg = self.config
        kappa = ad.sigmoid(self.params["kappa_logit"])
        fz = (1.0 - kappa) * z
        pad = cfg.reservoir_tokens * cfg.d_eps - cfg.m
        if pad:
            fz = ad.concat([fz, ad.constant(np.zeros((1, pad)))], axis=1)
        fz = fz.reshape(cfg.reservoir_tokens, cfg.d_eps)
        fh = kappa * h
        return ad.concat([fz, fh], axis=0)

    def encode(self, tokens: ad.Tensor, train_mode: bool = False, dropout_rng=None) -> ad.Tensor:
        cfg = self.config
        d = cfg.d_eps
        dh = d // cfg.n_heads
        n_tok = cfg.token_count
        x = tokens
        rng = dropout_rng if train_mode else None
        for b in range(cfg.n_blocks):
            p = lambda name: self.params[f"enc.{b}.{name}"]
            xn = ad.layer_norm(x, p("ln1_gain"), p("ln1_bias"))
            q = (xn @ p("wq")).reshape(n_tok, cfg.n_heads, dh).transpose(1, 0, 2)
            k = (xn @ p("wk")).reshape(n_tok, cfg.n_heads, dh).transpose(1, 0, 2)
            v = (xn @ p("wv")).reshape(n_tok, cfg.n_heads, dh).transpose(1, 0, 2)
            scores = (q @ k.transpose(0, 2, 1)) / np.sqrt(float(dh))
            probs = ad.softmax(scores, axis=-1)
            mask = self._dropout_mask(probs.shape, cfg.dropout_attn, rng)
            if mask is not None:
                probs = probs * mask
            att = (probs @ v).transpose(1, 0, 2).reshape(n_tok, d) @ p("wo")
            x = x + att
            xn = ad.layer_norm(x, p("ln2_gain"), p("ln2_bias"))
            hid = ad.relu(xn @ p("ffn_w1") + p("ffn_b1"))
            mask = self._dropout_mask(hid.shape, cfg.dropout_hidden, rng)
            if mask is not None:
                hid = hid * mask
            x = x + (hid @ p("ffn_w2") + p("ffn_b2"))
        return ad.layer_norm(x, self.params["enc.final_gain"], self.params["enc.final_bias"])

    def forward_window(self, u: np.ndarray, t: int, states, train_mode: bool = False,
                       dropout_rng=None) -> ad.Tensor:
        """Prediction tensor (horizon, n_features) for the window ending at t.

        ``states`` are the member states after consuming u[..t]; they enter
        as constants (gradients do not flow into the reservoir pass).
        """
        cfg = self.config
        h = embed_window(u, t, cfg.embedding_config(), self.embed_params())
        mask = None
        if train_mode:
            mask = self._dropout_mask((1, cfg.m), cfg.dropout_readout, dropout_rng)
        z = group_output(self.group.config, states, self.readout_params(),
                         self.group_attn_params(), dropout_mask=mask)
        tokens = self.fuse(z, h)
        enc = self.encode(tokens, train_mode=train_mode, dropout_rng=dropout_rng)
        flat = enc.reshape(1, cfg.token_count * cfg.d_eps)
        out = flat @ self.params["head.w"] + self.params["head.b"]
        return out.reshape(cfg.horizon, cfg.n_features)

    def window_features(self, u: np.ndarray, t: int, states) -> dict[str, np.ndarray]:
        """Intermediate features for the window ending at t, as plain arrays.

        Returns the embedded window ``h`` (window_k, d_eps), the group
        readout ``z`` (1, m), and the fused encoder tokens ``f``
        (token_count, d_eps), all computed in eval mode (no dropout).
        """
        cfg = self.config
        h = embed_window(u, t, cfg.embedding_config(), self.embed_params())
        z = group_output(self.group.config, states, self.readout_params(),
                         self.group_attn_params())
        f = self.fuse(z, h)
        return {"h": h.value, "z": z.value, "f": f.value}

    def window_loss(self, u: np.ndarray, t: int, states, target: np.ndarray,
                    delta: float = 1.0, train_mode: bool = False, dropout_rng=None) -> ad.Tensor:
        pred = self.forward_window(u, t, states, train_mode=train_mode, dropout_rng=dropout_rng)
        return ad.huber(pred - ad.constant(target), delta=delta).mean()


def hash_key(name: str) -> int:
    """Stable small integer for deriving per-matrix rng children."""
    return sum(name.encode()) % 997


# -- optimizers -------------------------------------------------------------
class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, ad.Tensor]) -> None:
        for p in params.values():
            if p.grad is not None:
                p.value -= self.lr * p.grad


class _Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, ad.Tensor]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in params.items():
            if p.grad is None:
                continue
            m = self.m.setdefault(name, np.zeros_like(p.value))
            v = self.v.setdefault(name, np.zeros_like(p.value))
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad * p.grad
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p.value -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _zero_grads(params: dict[str, ad.Tensor]) -> None:
    for p in params.values():
        p.grad = None


def make_optimizer(cfg: TrainConfig):
    return _Adam(cfg.lr) if cfg.optimizer == "adam" else _Sgd(cfg.lr)


# -- training ----------------------------------------------------------------
def window_positions(t_lo: int, t_hi: int, stride: int) -> range:
    """Window-end indices t with t_lo <= t <= t_hi stepping by stride."""
    return range(t_lo, t_hi + 1, stride)


def train(model: ForecastModel, u: np.ndarray, train_end: int,
          train_cfg: TrainConfig, val_end: int | None = None) -> dict:
    """Sequential window sweep per epoch; per-batch parameter updates.

    u is the (already normalized) series; windows end in [k-1, train_end -
    horizon - 1]. If val_end is given, windows ending in (train_end,
    val_end - horizon - 1] supply a per-epoch validation loss.
    """
    cfg = model.config
    train_cfg.validate()
    u = np.asarray(u, dtype=np.float64)
    k, tau = cfg.window_k, cfg.horizon
    t_last = train_end - tau - 1
    if t_last < k - 1:
        raise ConfigError(f"train split too short: last window end {t_last} < k-1={k - 1}")
    params = model.trainable(train_cfg)
    if train_cfg.freeze_group_attention:
        for name, p in model.params.items():
            if name.startswith("group_attn."):
                p.requires_grad = False
    opt = make_optimizer(train_cfg)
    emb_cfg = cfg.embedding_config()
    history = {"train_loss": [], "val_loss": []}

    for epoch in range(train_cfg.epochs):
        drop_rng = Rng(cfg.seed).child(770).child(epoch)
        states = model.group.zero_states()
        losses = []
        pending = 0
        for t in range(t_last + 1):
            h_row = embed_query_row(u, t, emb_cfg, model.embed_param_values())
            states = group_step(model.group, states, h_row)
            if t < k - 1 or (t - (k - 1)) % train_cfg.stride != 0:
                continue
            target = u[t + 1: t + 1 + tau]
            loss = model.window_loss(u, t, states, target, delta=train_cfg.delta,
                                     train_mode=True, dropout_rng=drop_rng)
            # inputs are normalized, so a healthy loss is O(1); Huber's linear
            # tails keep a blown-up run finite, hence the explicit ceiling
            if not np.isfinite(loss.value) or loss.value > 1e12:
                raise TrainingDivergedError(
                    f"loss {loss.value:.3g} at epoch {epoch}, t={t}; "
                    "lower lr or check inputs")
            losses.append(float(loss.value))
            loss.backward()
            pending += 1
            if train_cfg.batch and pending >= train_cfg.batch:
                opt.step(params)
                _zero_grads(params)
                pending = 0
        if pending:
            opt.step(params)
            _zero_grads(params)
        history["train_loss"].append(float(np.mean(losses)) if losses else np.nan)

        if val_end is not None and val_end > train_end:
            # validation windows: targets lie fully inside (train_end, val_end]
            val_losses = []
            for t in range(t_last + 1, val_end - tau + 1):
                h_row = embed_query_row(u, t, emb_cfg, model.embed_param_values())
                states = group_step(model.group, states, h_row)
                if t < train_end or (t - (k - 1)) % train_cfg.stride != 0:
                    continue
                target = u[t + 1: t + 1 + tau]
                loss = model.window_loss(u, t, states, target, delta=train_cfg.delta)
                val_losses.append(float(loss.value))
            history["val_loss"].append(float(np.mean(val_losses)) if val_losses else np.nan)
    return history


def predict_rolling(model: ForecastModel, u: np.ndarray, t_start: int, t_end: int,
                    stride: int | None = None) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """(t, prediction, target) at window ends in [t_start, t_end].

    Member states warm-start by streaming the full history u[:t+1]; the
    stream advances incrementally between consecutive windows.
    """
    cfg = model.config
    u = np.asarray(u, dtype=np.float64)
    k, tau = cfg.window_k, cfg.horizon
    stride = stride or tau
    if t_start < k - 1:
        raise ConfigError(f"t_start={t_start} < k-1={k - 1}")
    if t_end + tau >= u.shape[0]:
        raise ConfigError("t_end leaves no room for the horizon target")
    emb_cfg = cfg.embedding_config()
    emb_vals = model.embed_param_values()
    states = model.group.zero_states()
    out = []
    next_t = t_start
    for t in range(t_end + 1):
        h_row = embed_query_row(u, t, emb_cfg, emb_vals)
        states = group_step(model.group, states, h_row)
        if t == next_t:
            pred = model.forward_window(u, t, states).value
            out.append((t, pred, u[t + 1: t + 1 + tau].copy()))
            next_t += stride
    return out


def gradient_check(model: ForecastModel, u: np.ndarray, t: int,
                   delta: float = 1.0, step: float = 1e-5) -> dict[str, float]:
    """Max relative error of tape gradients vs central finite differences.

    Differentiates exactly the function the optimizer sees: member states are
    precomputed from u[..t] and held fixed, dropout disabled.
    """
    cfg = model.config
    u = np.asarray(u, dtype=np.float64)
    emb_cfg = cfg.embedding_config()
    states = model.group.zero_states()
    for s in range(t + 1):
        h_row = embed_query_row(u, s, emb_cfg, model.embed_param_values())
        states = group_step(model.group, states, h_row)
    target = u[t + 1: t + 1 + cfg.horizon]

    def loss_tensor():
        return model.window_loss(u, t, states, target, delta=delta)

    loss = loss_tensor()
    loss.backward()
    params = model.trainable()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value))
                for k, p in params.items()}
    _zero_grads(params)

    report = {}
    for name, p in params.items():
        fd = ad.finite_difference_grad(lambda: loss_tensor().value, [p.value], step=step)[0]
        scale = max(float(np.max(np.abs(fd))), 1e-8)
        report[name] = float(np.max(np.abs(analytic[name] - fd)) / scale)
    return report


# -- checkpointing -------------------------------------------------------------
def _config_header(cfg: ModelConfig) -> dict:
    d = asdict(cfg)
    for key, val in d.items():
        if isinstance(val, tuple):
            d[key] = list(val)
    return d


def save_checkpoint(model: ForecastModel, path) -> None:
    header = {
        "version": CHECKPOINT_VERSION,
        "kind": "forecast_model",
        "config": _config_header(model.config),
        "has_revin": model.revin is not None,
    }
    arrays = {f"param/{k}": t.value for k, t in model.params.items()}
    for i, member in enumerate(model.group.members):
        arrays[f"member/{i}/w"] = member.w
        arrays[f"member/{i}/w_in"] = member.w_in
        arrays[f"member/{i}/theta"] = member.theta
    arrays["member_rhos"] = model.group.member_rhos
    arrays["member_alphas"] = model.group.member_alphas
    if model.revin is not None:
        arrays["revin/mean"] = model.revin.mean
        arrays["revin/std"] = model.revin.std
    write_blob(path, header, arrays)


def load_checkpoint(path) -> ForecastModel:
    header, arrays = read_blob(path)
    if header.get("kind") != "forecast_model":
        raise ConfigError(f"{path}: not a forecast model checkpoint")
    if header.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {header.get('version')}")
    raw = dict(header["config"])
    for key in ("alpha_range", "rho_range"):
        if raw.get(key) is not None:
            raw[key] = tuple(raw[key])
    model = ForecastModel(ModelConfig(**raw))
    for k, t in model.params.items():
        t.value = arrays[f"param/{k}"].copy()
    for i, member in enumerate(model.group.members):
        member.w = arrays[f"member/{i}/w"].copy()
        member.w_in = arrays[f"member/{i}/w_in"].copy()
        member.theta = arrays[f"member/{i}/theta"].copy()
    model.group.member_rhos = arrays["member_rhos"].copy()
    model.group.member_alphas = arrays["member_alphas"].copy()
    if header.get("has_revin"):
        model.revin = RevinStats(mean=arrays["revin/mean"].copy(), std=arrays["revin/std"].copy())
    return model
