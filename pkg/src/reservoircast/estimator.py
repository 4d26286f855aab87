"""scikit-learn style wrappers around the forecasting pipeline.

ReservoirTransformerRegressor follows the estimator contract: all
constructor arguments are stored verbatim (so get_params/set_params/clone
work), state learned from data lives in trailing-underscore attributes, and
fit returns self.  The regressor consumes a whole (T, n_features) series in
fit and forecasts the `horizon` rows that follow a given history in predict.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin

from .embedding import revin_apply, revin_denormalize, revin_normalize
from .errors import ConfigError, NotFittedError
from .group import group_step
from .model import (
    ForecastModel,
    ModelConfig,
    TrainConfig,
    load_checkpoint,
    predict_rolling,
    save_checkpoint,
    train,
)

__all__ = ["ReservoirTransformerRegressor", "RevinNormalizer"]


def _as_series(X, name: str = "X") -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a (T, n_features) series, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ConfigError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite values")
    return arr


class ReservoirTransformerRegressor(RegressorMixin, BaseEstimator):
    """Forecast a multivariate series with a reservoir-augmented transformer.

    fit(X) trains on the series X; predict(X) returns the (horizon,
    n_features) forecast for the rows immediately after the end of X.
    """

    def __init__(self, window_k=100, horizon=50, d_eps=32, neighbor_i=5,
                 l=5, n_r=50, m=32, n_tokens=8, alpha=0.7, alpha_range=None,
                 rho_range=(0.5, 0.9), sigma_in=0.5, init_scheme="random",
                 rescale_target="leaky_matrix", scale_by_token_dim=False,
                 readout_mode="self_attention", n_blocks=2, n_heads=4,
                 ffn_mult=2, dropout_hidden=0.4, dropout_readout=0.1,
                 dropout_attn=0.2, epochs=20, lr=1e-5, optimizer="sgd",
                 batch=16, stride=1, huber_delta=1.0,
                 freeze_group_attention=False, normalize=True, seed=0):
        self.window_k = window_k
        self.horizon = horizon
        self.d_eps = d_eps
        self.neighbor_i = neighbor_i
        self.l = l
        self.n_r = n_r
        self.m = m
        self.n_tokens = n_tokens
        self.alpha = alpha
        self.alpha_range = alpha_range
        self.rho_range = rho_range
        self.sigma_in = sigma_in
        self.init_scheme = init_scheme
        self.rescale_target = rescale_target
        self.scale_by_token_dim = scale_by_token_dim
        self.readout_mode = readout_mode
        self.n_blocks = n_blocks
        self.n_heads = n_heads
        self.ffn_mult = ffn_mult
        self.dropout_hidden = dropout_hidden
        self.dropout_readout = dropout_readout
        self.dropout_attn = dropout_attn
        self.epochs = epochs
        self.lr = lr
        self.optimizer = optimizer
        self.batch = batch
        self.stride = stride
        self.huber_delta = huber_delta
        self.freeze_group_attention = freeze_group_attention
        self.normalize = normalize
        self.seed = seed

    def _model_config(self, n_features: int) -> ModelConfig:
        return ModelConfig(
            n_features=n_features, window_k=self.window_k, horizon=self.horizon,
            d_eps=self.d_eps, neighbor_i=self.neighbor_i, l=self.l, n_r=self.n_r,
            m=self.m, n_tokens=self.n_tokens, alpha=self.alpha,
            alpha_range=self.alpha_range, rho_range=self.rho_range,
            sigma_in=self.sigma_in, init_scheme=self.init_scheme,
            rescale_target=self.rescale_target,
            scale_by_token_dim=self.scale_by_token_dim,
            readout_mode=self.readout_mode, n_blocks=self.n_blocks,
            n_heads=self.n_heads, ffn_mult=self.ffn_mult,
            dropout_hidden=self.dropout_hidden,
            dropout_readout=self.dropout_readout, dropout_attn=self.dropout_attn,
            seed=self.seed,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, lr=self.lr, optimizer=self.optimizer,
            batch=self.batch, stride=self.stride, delta=self.huber_delta,
            freeze_group_attention=self.freeze_group_attention,
        )

    def fit(self, X, y=None):
        """Train on the series X; y is ignored (targets come from X itself)."""
        u = _as_series(X)
        T = u.shape[0]
        if T < self.window_k + self.horizon:
            raise ConfigError(
                f"series of length {T} too short for window_k={self.window_k} "
                f"plus horizon={self.horizon}")
        stats = None
        if self.normalize:
            u, stats = revin_normalize(u)
        model = ForecastModel(self._model_config(u.shape[1]))
        model.revin = stats
        self.history_ = train(model, u, train_end=T, train_cfg=self._train_config())
        self.model_ = model
        self.n_features_in_ = u.shape[1]
        return self

    def _check_fitted(self) -> ForecastModel:
        model = getattr(self, "model_", None)
        if model is None:
            raise NotFittedError(
                "this ReservoirTransformerRegressor is not fitted yet; call fit first")
        return model

    def _prepare(self, X, min_len: int) -> np.ndarray:
        model = self._check_fitted()
        u = _as_series(X)
        if u.shape[1] != self.n_features_in_:
            raise ConfigError(
                f"X has {u.shape[1]} features, fitted for {self.n_features_in_}")
        if u.shape[0] < min_len:
            raise ConfigError(
                f"X must provide at least {min_len} rows, got {u.shape[0]}")
        if model.revin is not None:
            u = revin_apply(u, model.revin)
        return u

    def predict(self, X) -> np.ndarray:
        """Forecast the horizon rows following the end of the series X."""
        model = self._check_fitted()
        u = self._prepare(X, min_len=self.window_k)
        cfg = model.config
        emb_cfg = cfg.embedding_config()
        emb_vals = model.embed_param_values()
        from .embedding import embed_query_row

        states = model.group.zero_states()
        for t in range(u.shape[0]):
            states = group_step(model.group, states, embed_query_row(u, t, emb_cfg, emb_vals))
        pred = model.forward_window(u, u.shape[0] - 1, states).value
        if model.revin is not None:
            pred = revin_denormalize(pred, model.revin)
        return pred

    def rolling_forecast(self, X, t_start=None, t_end=None, stride=None):
        """(t, prediction, target) pairs over X, in the original units."""
        model = self._check_fitted()
        u = self._prepare(X, min_len=self.window_k + self.horizon)
        if t_start is None:
            t_start = self.window_k - 1
        if t_end is None:
            t_end = u.shape[0] - self.horizon - 1
        out = predict_rolling(model, u, t_start, t_end, stride=stride)
        if model.revin is not None:
            out = [(t, revin_denormalize(p, model.revin),
                    revin_denormalize(g, model.revin)) for t, p, g in out]
        return out

    def save(self, path) -> None:
        """Persist the fitted model to a checkpoint file."""
        save_checkpoint(self._check_fitted(), path)

    @classmethod
    def load(cls, path) -> "ReservoirTransformerRegressor":
        """Rebuild a fitted regressor from a checkpoint.

        Architecture settings are restored from the checkpoint; training
        hyperparameters (epochs, lr, ...) revert to constructor defaults as
        they play no role at prediction time.
        """
        model = load_checkpoint(path)
        cfg = model.config
        est = cls(
            window_k=cfg.window_k, horizon=cfg.horizon, d_eps=cfg.d_eps,
            neighbor_i=cfg.neighbor_i, l=cfg.l, n_r=cfg.n_r, m=cfg.m,
            n_tokens=cfg.n_tokens, alpha=cfg.alpha, alpha_range=cfg.alpha_range,
            rho_range=cfg.rho_range, sigma_in=cfg.sigma_in,
            init_scheme=cfg.init_scheme, rescale_target=cfg.rescale_target,
            scale_by_token_dim=cfg.scale_by_token_dim,
            readout_mode=cfg.readout_mode, n_blocks=cfg.n_blocks,
            n_heads=cfg.n_heads, ffn_mult=cfg.ffn_mult,
            dropout_hidden=cfg.dropout_hidden,
            dropout_readout=cfg.dropout_readout, dropout_attn=cfg.dropout_attn,
            normalize=model.revin is not None, seed=cfg.seed,
        )
        est.model_ = model
        est.n_features_in_ = cfg.n_features
        est.history_ = {"train_loss": [], "val_loss": []}
        return est


class RevinNormalizer(TransformerMixin, BaseEstimator):
    """Reversible per-feature standardization with a floored std.

    Learns population mean/std per feature in fit; constant features map to
    exact zeros and invert exactly.
    """

    def fit(self, X, y=None):
        u = _as_series(X)
        _, self.stats_ = revin_normalize(u)
        self.n_features_in_ = u.shape[1]
        return self

    def _check_fitted(self):
        if getattr(self, "stats_", None) is None:
            raise NotFittedError("this RevinNormalizer is not fitted yet; call fit first")

    def _coerce(self, X) -> np.ndarray:
        self._check_fitted()
        u = _as_series(X)
        if u.shape[1] != self.n_features_in_:
            raise ConfigError(
                f"X has {u.shape[1]} features, fitted for {self.n_features_in_}")
        return u

    def transform(self, X) -> np.ndarray:
        return revin_apply(self._coerce(X), self.stats_)

    def inverse_transform(self, X) -> np.ndarray:
        return revin_denormalize(self._coerce(X), self.stats_)
