"""Experiment harness: resolved flat configs, deterministic runs, text records.

Every runner takes a fully resolved ExperimentSpec, executes deterministically
from its seed, and (optionally) writes a run directory containing:

  config.txt   the resolved spec as sorted "key: value" lines plus its sha256
  records.txt  one space-separated "key:value ..." line per unit of work
  summary.csv  aggregated rows for downstream comparison

Wall-clock fields live only in summary.csv so records.txt from two identical
runs compare bit-for-bit.
"""
from __future__ import annotations

import csv
import hashlib
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import get_type_hints

import numpy as np

from .chaos import delay_embedding, estimate_d2, shannon_entropy
from .datasets import (
    gen_lorenz,
    gen_mackey_glass,
    gen_sine,
    load_csv,
    split_indices,
)
from .embedding import embed_query_row, revin_apply, revin_denormalize, revin_normalize
from .errors import ConfigError
from .group import group_step, init_group, stream_states
from .model import (
    ForecastModel,
    ModelConfig,
    TrainConfig,
    predict_rolling,
    save_checkpoint,
    train,
)
from .stats import mae, mse, t_test_one_sample

__all__ = [
    "ExperimentSpec",
    "collect_feature_values",
    "feature_entropies",
    "load_config",
    "make_series",
    "parse_config_text",
    "resolve_spec",
    "run_d2",
    "run_forecast",
    "run_group_ablation",
    "run_init_sensitivity",
    "run_readout_ablation",
    "run_scaling_probe",
]

DATASETS = ("mackey_glass", "lorenz", "sine", "csv")
TASKS = ("forecast", "init_sensitivity", "group_ablation", "readout_ablation",
         "scaling", "d2", "gen_data")


@dataclass
class ExperimentSpec:
    task: str = "forecast"
    profile: str = "desk"
    dataset: str = "mackey_glass"
    data_path: str = ""
    T: int = 2000
    transient: int = 1000
    seed: int = 0
    n_seeds: int = 5
    # model architecture
    window_k: int = 100
    horizon: int = 50
    d_eps: int = 32
    neighbor_i: int = 5
    l: int = 5
    n_r: int = 50
    m: int = 32
    n_tokens: int = 8
    alpha: float = 0.7
    alpha_lo: float = 0.0        # 0 disables per-member alpha sampling
    alpha_hi: float = 0.0
    rho_lo: float = 0.5
    rho_hi: float = 0.9
    sigma_in: float = 0.5
    init_scheme: str = "random"
    rescale_target: str = "leaky_matrix"
    scale_by_token_dim: bool = False
    readout_mode: str = "self_attention"
    n_blocks: int = 2
    n_heads: int = 4
    ffn_mult: int = 2
    dropout_hidden: float = 0.4
    dropout_readout: float = 0.1
    dropout_attn: float = 0.2
    # training
    epochs: int = 20
    lr: float = 1e-3
    optimizer: str = "adam"
    batch: int = 16
    stride: int = 8
    huber_delta: float = 1.0
    freeze_group_attention: bool = False
    # dataset generation
    mg_dt: float = 0.1
    mg_tau: float = 17.0
    mg_history: float = 1.2
    lorenz_dt: float = 0.01
    sine_dt: float = 0.1
    sine_period: float = 20.0
    # sweep settings
    l_values: str = "1,2,5,10"
    schemes: str = "random,zero,constant,normal,uniform"
    l_low: int = 1
    l_high: int = 10
    readout_modes: str = "linear,relu,tanh,self_attention"
    # scaling probe
    t_values: str = "1000,10000,100000"
    n_r_values: str = "128,256,512,1024,2048"
    scaling_n_r: int = 128
    scaling_t: int = 2000
    # correlation-dimension task
    d2_dim: int = 3
    d2_delay: int = 1
    d2_bins: int = 64

    def validate(self) -> "ExperimentSpec":
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.dataset not in DATASETS:
            raise ConfigError(
                f"unknown dataset {self.dataset!r}; expected one of {DATASETS}")
        if self.dataset == "csv" and not self.data_path:
            raise ConfigError("dataset 'csv' requires data_path")
        if self.T < 0:
            raise ConfigError(f"T must be >= 0 (0 means full csv), got {self.T}")
        if self.n_seeds < 1:
            raise ConfigError(f"n_seeds must be >= 1, got {self.n_seeds}")
        for name in ("l_values", "t_values", "n_r_values"):
            _int_list(getattr(self, name), name)
        _str_list(self.schemes, "schemes")
        _str_list(self.readout_modes, "readout_modes")
        return self

    # ---- derived configs -------------------------------------------------
    def model_config(self, n_features: int, seed: int | None = None,
                     **overrides) -> ModelConfig:
        alpha_range = (self.alpha_lo, self.alpha_hi) if self.alpha_hi > 0.0 else None
        kwargs = dict(
            n_features=n_features, window_k=self.window_k, horizon=self.horizon,
            d_eps=self.d_eps, neighbor_i=self.neighbor_i, l=self.l, n_r=self.n_r,
            m=self.m, n_tokens=self.n_tokens, alpha=self.alpha,
            alpha_range=alpha_range, rho_range=(self.rho_lo, self.rho_hi),
            sigma_in=self.sigma_in, init_scheme=self.init_scheme,
            rescale_target=self.rescale_target,
            scale_by_token_dim=self.scale_by_token_dim,
            readout_mode=self.readout_mode, n_blocks=self.n_blocks,
            n_heads=self.n_heads, ffn_mult=self.ffn_mult,
            dropout_hidden=self.dropout_hidden,
            dropout_readout=self.dropout_readout, dropout_attn=self.dropout_attn,
            seed=self.seed if seed is None else seed,
        )
        kwargs.update(overrides)
        return ModelConfig(**kwargs)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, optimizer=self.optimizer,
                           batch=self.batch, stride=self.stride,
                           delta=self.huber_delta,
                           freeze_group_attention=self.freeze_group_attention)

    # ---- canonical text and hash ------------------------------------------
    def to_flat_text(self) -> str:
        # empty strings mean "unset" and would not re-parse; omit them
        lines = [f"{k}: {_fmt(v)}" for k, v in sorted(asdict(self).items())
                 if _fmt(v) != ""]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_flat_text().encode()).hexdigest()


def _int_list(text: str, name: str) -> list[int]:
    try:
        values = [int(part.strip()) for part in str(text).split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"{name} must be comma-separated integers, got {text!r}") from exc
    if not values:
        raise ConfigError(f"{name} is empty")
    return values


def _str_list(text: str, name: str) -> list[str]:
    values = [part.strip() for part in str(text).split(",") if part.strip()]
    if not values:
        raise ConfigError(f"{name} is empty")
    return values


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


# ---------------------------------------------------------------------------
# profiles and config resolution
# ---------------------------------------------------------------------------

_SWEEP_SIZING = dict(T=1200, window_k=40, horizon=20, d_eps=16, m=16, n_r=40,
                     epochs=10, stride=4)

PROFILES: dict[str, dict[str, dict]] = {
    # desk: sized to run each task on one CPU core in minutes
    "desk": {
        "common": {},
        "init_sensitivity": dict(_SWEEP_SIZING),
        "group_ablation": dict(_SWEEP_SIZING),
        "readout_ablation": dict(_SWEEP_SIZING),
        # circular-law conditioning: exact radius solves are prohibitive at
        # the probe's largest sizes and irrelevant to update-cost timing
        "scaling": dict(l=1, epochs=0, rescale_target="circular"),
        "d2": dict(T=1500),
    },
    # paper: full-size setup as published; expect hours per sweep
    "paper": {
        "common": dict(T=10000, window_k=300, horizon=50, d_eps=48, l=10,
                       n_r=250, m=64, n_blocks=4, n_heads=12, epochs=30,
                       lr=1e-5, optimizer="sgd", stride=1),
        "scaling": dict(l=1, epochs=0, rescale_target="circular"),
        "d2": dict(T=5000),
    },
}


def parse_config_text(text: str) -> dict[str, str]:
    """Flat "key: value" lines; '#' starts a comment; blank lines ignored."""
    overrides: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ConfigError(f"config line {lineno} is not 'key: value': {raw!r}")
        key, value = (part.strip() for part in line.split(":", 1))
        if not key or not value:
            raise ConfigError(f"config line {lineno} has empty key or value: {raw!r}")
        if key in overrides:
            raise ConfigError(f"config line {lineno} repeats key {key!r}")
        overrides[key] = value
    return overrides


def load_config(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text())


def _coerce(key: str, value, typ):
    if not isinstance(value, str):
        return value
    if typ is bool:
        lowered = value.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key} expects a boolean, got {value!r}")
    try:
        return typ(value)
    except ValueError as exc:
        raise ConfigError(f"{key} expects {typ.__name__}, got {value!r}") from exc


def resolve_spec(task: str, profile: str = "desk", overrides: dict | None = None,
                 seed: int | None = None) -> ExperimentSpec:
    """Layered resolution: defaults < profile common < profile task < overrides."""
    task = task.replace("-", "_")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of "
                          f"{tuple(PROFILES)}")
    merged: dict = {"task": task, "profile": profile}
    merged.update(PROFILES[profile].get("common", {}))
    merged.update(PROFILES[profile].get(task, {}))
    hints = get_type_hints(ExperimentSpec)
    for key, value in (overrides or {}).items():
        if key in ("task", "profile"):
            raise ConfigError(f"{key} is fixed by the command line, not the config file")
        if key not in hints:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = _coerce(key, value, hints[key])
    if seed is not None:
        merged["seed"] = seed
    return ExperimentSpec(**merged).validate()


# ---------------------------------------------------------------------------
# run directory writing
# ---------------------------------------------------------------------------

def format_record(row: dict) -> str:
    parts = []
    for key, value in row.items():
        text = _fmt(value)
        if " " in text or ":" in text:
            raise ConfigError(f"record value for {key!r} may not contain spaces "
                              f"or colons: {text!r}")
        parts.append(f"{key}:{text}")
    return " ".join(parts)


def write_run_dir(out_dir, spec: ExperimentSpec, records: list[dict],
                  summary: list[dict]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(
        spec.to_flat_text() + f"config_sha256: {spec.config_hash()}\n")
    (out / "records.txt").write_text(
        "".join(format_record(r) + "\n" for r in records))
    if summary:
        fieldnames: list[str] = []
        for row in summary:
            for key in row:
                if key not in fieldnames:
                    fieldnames.append(key)
        with open(out / "summary.csv", "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames, restval="")
            writer.writeheader()
            for row in summary:
                writer.writerow({k: _fmt(v) for k, v in row.items()})


# ---------------------------------------------------------------------------
# series construction and the shared train/evaluate unit
# ---------------------------------------------------------------------------

def make_series(spec: ExperimentSpec, n_steps: int | None = None) -> np.ndarray:
    n = spec.T if n_steps is None else n_steps
    if spec.dataset == "mackey_glass":
        return gen_mackey_glass(n, dt=spec.mg_dt, tau=spec.mg_tau,
                                history=spec.mg_history, transient=spec.transient)
    if spec.dataset == "lorenz":
        return gen_lorenz(n, dt=spec.lorenz_dt, transient=spec.transient)
    if spec.dataset == "sine":
        return gen_sine(n, dt=spec.sine_dt, period=spec.sine_period)
    data, _, _ = load_csv(spec.data_path)
    if n and n < data.shape[0]:
        data = data[:n]
    return data


def _train_eval(spec: ExperimentSpec, u: np.ndarray, seed: int,
                **cfg_overrides) -> dict:
    """Train on the 70% split, validate on 10%, report rolling test metrics."""
    t0 = time.perf_counter()
    train_end, val_end = split_indices(u.shape[0])
    _, stats = revin_normalize(u[:train_end])
    u_n = revin_apply(u, stats)
    cfg = spec.model_config(u.shape[1], seed=seed, **cfg_overrides)
    model = ForecastModel(cfg)
    model.revin = stats
    history = train(model, u_n, train_end, spec.train_config(), val_end=val_end)
    tau = cfg.horizon
    t_start = max(cfg.window_k - 1, val_end - 1)
    t_end = u.shape[0] - tau - 1
    if t_start > t_end:
        raise ConfigError(
            f"test split too short: first window end {t_start} > last {t_end}")
    windows = []
    for t, pred_n, target_n in predict_rolling(model, u_n, t_start, t_end, stride=tau):
        pred = revin_denormalize(pred_n, stats)
        target = revin_denormalize(target_n, stats)
        windows.append((t, mse(pred, target), mae(pred, target)))
    train_loss = history["train_loss"][-1] if history["train_loss"] else float("nan")
    val_loss = history["val_loss"][-1] if history["val_loss"] else float("nan")
    return {
        "model": model,
        "history": history,
        "windows": windows,
        "test_mse": float(np.mean([w[1] for w in windows])),
        "test_mae": float(np.mean([w[2] for w in windows])),
        "final_train_loss": float(train_loss),
        "final_val_loss": float(val_loss),
        "kappa": float(model.kappa()),
        "wall_time_s": time.perf_counter() - t0,
    }


def _best_of(fn, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def collect_feature_values(model: ForecastModel, u: np.ndarray,
                           t_start: int | None = None, t_end: int | None = None,
                           stride: int = 1) -> dict[str, np.ndarray]:
    """Pooled feature values over rolling windows of (normalized) u.

    Streams member states over the series and, at each window end, gathers
    the embedded-window values ("window"), the group-readout values
    ("readout"), and the fused encoder-token values ("fused") into flat
    arrays.  Dense stride-1 collection keeps all three histograms
    well-sampled for the entropy report.
    """
    cfg = model.config
    u = np.asarray(u, dtype=np.float64)
    k, tau = cfg.window_k, cfg.horizon
    if t_start is None:
        t_start = k - 1
    if t_end is None:
        t_end = u.shape[0] - tau - 1
    if t_start < k - 1 or t_start > t_end:
        raise ConfigError(f"bad feature window range [{t_start}, {t_end}]")
    emb_cfg = cfg.embedding_config()
    emb_vals = model.embed_param_values()
    states = model.group.zero_states()
    pools: dict[str, list[np.ndarray]] = {"window": [], "readout": [], "fused": []}
    next_t = t_start
    for t in range(t_end + 1):
        states = group_step(model.group, states, embed_query_row(u, t, emb_cfg, emb_vals))
        if t == next_t:
            feats = model.window_features(u, t, states)
            pools["window"].append(feats["h"].ravel())
            pools["readout"].append(feats["z"].ravel())
            pools["fused"].append(feats["f"].ravel())
            next_t += stride
    return {name: np.concatenate(chunks) for name, chunks in pools.items()}


def feature_entropies(model: ForecastModel, u: np.ndarray, bins: int = 64,
                      t_start: int | None = None, t_end: int | None = None) -> dict[str, float]:
    """64-bin Shannon entropy of each pooled feature family on windows of u."""
    values = collect_feature_values(model, u, t_start=t_start, t_end=t_end)
    return {name: shannon_entropy(v, bins=bins) for name, v in values.items()}


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def run_forecast(spec: ExperimentSpec, out_dir=None) -> dict:
    """Single train/evaluate run; checkpoints the fitted model."""
    u = make_series(spec)
    res = _train_eval(spec, u, spec.seed)
    model = res["model"]
    train_end, val_end = split_indices(u.shape[0])
    _, stats = revin_normalize(u[:train_end])
    ent = feature_entropies(model, revin_apply(u, stats),
                            t_start=max(model.config.window_k - 1, val_end - 1))
    records = [{"window_end": t, "mse": w_mse, "mae": w_mae}
               for t, w_mse, w_mae in res["windows"]]
    summary = [{
        "config_sha256": spec.config_hash()[:12], "seed": spec.seed,
        "test_mse": res["test_mse"], "test_mae": res["test_mae"],
        "final_train_loss": res["final_train_loss"],
        "final_val_loss": res["final_val_loss"], "kappa": res["kappa"],
        "entropy_fused": ent["fused"], "entropy_readout": ent["readout"],
        "entropy_window": ent["window"],
        "wall_time_s": res["wall_time_s"],
    }]
    if out_dir is not None:
        write_run_dir(out_dir, spec, records, summary)
        save_checkpoint(res["model"], Path(out_dir) / "model.ckpt")
    return {"records": records, "summary": summary, "result": res}


def run_group_ablation(spec: ExperimentSpec, out_dir=None) -> dict:
    """Sweep the member count; n_seeds runs per size on the same series."""
    l_values = _int_list(spec.l_values, "l_values")
    u = make_series(spec)
    records, by_l = [], {}
    for l in l_values:
        runs = []
        for j in range(spec.n_seeds):
            seed = spec.seed + j
            res = _train_eval(spec, u, seed, l=l)
            runs.append(res)
            records.append({"l": l, "seed": seed, "test_mse": res["test_mse"],
                            "test_mae": res["test_mae"],
                            "final_val_loss": res["final_val_loss"]})
        by_l[l] = runs
    summary = []
    for l in l_values:
        mses = np.array([r["test_mse"] for r in by_l[l]])
        summary.append({
            "l": l, "n_seeds": spec.n_seeds,
            "mean_mse": float(mses.mean()), "median_mse": float(np.median(mses)),
            "std_mse": float(mses.std(ddof=1)) if mses.size > 1 else 0.0,
            "mean_mae": float(np.mean([r["test_mae"] for r in by_l[l]])),
            "wall_time_s": float(np.sum([r["wall_time_s"] for r in by_l[l]])),
        })
    if out_dir is not None:
        write_run_dir(out_dir, spec, records, summary)
    return {"records": records, "summary": summary,
            "mse_by_l": {l: [r["test_mse"] for r in runs]
                         for l, runs in by_l.items()}}


def run_init_sensitivity(spec: ExperimentSpec, out_dir=None) -> dict:
    """Input-weight init schemes at single vs grouped reservoirs.

    For each arm (l_low, l_high) and scheme, n_seeds runs produce test MSEs.
    Per arm, two spread measures are reported: the variance of the scheme
    means (systematic scheme effect only) and the pooled variance of every
    scheme x seed MSE (total initialization sensitivity: distribution choice
    plus draw).  Each arm's scheme means (and each scheme's seed-level MSEs)
    are t-tested against the combined mean of both arms' scheme means.
    """
    schemes = _str_list(spec.schemes, "schemes")
    arms = (spec.l_low, spec.l_high)
    u = make_series(spec)
    records = []
    mses: dict[tuple[int, str], list[float]] = {}
    for l in arms:
        for scheme in schemes:
            runs = []
            for j in range(spec.n_seeds):
                seed = spec.seed + j
                res = _train_eval(spec, u, seed, l=l, init_scheme=scheme)
                runs.append(res["test_mse"])
                records.append({"l": l, "scheme": scheme, "seed": seed,
                                "test_mse": res["test_mse"],
                                "test_mae": res["test_mae"]})
            mses[(l, scheme)] = runs

    scheme_means = {key: float(np.mean(v)) for key, v in mses.items()}
    combined_mean = float(np.mean(list(scheme_means.values())))
    summary = []
    arm_stats = {}
    for l in arms:
        means = np.array([scheme_means[(l, s)] for s in schemes])
        pooled = np.array([v for s in schemes for v in mses[(l, s)]])
        var_means = float(means.var(ddof=1))
        var_pooled = float(pooled.var(ddof=1))
        p_arm = t_test_one_sample(means, popmean=combined_mean).pvalue
        arm_stats[l] = {"var_scheme_means": var_means,
                        "var_pooled": var_pooled, "p_arm": p_arm}
        summary.append({"row_kind": "arm", "l": l, "scheme": "",
                        "mean_mse": float(means.mean()),
                        "var_scheme_means": var_means,
                        "var_pooled": var_pooled, "p_value": p_arm})
        for s in schemes:
            values = np.array(mses[(l, s)])
            p_scheme = t_test_one_sample(values, popmean=combined_mean).pvalue
            summary.append({"row_kind": "scheme", "l": l, "scheme": s,
                            "mean_mse": scheme_means[(l, s)],
                            "std_mse": float(values.std(ddof=1)) if values.size > 1 else 0.0,
                            "p_value": p_scheme})
    if out_dir is not None:
        write_run_dir(out_dir, spec, records, summary)
    return {"records": records, "summary": summary, "mses": mses,
            "scheme_means": scheme_means, "combined_mean": combined_mean,
            "arm_stats": arm_stats}


def run_readout_ablation(spec: ExperimentSpec, out_dir=None) -> dict:
    """Compare group readout modes at fixed architecture and seeds."""
    modes = _str_list(spec.readout_modes, "readout_modes")
    u = make_series(spec)
    records, by_mode = [], {}
    for mode in modes:
        runs = []
        for j in range(spec.n_seeds):
            seed = spec.seed + j
            res = _train_eval(spec, u, seed, readout_mode=mode)
            runs.append(res["test_mse"])
            records.append({"readout_mode": mode, "seed": seed,
                            "test_mse": res["test_mse"],
                            "test_mae": res["test_mae"]})
        by_mode[mode] = runs
    summary = [{
        "readout_mode": mode, "n_seeds": spec.n_seeds,
        "mean_mse": float(np.mean(by_mode[mode])),
        "median_mse": float(np.median(by_mode[mode])),
        "std_mse": float(np.std(by_mode[mode], ddof=1)) if spec.n_seeds > 1 else 0.0,
    } for mode in modes]
    if out_dir is not None:
        write_run_dir(out_dir, spec, records, summary)
    return {"records": records, "summary": summary, "mse_by_mode": by_mode}


def run_scaling_probe(spec: ExperimentSpec, out_dir=None) -> dict:
    """Streaming cost probes: time vs series length, time vs reservoir size.

    The T probe times the full embed+update streaming pass (memory retained
    by the stream is recorded and must not grow with T).  The size probe
    times reservoir updates on precomputed embedded inputs, since embedding
    cost does not depend on the reservoir dimension.
    """
    t_values = _int_list(spec.t_values, "t_values")
    n_r_values = _int_list(spec.n_r_values, "n_r_values")
    records, time_vs_t, time_vs_nr = [], [], []

    cfg_t = spec.model_config(1, l=1, n_r=spec.scaling_n_r)
    emb_cfg = cfg_t.embedding_config()
    model = ForecastModel(cfg_t)
    emb_vals = model.embed_param_values()
    for T in t_values:
        u = make_series(spec, n_steps=T)

        def stream_full(u=u):
            states = model.group.zero_states()
            for t in range(u.shape[0]):
                states = group_step(model.group, states,
                                    embed_query_row(u, t, emb_cfg, emb_vals))
            return states

        seconds = _best_of(stream_full)
        states = stream_full()
        bytes_retained = model.group.retained_bytes(states)
        row = {"probe": "time_vs_t", "T": T, "n_r": spec.scaling_n_r,
               "retained_bytes": bytes_retained}
        records.append(row)
        time_vs_t.append({**row, "seconds": seconds})

    for n_r in n_r_values:
        cfg = spec.model_config(1, l=1, n_r=n_r)
        group = init_group(cfg.group_config())
        rng = np.random.default_rng(spec.seed)
        inputs = rng.normal(size=(spec.scaling_t, spec.d_eps))
        seconds = _best_of(lambda g=group, h=inputs: stream_states(g, h))
        states = stream_states(group, inputs)
        row = {"probe": "time_vs_nr", "T": spec.scaling_t, "n_r": n_r,
               "retained_bytes": group.retained_bytes(states)}
        records.append(row)
        time_vs_nr.append({**row, "seconds": seconds})

    t_slope = float(np.polyfit(np.log([r["T"] for r in time_vs_t]),
                               np.log([r["seconds"] for r in time_vs_t]), 1)[0])
    nr_slope = float(np.polyfit(np.log([r["n_r"] for r in time_vs_nr]),
                                np.log([r["seconds"] for r in time_vs_nr]), 1)[0])
    bytes_by_t = {r["T"]: r["retained_bytes"] for r in time_vs_t}
    summary = ([{"row_kind": "time_vs_t", "T": r["T"], "n_r": r["n_r"],
                 "seconds": r["seconds"], "retained_bytes": r["retained_bytes"]}
                for r in time_vs_t]
               + [{"row_kind": "time_vs_nr", "T": r["T"], "n_r": r["n_r"],
                   "seconds": r["seconds"], "retained_bytes": r["retained_bytes"]}
                  for r in time_vs_nr]
               + [{"row_kind": "fit", "t_slope": t_slope, "n_r_slope": nr_slope,
                   "bytes_t_min": bytes_by_t[min(bytes_by_t)],
                   "bytes_t_max": bytes_by_t[max(bytes_by_t)]}])
    if out_dir is not None:
        write_run_dir(out_dir, spec, records, summary)
    return {"records": records, "summary": summary, "t_slope": t_slope,
            "n_r_slope": nr_slope, "bytes_by_t": bytes_by_t,
            "time_vs_t": time_vs_t, "time_vs_nr": time_vs_nr}


def run_d2(spec: ExperimentSpec, out_dir=None) -> dict:
    """Correlation dimension and histogram entropy of a generated series."""
    u = make_series(spec)
    if u.shape[1] > 1:
        points = u
    else:
        points = delay_embedding(u[:, 0], dim=spec.d2_dim, delay=spec.d2_delay)
    est = estimate_d2(points)
    entropy = shannon_entropy(u, bins=spec.d2_bins)
    records = [{"dataset": spec.dataset, "T": u.shape[0], "d2": est.dimension,
                "r2": est.r2, "entropy": entropy}]
    summary = [{"config_sha256": spec.config_hash()[:12], "dataset": spec.dataset,
                "T": u.shape[0], "d2": est.dimension, "r2": est.r2,
                "entropy": entropy, "embed_dim": spec.d2_dim,
                "embed_delay": spec.d2_delay, "bins": spec.d2_bins}]
    if out_dir is not None:
        write_run_dir(out_dir, spec, records, summary)
    return {"records": records, "summary": summary, "d2": est.dimension,
            "r2": est.r2, "entropy": entropy}
