"""Synthetic chaotic series, CSV persistence, and windowing utilities.

Generators integrate with fixed-step explicit schemes (RK4 for Lorenz, Euler
for Mackey-Glass) so that a (seed-free) parameter set always reproduces the
identical trajectory, bit for bit, across runs and platforms.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = [
    "SeriesSplit",
    "gen_lorenz",
    "gen_mackey_glass",
    "gen_sine",
    "load_csv",
    "rolling_windows",
    "save_csv",
    "split_indices",
    "split_series",
]


def _check_steps(n_steps: int, dt: float, transient: int) -> None:
    if n_steps < 1:
        raise ConfigError(f"n_steps must be >= 1, got {n_steps}")
    if dt <= 0.0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if transient < 0:
        raise ConfigError(f"transient must be >= 0, got {transient}")


def gen_lorenz(
    n_steps: int,
    dt: float = 0.01,
    sigma: float = 10.0,
    rho: float = 28.0,
    beta: float = 8.0 / 3.0,
    x0: tuple[float, float, float] = (1.0, 1.0, 1.0),
    transient: int = 1000,
) -> np.ndarray:
    """Lorenz-63 trajectory integrated with classical fixed-step RK4.

    Records the state after each step, discarding the first `transient`
    recorded steps.  Returns shape (n_steps, 3).
    """
    _check_steps(n_steps, dt, transient)
    x, y, z = (float(v) for v in x0)
    half, sixth = 0.5 * dt, dt / 6.0
    out = np.empty((n_steps, 3))
    for i in range(-transient, n_steps):
        k1x, k1y, k1z = sigma * (y - x), x * (rho - z) - y, x * y - beta * z
        ax, ay, az = x + half * k1x, y + half * k1y, z + half * k1z
        k2x, k2y, k2z = sigma * (ay - ax), ax * (rho - az) - ay, ax * ay - beta * az
        bx, by, bz = x + half * k2x, y + half * k2y, z + half * k2z
        k3x, k3y, k3z = sigma * (by - bx), bx * (rho - bz) - by, bx * by - beta * bz
        cx, cy, cz = x + dt * k3x, y + dt * k3y, z + dt * k3z
        k4x, k4y, k4z = sigma * (cy - cx), cx * (rho - cz) - cy, cx * cy - beta * cz
        x += sixth * (k1x + 2.0 * (k2x + k3x) + k4x)
        y += sixth * (k1y + 2.0 * (k2y + k3y) + k4y)
        z += sixth * (k1z + 2.0 * (k2z + k3z) + k4z)
        if i >= 0:
            out[i, 0], out[i, 1], out[i, 2] = x, y, z
    return out


def gen_mackey_glass(
    n_steps: int,
    dt: float = 0.1,
    tau: float = 17.0,
    beta: float = 0.2,
    gamma: float = 0.1,
    exponent: float = 10.0,
    history: float = 1.2,
    transient: int = 1000,
) -> np.ndarray:
    """Mackey-Glass delay series integrated with fixed-step Euler.

    dx/dt = beta * x(t - tau) / (1 + x(t - tau)^exponent) - gamma * x(t).
    The delay buffer is initialised to the constant `history` (note that
    history=1.0 sits exactly on the fixed point of the default parameters,
    so the default starts slightly off it).  Returns shape (n_steps, 1).
    """
    _check_steps(n_steps, dt, transient)
    if tau <= 0.0:
        raise ConfigError(f"tau must be positive, got {tau}")
    lag = int(round(tau / dt))
    if lag < 1:
        raise ConfigError(f"delay tau={tau} is below one Euler step dt={dt}")
    total = transient + n_steps
    xs = [float(history)]
    h = float(history)
    for i in range(total):
        xd = xs[i - lag] if i >= lag else h
        xs.append(xs[i] + dt * (beta * xd / (1.0 + xd**exponent) - gamma * xs[i]))
    return np.asarray(xs[transient + 1:], dtype=np.float64)[:, None]


def gen_sine(
    n_steps: int,
    dt: float = 0.1,
    period: float = 20.0,
    amplitude: float = 1.0,
    phase: float = 0.0,
) -> np.ndarray:
    """Plain sinusoid (a one-dimensional limit cycle), shape (n_steps, 1)."""
    _check_steps(n_steps, dt, 0)
    if period <= 0.0:
        raise ConfigError(f"period must be positive, got {period}")
    t = np.arange(1, n_steps + 1) * dt
    return (amplitude * np.sin(2.0 * np.pi * t / period + phase))[:, None]


def save_csv(path, data: np.ndarray, columns=None, metadata: dict | None = None) -> None:
    """Write a 2-D array as CSV with a header row at full float64 precision.

    If `metadata` is given it is stored as JSON in a `<path>.meta.json`
    sidecar so the CSV itself stays plain.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigError(f"data must be 2-D (rows, columns), got shape {arr.shape}")
    if columns is None:
        columns = [f"f{j}" for j in range(arr.shape[1])]
    if len(columns) != arr.shape[1]:
        raise ConfigError(
            f"{len(columns)} column names for {arr.shape[1]} data columns"
        )
    path = Path(path)
    with open(path, "w") as f:
        f.write(",".join(str(c) for c in columns) + "\n")
        for row in arr:
            f.write(",".join(format(v, ".17g") for v in row) + "\n")
    if metadata is not None:
        with open(_sidecar(path), "w") as f:
            json.dump(metadata, f, indent=2, sort_keys=True)
            f.write("\n")


def load_csv(path) -> tuple[np.ndarray, list[str], dict | None]:
    """Read a CSV written by save_csv: (data, columns, metadata-or-None)."""
    path = Path(path)
    with open(path) as f:
        header = f.readline().strip()
        if not header:
            raise ConfigError(f"{path} is empty")
        columns = header.split(",")
        with warnings.catch_warnings():
            # empty input is reported explicitly below, not via loadtxt's warning
            warnings.simplefilter("ignore", UserWarning)
            data = np.loadtxt(f, delimiter=",", ndmin=2)
    if data.size == 0:
        raise ConfigError(f"{path} has a header but no data rows")
    if data.shape[1] != len(columns):
        raise ConfigError(
            f"{path}: header names {len(columns)} columns, rows have {data.shape[1]}"
        )
    meta_path = _sidecar(path)
    metadata = None
    if meta_path.exists():
        with open(meta_path) as f:
            metadata = json.load(f)
    return data, columns, metadata


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def split_indices(n: int) -> tuple[int, int]:
    """70/10/20 chronological split boundaries: (train_end, val_end)."""
    train_end, val_end = (7 * n) // 10, (8 * n) // 10
    if train_end < 1 or val_end <= train_end or n <= val_end:
        raise ConfigError(f"series of length {n} is too short to split 70/10/20")
    return train_end, val_end


@dataclass(frozen=True)
class SeriesSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    train_end: int
    val_end: int


def split_series(u: np.ndarray) -> SeriesSplit:
    """Chronological 70/10/20 split of a (T, d) series."""
    arr = np.asarray(u, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigError(f"series must be 2-D (T, n_features), got shape {arr.shape}")
    train_end, val_end = split_indices(arr.shape[0])
    return SeriesSplit(
        train=arr[:train_end],
        val=arr[train_end:val_end],
        test=arr[val_end:],
        train_end=train_end,
        val_end=val_end,
    )


def rolling_windows(
    u: np.ndarray, k: int, tau: int, stride: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """All (input window, forecast target) pairs at the given stride.

    Window i covers u[i*stride : i*stride + k] and its target the following
    tau rows.  Returns (n, k, d) inputs and (n, tau, d) targets with
    n = floor((T - k - tau) / stride) + 1.
    """
    arr = np.asarray(u, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigError(f"series must be 2-D (T, n_features), got shape {arr.shape}")
    if k < 1 or tau < 1 or stride < 1:
        raise ConfigError(f"k, tau, stride must all be >= 1, got {k}, {tau}, {stride}")
    T = arr.shape[0]
    if T < k + tau:
        raise ConfigError(f"series of length {T} too short for k={k}, tau={tau}")
    starts = np.arange(0, T - k - tau + 1, stride)
    windows = arr[starts[:, None] + np.arange(k)]
    targets = arr[starts[:, None] + np.arange(k, k + tau)]
    return windows, targets
