import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from reservoircast.datasets import (
    gen_lorenz,
    gen_mackey_glass,
    gen_sine,
    load_csv,
    rolling_windows,
    save_csv,
    split_indices,
    split_series,
)
from reservoircast.errors import ConfigError


def lorenz_rhs(t, s):
    x, y, z = s
    return [10.0 * (y - x), x * (28.0 - z) - y, x * y - (8.0 / 3.0) * z]


class TestLorenz:
    def test_matches_adaptive_integrator(self):
        out = gen_lorenz(100, transient=0)
        sol = solve_ivp(lorenz_rhs, (0.0, 1.0), [1.0, 1.0, 1.0],
                        t_eval=0.01 * np.arange(1, 101), rtol=1e-12, atol=1e-14)
        assert np.max(np.abs(out - sol.y.T)) < 2e-3

    def test_fourth_order_convergence(self):
        # halving dt must shrink the error ~16x; catches scheme/order bugs
        errs = []
        for dt, n in [(0.01, 100), (0.005, 200)]:
            out = gen_lorenz(n, dt=dt, transient=0)
            sol = solve_ivp(lorenz_rhs, (0.0, 1.0), [1.0, 1.0, 1.0],
                            t_eval=dt * np.arange(1, n + 1), rtol=1e-12, atol=1e-14)
            errs.append(np.max(np.abs(out - sol.y.T)))
        assert 12.0 < errs[0] / errs[1] < 20.0

    def test_deterministic_and_shape(self):
        a = gen_lorenz(50)
        b = gen_lorenz(50)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (50, 3)

    def test_transient_shifts_start(self):
        full = gen_lorenz(30, transient=0)
        late = gen_lorenz(10, transient=20)
        np.testing.assert_array_equal(late, full[20:])

    def test_stays_on_attractor(self):
        out = gen_lorenz(3000)
        assert np.all(np.abs(out[:, 0]) < 25)
        assert np.all(np.abs(out[:, 1]) < 35)
        assert np.all((out[:, 2] > 0) & (out[:, 2] < 55))
        assert out[:, 0].std() > 1.0  # genuinely moving, not collapsed

    def test_bad_args_rejected(self):
        with pytest.raises(ConfigError):
            gen_lorenz(0)
        with pytest.raises(ConfigError):
            gen_lorenz(10, dt=-0.01)
        with pytest.raises(ConfigError):
            gen_lorenz(10, transient=-1)


class TestMackeyGlass:
    def test_first_euler_step_by_hand(self):
        x0 = 1.2
        expected = x0 + 0.1 * (0.2 * x0 / (1.0 + x0**10.0) - 0.1 * x0)
        out = gen_mackey_glass(1, transient=0)
        assert out[0, 0] == expected

    def test_unit_history_is_fixed_point(self):
        out = gen_mackey_glass(200, history=1.0, transient=0)
        np.testing.assert_array_equal(out, np.ones((200, 1)))

    def test_default_history_leaves_fixed_point(self):
        out = gen_mackey_glass(2000)
        assert out.std() > 0.1

    def test_deterministic_shape_and_range(self):
        a = gen_mackey_glass(500)
        np.testing.assert_array_equal(a, gen_mackey_glass(500))
        assert a.shape == (500, 1)
        assert np.all((a > 0.0) & (a < 2.0))

    def test_delay_below_one_step_rejected(self):
        with pytest.raises(ConfigError, match="delay"):
            gen_mackey_glass(10, tau=0.01, dt=0.1)

    def test_transient_shifts_start(self):
        full = gen_mackey_glass(30, transient=0)
        late = gen_mackey_glass(10, transient=20)
        np.testing.assert_array_equal(late, full[20:])


class TestSine:
    def test_values(self):
        out = gen_sine(4, dt=0.25, period=1.0, amplitude=2.0)
        np.testing.assert_allclose(
            out[:, 0], [2.0, 0.0, -2.0, 0.0], atol=1e-12)

    def test_shape_and_error(self):
        assert gen_sine(7).shape == (7, 1)
        with pytest.raises(ConfigError):
            gen_sine(5, period=0.0)


class TestCsv:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(40, 3)) * np.array([1e-8, 1.0, 1e12])
        path = tmp_path / "series.csv"
        save_csv(path, data, columns=["a", "b", "c"], metadata={"seed": 7, "kind": "test"})
        loaded, cols, meta = load_csv(path)
        np.testing.assert_array_equal(loaded, data)
        assert cols == ["a", "b", "c"]
        assert meta == {"seed": 7, "kind": "test"}

    def test_default_columns_and_no_metadata(self, tmp_path):
        path = tmp_path / "x.csv"
        save_csv(path, np.ones((3, 2)))
        loaded, cols, meta = load_csv(path)
        assert cols == ["f0", "f1"] and meta is None
        np.testing.assert_array_equal(loaded, np.ones((3, 2)))

    def test_column_count_mismatch_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="column"):
            save_csv(tmp_path / "y.csv", np.ones((2, 2)), columns=["only_one"])

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ConfigError, match="empty"):
            load_csv(path)

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "hdr.csv"
        path.write_text("a,b\n")
        with pytest.raises(ConfigError, match="no data"):
            load_csv(path)


class TestSplit:
    def test_exact_70_10_20(self):
        assert split_indices(100) == (70, 80)
        assert split_indices(10) == (7, 8)
        assert split_indices(2000) == (1400, 1600)

    def test_views_cover_series_in_order(self):
        u = np.arange(50, dtype=np.float64)[:, None]
        s = split_series(u)
        np.testing.assert_array_equal(np.vstack([s.train, s.val, s.test]), u)
        assert s.train.shape[0] == 35 and s.val.shape[0] == 5 and s.test.shape[0] == 10

    def test_floor_not_round(self):
        # 7*n//10 must floor: n=99 -> 69, not 69.3 rounded
        assert split_indices(99) == (69, 79)

    def test_too_short_rejected(self):
        # n=3 gives train_end == val_end == 2: the val slice would be empty
        with pytest.raises(ConfigError, match="too short"):
            split_indices(3)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=10, max_value=100_000))
    def test_boundaries_consistent(self, n):
        a, b = split_indices(n)
        assert 0 < a < b < n
        assert a == (7 * n) // 10 and b == (8 * n) // 10


class TestRollingWindows:
    def test_alignment_small_oracle(self):
        u = np.arange(10, dtype=np.float64)[:, None]
        w, t = rolling_windows(u, k=3, tau=2, stride=2)
        np.testing.assert_array_equal(w[:, :, 0], [[0, 1, 2], [2, 3, 4], [4, 5, 6]])
        np.testing.assert_array_equal(t[:, :, 0], [[3, 4], [5, 6], [7, 8]])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 8), st.integers(1, 5),
           st.integers(0, 40))
    def test_count_formula_and_alignment(self, k, tau, stride, extra):
        T = k + tau + extra
        u = np.arange(T, dtype=np.float64)[:, None]
        w, t = rolling_windows(u, k=k, tau=tau, stride=stride)
        expected_n = (T - k - tau) // stride + 1
        assert w.shape == (expected_n, k, 1) and t.shape == (expected_n, tau, 1)
        for i in range(expected_n):
            s = i * stride
            np.testing.assert_array_equal(w[i], u[s: s + k])
            np.testing.assert_array_equal(t[i], u[s + k: s + k + tau])

    def test_too_short_rejected(self):
        with pytest.raises(ConfigError, match="too short"):
            rolling_windows(np.ones((4, 1)), k=3, tau=2)

    def test_bad_args_rejected(self):
        u = np.ones((10, 1))
        for kwargs in ({"k": 0, "tau": 1}, {"k": 1, "tau": 0},
                       {"k": 1, "tau": 1, "stride": 0}):
            with pytest.raises(ConfigError):
                rolling_windows(u, **kwargs)

    def test_multifeature(self):
        u = np.arange(24, dtype=np.float64).reshape(12, 2)
        w, t = rolling_windows(u, k=4, tau=3)
        assert w.shape == (6, 4, 2) and t.shape == (6, 3, 2)
        np.testing.assert_array_equal(w[5], u[5:9])
