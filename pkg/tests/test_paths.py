import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spdefilter.paths import (
    BrownianPath,
    SampledProcess,
    TimeGrid,
    backward_ito_integral,
    coarsen,
    ito_integral,
    read_csv,
    right_endpoint_sum,
    sample_brownian,
    standard_normals,
    time_reverse,
    write_csv,
)


def test_uniform_grid():
    g = TimeGrid.uniform_grid(2.0, 7)
    assert g.N == 7 and g.t[0] == 0.0 and g.t[-1] == 2.0
    assert np.max(np.abs(g.dt - 2.0 / 7)) <= 1e-12 * 2.0


def test_grid_must_increase():
    with pytest.raises(ValueError):
        TimeGrid([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(ValueError):
        TimeGrid([0.0])
    with pytest.raises(ValueError):
        TimeGrid.uniform_grid(1.0, 0)


def test_nonuniform_grid_accepted():
    g = TimeGrid(np.array([0.0, 0.1, 0.15, 0.6, 1.0]))
    W = sample_brownian(g, 3, 0)
    assert W.values.shape == (5,)
    assert not g.uniform


def test_normals_depend_only_on_index():
    full = standard_normals(11, 4, 100)
    for start in (0, 1, 3, 4, 5, 37, 96):
        np.testing.assert_array_equal(standard_normals(11, 4, 100 - start, start=start),
                                      full[start:])


def test_brownian_paths_are_bit_reproducible():
    g = TimeGrid.uniform_grid(1.0, 64)
    a = sample_brownian(g, 123, 5, start=0.25)
    b = sample_brownian(g, 123, 5, start=0.25)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.values[0] == 0.25
    c = sample_brownian(g, 123, 6)
    assert not np.array_equal(a.increments, c.increments)


def test_single_step_variance_over_seeds():
    T = 1.7
    g = TimeGrid.uniform_grid(T, 1)
    inc = np.array([sample_brownian(g, s, 0).increments[0] for s in range(100_000)])
    assert abs(np.var(inc) / T - 1) < 0.03
    assert abs(np.mean(inc)) < 4 * math.sqrt(T / inc.size)


def test_streams_are_uncorrelated():
    a = standard_normals(99, 1, 100_000)
    b = standard_normals(99, 2, 100_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01


def test_vector_path_components():
    g = TimeGrid.uniform_grid(1.0, 10)
    W = sample_brownian(g, 1, 0, dim=2)
    assert W.values.shape == (11, 2)
    draws = standard_normals(1, 0, 20).reshape(10, 2)
    np.testing.assert_allclose(W.increments, draws * math.sqrt(0.1))
    assert W.component(1).values.shape == (11,)


def _path(seed, N, T=1.0):
    return sample_brownian(TimeGrid.uniform_grid(T, N), seed, 0)


def test_ito_integral_constant_integrand():
    W = _path(1, 50)
    one = SampledProcess(W.grid, np.ones(51))
    zero = SampledProcess(W.grid, np.zeros(51))
    assert ito_integral(one, W) == pytest.approx(W.values[-1] - W.values[0], abs=1e-12)
    assert ito_integral(zero, W) == 0.0


def test_ito_integral_of_w_dw_rms_error():
    # sum W dW = (W_T^2 - W_0^2 - sum dW^2) / 2, so the error against the
    # continuous value has RMS T / sqrt(2N) exactly
    T, N = 1.0, 256
    errs = []
    for s in range(200):
        W = _path(s, N, T)
        val = ito_integral(SampledProcess(W.grid, W.values), W)
        errs.append(val - (W.values[-1] ** 2 - W.values[0] ** 2 - T) / 2)
    rms = math.sqrt(np.mean(np.square(errs)))
    assert 0.7 * T / math.sqrt(2 * N) < rms < 1.3 * T / math.sqrt(2 * N)


def test_ito_integral_rms_decays_like_inverse_sqrt_n():
    T = 1.0
    rms = []
    Ns = [16, 64, 256]
    for N in Ns:
        errs = []
        for s in range(200):
            W = _path(s, N, T)
            val = ito_integral(SampledProcess(W.grid, W.values), W)
            errs.append(val - (W.values[-1] ** 2 - T) / 2)
        rms.append(math.sqrt(np.mean(np.square(errs))))
    slope = np.polyfit(np.log(Ns), np.log(rms), 1)[0]
    assert -0.65 < slope < -0.35


def test_forward_integral_is_mean_zero():
    N = 16
    vals = []
    for s in range(10_000):
        W = _path(s, N)
        vals.append(ito_integral(SampledProcess(W.grid, np.sin(W.values)), W))
    vals = np.array(vals)
    assert abs(vals.mean()) < 4 * vals.std() / math.sqrt(vals.size)


def test_backward_integral_constant_integrand():
    for N in (1, 7, 64, 1000):
        W = sample_brownian(TimeGrid.uniform_grid(1.0, N), N, 0, start=0.4)
        one = SampledProcess(W.grid, np.ones(N + 1))
        assert backward_ito_integral(one, W) == pytest.approx(W.values[-1] - W.values[0], abs=1e-12)


def test_backward_minus_forward_is_quadratic_variation():
    T, N = 1.0, 1024
    gaps = []
    for s in range(200):
        W = _path(s, N, T)
        xi = SampledProcess(W.grid, W.values)
        gaps.append(backward_ito_integral(xi, W) - ito_integral(xi, W) - T)
    assert math.sqrt(np.mean(np.square(gaps))) <= 5 / math.sqrt(N)


def test_backward_integral_of_w_dw_limit():
    T, N = 1.0, 1024
    errs = []
    for s in range(100):
        W = _path(s, N, T)
        val = backward_ito_integral(SampledProcess(W.grid, W.values), W)
        errs.append(val - (W.values[-1] ** 2 + T) / 2)
    assert math.sqrt(np.mean(np.square(errs))) < 2 * T / math.sqrt(2 * N)


def test_backward_integral_smooth_driver():
    T = 2.0
    for N in (10, 100, 1000):
        g = TimeGrid.uniform_grid(T, N)
        val = backward_ito_integral(SampledProcess(g, g.t), SampledProcess(g, g.t))
        # right-point rule for int t dt overshoots by T^2 / (2N)
        assert val == pytest.approx(T * T / 2 + T * T / (2 * N), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([8, 64, 512]), st.integers(0, 2**32 - 1))
def test_backward_integral_is_forward_integral_in_reversed_time(N, seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid.uniform_grid(1.0, N)
    W = BrownianPath.from_increments(g, rng.normal(0, math.sqrt(1 / N), N), rng.normal())
    xi = SampledProcess(g, rng.normal(size=N + 1))
    lhs = backward_ito_integral(xi, W)
    rhs = ito_integral(time_reverse(xi), time_reverse(W))
    assert lhs == rhs  # bit-exact
    assert right_endpoint_sum(xi, W) == pytest.approx(lhs, rel=1e-12, abs=1e-12)


def test_time_reverse_properties():
    W = _path(9, 33)
    Wr = time_reverse(W)
    assert Wr.values[0] == 0.0
    np.testing.assert_allclose(Wr.values, W.values[-1] - W.values[::-1], atol=1e-14)
    back = time_reverse(Wr)
    assert back.values.tobytes() == W.values.tobytes()
    assert back.increments.tobytes() == W.increments.tobytes()
    np.testing.assert_allclose(back.grid.t, W.grid.t, atol=1e-15)
    xi = SampledProcess(W.grid, np.arange(34.0))
    assert time_reverse(time_reverse(xi)).values.tobytes() == xi.values.tobytes()


def test_misaligned_grids_rejected():
    W = _path(1, 10)
    xi = SampledProcess(TimeGrid.uniform_grid(1.0, 11), np.zeros(12))
    with pytest.raises(ValueError):
        ito_integral(xi, W)
    with pytest.raises(ValueError):
        backward_ito_integral(xi, W)
    with pytest.raises(ValueError):
        SampledProcess(W.grid, np.zeros(5))


def test_coarsen_sums_increments():
    W = _path(4, 64)
    Wc = coarsen(W, 8)
    assert Wc.grid.N == 8
    np.testing.assert_allclose(Wc.values, W.values[::8], atol=1e-14)
    np.testing.assert_allclose(Wc.increments, W.increments.reshape(8, 8).sum(axis=1))
    with pytest.raises(ValueError):
        coarsen(W, 3)


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, 9, elements=st.floats(-1e6, 1e6)))
def test_csv_round_trip_is_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "p.csv"
    g = TimeGrid.uniform_grid(1.0, 8)
    write_csv(path, SampledProcess(g, values))
    back = read_csv(path)
    assert back.values.tobytes() == np.asarray(values, dtype=float).tobytes()
    assert back.grid.t.tobytes() == g.t.tobytes()
    assert path.read_text().splitlines()[0] == "t,value"
