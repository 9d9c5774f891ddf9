"""Unit tests for path generation: covariance formulas, grids, samplers."""

import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbmlab.fbm import (
    EXACT_NODE_CAP,
    FbmPath,
    GridSpec,
    GridSizeError,
    HurstIndex,
    as_hurst,
    fbm_covariance,
    fgn_autocovariance,
    path_to_csv,
    sample_at_times,
    sample_exact,
    sample_exact_batch,
    sample_fft,
    sample_fft_batch,
    substream,
)


# ---------------------------------------------------------------------------
# Hurst index and covariance formulas
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("bad", [0.0, 1.0, -0.3, 1.7])
def test_hurst_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        HurstIndex(bad)


def test_rough_regime_gate():
    HurstIndex(0.6).require_rough_regime()
    with pytest.raises(ValueError):
        HurstIndex(0.5).require_rough_regime()


def test_covariance_brownian_special_case():
    # at H = 1/2 the covariance is min(s, t)
    for s, t in [(0.3, 0.8), (0.5, 0.5), (1.0, 0.2)]:
        assert fbm_covariance(0.5, s, t) == pytest.approx(min(s, t), abs=1e-15)


def test_covariance_variance_is_t_power():
    for h in (0.55, 0.75, 0.9):
        assert fbm_covariance(h, 0.7, 0.7) == pytest.approx(0.7 ** (2 * h))


def test_covariance_half_point():
    # R(1/2, 1) = ((1/2)^{2H} + 1 - (1/2)^{2H}) / 2 = 1/2 for every H
    for h in (0.51, 0.6, 0.75, 0.9):
        assert fbm_covariance(h, 0.5, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_covariance_rejects_negative_times():
    with pytest.raises(ValueError):
        fbm_covariance(0.7, -0.1, 0.5)


@settings(max_examples=60, deadline=None)
@given(
    h=st.floats(0.05, 0.95),
    ts=st.lists(st.floats(0.01, 3.0), min_size=2, max_size=8, unique=True),
)
def test_covariance_matrix_is_psd(h, ts):
    ts = np.sort(np.asarray(ts))
    cov = fbm_covariance(h, ts[:, None], ts[None, :])
    eigs = np.linalg.eigvalsh(cov)
    assert eigs.min() >= -1e-9 * max(eigs.max(), 1.0)


def test_fgn_autocovariance_lag_zero_and_sum():
    for h in (0.55, 0.8):
        gamma = fgn_autocovariance(h, np.arange(0, 50), dt=1.0)
        assert gamma[0] == pytest.approx(1.0)
        # Var(B_n) = n^{2H} = sum over all lag pairs of the autocovariance
        n = 50
        var = n * gamma[0] + 2 * np.sum((n - np.arange(1, n)) * gamma[1:n])
        assert var == pytest.approx(n ** (2 * h), rel=1e-12)


def test_fgn_autocovariance_dt_scaling():
    g1 = fgn_autocovariance(0.7, [0, 1, 2], dt=1.0)
    g2 = fgn_autocovariance(0.7, [0, 1, 2], dt=0.25)
    np.testing.assert_allclose(g2, g1 * 0.25 ** 1.4, rtol=1e-13)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def test_grid_nodes_uniform():
    g = GridSpec(1.0, 8)
    np.testing.assert_allclose(g.nodes(), np.arange(9) / 8)
    assert not g.has_partial_step
    assert g.num_nodes == 9


def test_grid_partial_terminal_node():
    g = GridSpec(1.0, 8, 0.3)
    ts = g.nodes()
    assert g.full_steps == 2
    assert g.has_partial_step
    assert ts[-1] == pytest.approx(0.3)
    np.testing.assert_allclose(ts[:-1], [0.0, 0.125, 0.25])


def test_grid_near_integer_product_has_no_partial_step():
    # floating n*t slightly below an integer must not create a sliver node
    g = GridSpec(1.0, 10, 0.7000000000000001)
    assert g.full_steps == 7
    assert not g.has_partial_step


def test_refinement_factor():
    fine = GridSpec(1.0, 64)
    coarse = GridSpec(1.0, 16)
    assert fine.refinement_of(coarse) == 4
    with pytest.raises(ValueError):
        GridSpec(1.0, 48).refinement_of(GridSpec(1.0, 9))


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(0.0, 8)
    with pytest.raises(ValueError):
        GridSpec(1.0, 0)
    with pytest.raises(ValueError):
        GridSpec(1.0, 8, 1.5)


# ---------------------------------------------------------------------------
# substreams / determinism
# ---------------------------------------------------------------------------

def test_substream_reproducible_and_distinct():
    a = substream(7, 3, 0).standard_normal(4)
    b = substream(7, 3, 0).standard_normal(4)
    c = substream(7, 4, 0).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_batch_equals_concatenated_singles():
    grid = GridSpec(1.0, 16)
    batch = sample_fft_batch(0.7, grid, 5, 3)
    for r in range(3):
        single = sample_fft_batch(0.7, grid, 5, 1, first_replicate=r)
        np.testing.assert_array_equal(batch[r], single[0])


def test_exact_batch_offset_contract():
    grid = GridSpec(1.0, 8)
    batch = sample_exact_batch(0.6, grid, 1, 4)
    tail = sample_exact_batch(0.6, grid, 1, 2, first_replicate=2)
    np.testing.assert_array_equal(batch[2:], tail)


# ---------------------------------------------------------------------------
# sampler distribution checks (frozen seeds, generous statistical bounds)
# ---------------------------------------------------------------------------

def _empirical_cov(batch, grid):
    vals = batch[:, 0, 1:]  # drop the pinned origin
    return vals.T @ vals / len(batch)


@pytest.mark.parametrize("h", [0.55, 0.75])
def test_exact_sampler_matches_covariance(h):
    grid = GridSpec(1.0, 8)
    batch = sample_exact_batch(h, grid, 123, 4000)
    emp = _empirical_cov(batch, grid)
    ts = grid.nodes()[1:]
    cov = fbm_covariance(h, ts[:, None], ts[None, :])
    # entries are averages of products with variance ~ 2 cov_ii cov_jj / M
    tol = 5 * np.sqrt(2.0 / 4000) * np.sqrt(
        np.outer(np.diag(cov), np.diag(cov)))
    assert np.all(np.abs(emp - cov) < tol)


@pytest.mark.parametrize("h", [0.55, 0.9])
def test_fft_sampler_matches_covariance(h):
    grid = GridSpec(1.0, 8)
    batch = sample_fft_batch(h, grid, 321, 4000)
    emp = _empirical_cov(batch, grid)
    ts = grid.nodes()[1:]
    cov = fbm_covariance(h, ts[:, None], ts[None, :])
    tol = 5 * np.sqrt(2.0 / 4000) * np.sqrt(
        np.outer(np.diag(cov), np.diag(cov)))
    assert np.all(np.abs(emp - cov) < tol)


def test_fft_partial_node_marginal_variance():
    # terminal node at t = 0.3 on an n = 8 grid exercises the conditional draw
    grid = GridSpec(1.0, 8, 0.3)
    batch = sample_fft_batch(0.7, grid, 17, 8000)
    last = batch[:, 0, -1]
    var = last.var()
    target = 0.3 ** 1.4
    assert abs(var - target) < 5 * target * np.sqrt(2.0 / 8000)
    # covariance with the last uniform node
    prev = batch[:, 0, -2]
    cov = np.mean(last * prev)
    want = fbm_covariance(0.7, 0.25, 0.3)
    assert abs(cov - want) < 5 * np.sqrt(2.0 / 8000)


def test_sample_at_times_joint_law():
    ts = np.array([0.2, 0.5, 1.1])
    z = sample_at_times(0.65, ts, substream(9, 0), 6000)
    emp = z.T @ z / 6000
    cov = fbm_covariance(0.65, ts[:, None], ts[None, :])
    assert np.all(np.abs(emp - cov) < 5 * np.sqrt(2.0 / 6000) * np.sqrt(
        np.outer(np.diag(cov), np.diag(cov))))


def test_exact_cap_enforced():
    with pytest.raises(GridSizeError):
        sample_exact(0.7, GridSpec(2.0, EXACT_NODE_CAP), 0)


def test_components_are_independent_streams():
    grid = GridSpec(1.0, 32)
    path = sample_fft(0.7, grid, 42, components=2)
    assert path.components == 2
    assert not np.array_equal(path.component(1), path.component(2))
    corr = np.corrcoef(np.diff(path.component(1)), np.diff(path.component(2)))
    assert abs(corr[0, 1]) < 0.6  # single path, loose sanity bound


def test_path_to_csv_roundtrip():
    path = sample_fft(0.6, GridSpec(1.0, 4), 3, components=2)
    buf = io.StringIO()
    path_to_csv(path, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "t,B1,B2"
    assert len(lines) == path.grid.num_nodes + 1
    back = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    np.testing.assert_array_equal(back[:, 0], path.grid.nodes())
    np.testing.assert_array_equal(back[:, 1:].T, path.values)


def test_as_hurst_passthrough():
    h = HurstIndex(0.7)
    assert as_hurst(h) is h
    assert as_hurst(0.7) == h
