"""Fractional Brownian motion sample-path generation on uniform grids.

Two generators with the same distributional contract:

* :func:`sample_exact` -- Cholesky factorisation of the grid covariance,
  O(N^3), capped at ``EXACT_NODE_CAP`` nodes.
* :func:`sample_fft` -- circulant embedding of the stationary increment
  process (Davies-Harte), O(N log N).

Both are deterministic given ``(seed, replicate, component)``; substreams
are derived with :func:`substream` so results do not depend on execution
order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_toeplitz

__all__ = [
    "HurstIndex",
    "GridSpec",
    "FbmPath",
    "EmbeddingError",
    "GridSizeError",
    "EXACT_NODE_CAP",
    "fbm_covariance",
    "fgn_autocovariance",
    "substream",
    "sample_exact",
    "sample_exact_batch",
    "sample_fft",
    "sample_fft_batch",
    "sample_at_times",
    "path_to_csv",
]

EXACT_NODE_CAP = 4096

# grid arithmetic tolerance for deciding whether n * t_end is an integer
_GRID_EPS = 1e-9


class EmbeddingError(RuntimeError):
    """Circulant embedding spectrum had too much negative mass."""


class GridSizeError(ValueError):
    """Requested grid exceeds the configured node cap."""


@dataclass(frozen=True)
class HurstIndex:
    """Hurst parameter, valid in (0, 1)."""

    value: float

    def __post_init__(self):
        if not 0.0 < self.value < 1.0:
            raise ValueError(f"Hurst index must lie in (0, 1), got {self.value}")

    def require_rough_regime(self):
        """Raise unless H > 1/2 (scope of the convergence results)."""
        if self.value <= 0.5:
            raise ValueError(
                f"operation requires Hurst index > 1/2, got {self.value}"
            )


def as_hurst(h) -> HurstIndex:
    return h if isinstance(h, HurstIndex) else HurstIndex(float(h))


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid k/n for k = 0..floor(n*t_end), plus t_end itself when
    n*t_end is not an integer (so the clamped terminal node is exact)."""

    horizon: float
    points_per_unit: int
    t_end: float | None = None

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.points_per_unit < 1:
            raise ValueError("points_per_unit must be >= 1")
        if self.t_end is None:
            object.__setattr__(self, "t_end", float(self.horizon))
        if not 0.0 < self.t_end <= self.horizon + _GRID_EPS:
            raise ValueError("t_end must lie in (0, horizon]")

    @property
    def full_steps(self) -> int:
        return int(np.floor(self.points_per_unit * self.t_end + _GRID_EPS))

    @property
    def has_partial_step(self) -> bool:
        k = self.full_steps
        return self.t_end - k / self.points_per_unit > _GRID_EPS

    def nodes(self) -> np.ndarray:
        n = self.points_per_unit
        ts = np.arange(self.full_steps + 1) / n
        if self.has_partial_step:
            ts = np.append(ts, self.t_end)
        return ts

    @property
    def num_nodes(self) -> int:
        return self.full_steps + 1 + int(self.has_partial_step)

    def refinement_of(self, coarse: "GridSpec") -> int:
        """Integer refinement factor relative to ``coarse``; raises if the
        coarse nodes are not an exact subset."""
        r = self.points_per_unit / coarse.points_per_unit
        if abs(r - round(r)) > _GRID_EPS or r < 1:
            raise ValueError(
                f"grid with n={self.points_per_unit} does not refine n="
                f"{coarse.points_per_unit}"
            )
        if abs(self.t_end - coarse.t_end) > _GRID_EPS:
            raise ValueError("grids must share t_end")
        return int(round(r))


@dataclass(frozen=True)
class FbmPath:
    """Sampled fBm path; ``values`` has shape (components, num_nodes)."""

    hurst: HurstIndex
    grid: GridSpec
    values: np.ndarray

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def component(self, i: int) -> np.ndarray:
        """1-based component accessor."""
        return self.values[i - 1]


def fbm_covariance(h, s: float, t: float) -> float:
    """E[B_s B_t] = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2."""
    hv = as_hurst(h).value
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("times must be nonnegative")
    two_h = 2.0 * hv
    out = 0.5 * (t**two_h + s**two_h - np.abs(t - s) ** two_h)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(h, lags, dt: float = 1.0) -> np.ndarray:
    """Stationary increment autocovariance at integer lags, step size dt."""
    hv = as_hurst(h).value
    k = np.abs(np.asarray(lags, dtype=float))
    two_h = 2.0 * hv
    gamma = 0.5 * ((k + 1) ** two_h - 2 * k**two_h + np.abs(k - 1) ** two_h)
    return gamma * dt**two_h


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent substream keyed by (master_seed, *key).

    SeedSequence spawn keys act as a splittable counter, so streams are
    reproducible regardless of the order in which workers request them.
    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


# ---------------------------------------------------------------------------
# exact (Cholesky) sampling
# ---------------------------------------------------------------------------

def _cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # one retry distinguishes float rounding from a genuine logic bug
        try:
            return np.linalg.cholesky(cov + 1e-12 * np.eye(len(cov)))
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(
                "fBm grid covariance is not positive definite; "
                "this indicates a numerics bug"
            ) from exc


@lru_cache(maxsize=32)
def _grid_cholesky(h_value: float, nodes_key: tuple) -> np.ndarray:
    ts = np.asarray(nodes_key)
    cov = fbm_covariance(h_value, ts[:, None], ts[None, :])
    return _cholesky_with_jitter(cov)


def sample_exact_batch(
    h,
    grid: GridSpec,
    master_seed: int,
    count: int,
    components: int = 1,
    first_replicate: int = 0,
) -> np.ndarray:
    """Batch of exact paths; returns array (count, components, num_nodes).

    Replicate r uses substreams (master_seed, first_replicate + r, c), so
    a batch equals the concatenation of per-replicate calls.
    """
    h = as_hurst(h)
    if grid.num_nodes > EXACT_NODE_CAP:
        raise GridSizeError(
            f"{grid.num_nodes} nodes exceeds exact-sampler cap {EXACT_NODE_CAP}"
        )
    ts = grid.nodes()[1:]
    chol = _grid_cholesky(h.value, tuple(ts.tolist()))
    m = len(ts)
    out = np.zeros((count, components, grid.num_nodes))
    for r in range(count):
        for c in range(components):
            z = substream(master_seed, first_replicate + r, c).standard_normal(m)
            out[r, c, 1:] = chol @ z
    return out


def sample_exact(h, grid: GridSpec, seed: int, components: int = 1) -> FbmPath:
    values = sample_exact_batch(h, grid, seed, 1, components)[0]
    return FbmPath(as_hurst(h), grid, values)


def sample_at_times(h, times, rng: np.random.Generator, size: int) -> np.ndarray:
    """Exact joint samples of (B_{t_1}, ..., B_{t_m}) at arbitrary node
    times; returns array (size, m). Used for irregular-grid Monte Carlo."""
    ts = np.asarray(times, dtype=float)
    cov = fbm_covariance(h, ts[:, None], ts[None, :])
    chol = _cholesky_with_jitter(cov)
    z = rng.standard_normal((size, len(ts)))
    return z @ chol.T


# ---------------------------------------------------------------------------
# circulant-embedding (Davies-Harte) sampling
# ---------------------------------------------------------------------------

#: diagnostics: number of clamped eigenvalues beyond the -1e-9*max tolerance
clamp_warning_count = 0


@lru_cache(maxsize=32)
def _embedding_spectrum(h_value: float, n_increments: int) -> np.ndarray:
    """Eigenvalues of the circulant embedding of the unit-lag fGn covariance."""
    global clamp_warning_count
    m = 1
    while m < 2 * n_increments:
        m *= 2
    gamma = fgn_autocovariance(h_value, np.arange(m // 2 + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eigs = np.fft.fft(row).real
    neg = eigs < 0
    if np.any(neg):
        clamped_mass = -eigs[neg].sum()
        if np.any(eigs < -1e-9 * eigs.max()):
            clamp_warning_count += 1
        if clamped_mass > 1e-6 * np.abs(eigs).sum():
            raise EmbeddingError(
                f"negative embedding mass {clamped_mass:.3e} for H={h_value}, "
                f"N={n_increments}"
            )
        eigs = np.clip(eigs, 0.0, None)
    return eigs


def _fgn_from_normals(eigs: np.ndarray, zeta: np.ndarray, n_incr: int) -> np.ndarray:
    """Map iid standard normals (batch, m) to unit-lag fGn (batch, n_incr)."""
    m = eigs.shape[0]
    half = m // 2
    z = np.empty(zeta.shape[:-1] + (m,), dtype=complex)
    z[..., 0] = zeta[..., 0]
    z[..., half] = zeta[..., half]
    re = zeta[..., 1:half]
    im = zeta[..., half + 1:]
    z[..., 1:half] = (re + 1j * im) / np.sqrt(2.0)
    z[..., half + 1:] = np.conj(z[..., 1:half])[..., ::-1]
    x = np.fft.ifft(np.sqrt(eigs) * z, axis=-1).real * np.sqrt(m)
    return x[..., :n_incr]


def _partial_step_weights(h: HurstIndex, grid: GridSpec):
    """Conditional law of the terminal partial increment given the uniform
    increments: returns (w, cond_std) with mean = increments @ w."""
    n = grid.points_per_unit
    k = grid.full_steps
    tail = grid.t_end - k / n
    if k == 0:
        return np.zeros(0), tail**h.value
    gamma = fgn_autocovariance(h, np.arange(k), dt=1.0 / n)
    ks = np.arange(1, k + 1) / n
    # Cov(B_t - B_{k/n}, B_{i/n} - B_{(i-1)/n}), closed form via R(s,t)
    c = (
        fbm_covariance(h, grid.t_end, ks)
        - fbm_covariance(h, grid.t_end, ks - 1.0 / n)
        - fbm_covariance(h, k / n, ks)
        + fbm_covariance(h, k / n, ks - 1.0 / n)
    )
    w = solve_toeplitz(gamma, c)
    cond_var = tail ** (2 * h.value) - float(c @ w)
    return w, np.sqrt(max(cond_var, 0.0))


def sample_fft_batch(
    h,
    grid: GridSpec,
    master_seed: int,
    count: int,
    components: int = 1,
    first_replicate: int = 0,
) -> np.ndarray:
    """Batch of circulant-embedding paths, shape (count, components, N).

    Same distribution and substream contract as :func:`sample_exact_batch`.
    The terminal partial increment (when present) is drawn exactly from its
    conditional law given the uniform increments.
    """
    h = as_hurst(h)
    n = grid.points_per_unit
    k = grid.full_steps
    partial = grid.has_partial_step
    out = np.zeros((count, components, grid.num_nodes))

    if k > 0:
        eigs = _embedding_spectrum(h.value, k)
        m = eigs.shape[0]
    if partial:
        w, cond_std = _partial_step_weights(h, grid)

    for c in range(components):
        if k > 0:
            zeta = np.empty((count, m))
            extra = np.empty(count)
            for r in range(count):
                rng = substream(master_seed, first_replicate + r, c)
                zeta[r] = rng.standard_normal(m)
                if partial:
                    extra[r] = rng.standard_normal()
            incr = _fgn_from_normals(eigs, zeta, k) * n ** (-h.value)
            out[:, c, 1 : k + 1] = np.cumsum(incr, axis=-1)
            if partial:
                y = incr @ w + cond_std * extra
                out[:, c, k + 1] = out[:, c, k] + y
        else:
            for r in range(count):
                rng = substream(master_seed, first_replicate + r, c)
                out[r, c, 1] = grid.t_end ** h.value * rng.standard_normal()
    return out


def sample_fft(h, grid: GridSpec, seed: int, components: int = 1) -> FbmPath:
    values = sample_fft_batch(h, grid, seed, 1, components)[0]
    return FbmPath(as_hurst(h), grid, values)


def path_to_csv(path: FbmPath, stream) -> None:
    """Write ``t,B1[,B2]`` rows at full double precision."""
    cols = ["t"] + [f"B{i + 1}" for i in range(path.components)]
    stream.write(",".join(cols) + "\n")
    for t, row in zip(path.grid.nodes(), path.values.T):
        fields = [f"{t:.17g}"] + [f"{v:.17g}" for v in row]
        stream.write(",".join(fields) + "\n")
