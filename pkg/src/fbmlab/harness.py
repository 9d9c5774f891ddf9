"""Monte Carlo orchestration: discretisation-error experiments and rate fits.

Each replicate simulates one fine-grid path (per component) and evaluates
the normalised discretisation error S_n on every coarse resolution n from
that same path (common random numbers), together with the local-time limit
functional from the fine grid.  L2 errors per (H, n) cell are reduced in a
fixed order and substreams are keyed by absolute replicate id, so results
are bit-identical for any worker count.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fbm import FbmPath, GridSpec, as_hurst, sample_fft_batch
from .integrals import SignedMeasure, riemann_sum, sign_change_error
from .localtime import LocalTimeProfile, limit_functional

__all__ = [
    "ExperimentPlan",
    "RateReport",
    "PlanError",
    "fit_rate",
    "run_rate_experiment",
    "run_localtime_experiment",
    "level_decay_comparison",
    "default_fine_factor",
    "resolve_threads",
]

PILOT_REPLICATES = 200
REPLICATE_CAP = 10_000
# replicates per work unit; shrinks for large fine grids to bound memory
CHUNK = 200
CHUNK_VALUE_BUDGET = 2**23


def _chunk_size(plan) -> int:
    per_replicate = plan.components * max(plan.fine_n, 1)
    return max(1, min(CHUNK, CHUNK_VALUE_BUDGET // per_replicate))
# cap on replicates x fine-grid nodes to keep runs desk-scale
BUDGET_VALUES = 2e10


class PlanError(ValueError):
    pass


def default_fine_factor(h, reference_kind: str) -> int:
    """16 for sign-change references; for Riemann references, enough that
    the reference's own n^{1-2H} bias is two orders below the target."""
    if reference_kind == "fine_sign_change":
        return 16
    hv = as_hurst(h).value
    need = 100.0 ** (1.0 / (2 * hv - 1))
    f = 16
    while f < need and f < 256:
        f *= 2
    return f


def resolve_threads(threads=None) -> int:
    if threads is None:
        env = os.environ.get("FBMLAB_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


@dataclass(frozen=True)
class ExperimentPlan:
    hurst: float
    n_values: tuple
    integrand: SignedMeasure
    component_pair: tuple = (1, 1)
    t: float = 1.0
    replicates: int = 0  # 0 = auto-scale (pilot, then stderr <= 10% of l2)
    master_seed: int = 0
    fine_factor: int = 0  # 0 = default for the reference kind
    reference_kind: str = "fine_sign_change"

    def __post_init__(self):
        as_hurst(self.hurst).require_rough_regime()
        ns = tuple(int(n) for n in self.n_values)
        object.__setattr__(self, "n_values", ns)
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise PlanError("n values must be strictly increasing")
        if ns and ns[-1] < 4 * ns[0]:
            raise PlanError("n values must span at least 2 octaves")
        if self.reference_kind not in ("fine_sign_change", "fine_riemann"):
            raise PlanError(f"unknown reference kind {self.reference_kind!r}")
        if self.reference_kind == "fine_sign_change":
            i, j = self.component_pair
            if i != j:
                raise PlanError("sign-change references need equal components")
        if self.fine_factor == 0:
            object.__setattr__(
                self, "fine_factor",
                default_fine_factor(self.hurst, self.reference_kind))

    @property
    def fine_n(self) -> int:
        return self.n_values[-1] * self.fine_factor

    @property
    def components(self) -> int:
        return 2 if self.component_pair[0] != self.component_pair[1] else 1

    def check_budget(self, replicates: int) -> None:
        if replicates * (self.fine_n * self.t + 2) > BUDGET_VALUES:
            raise PlanError("plan exceeds the value-count budget")


@dataclass(frozen=True)
class RateReport:
    hurst: float
    n_values: tuple
    l2_error: tuple
    stderr: tuple
    replicates: int
    slope: float
    half_width: float
    target_slope: float
    passed: bool
    unusable: tuple = ()  # cells excluded from the fit (stderr > l2)
    wall_time: float = 0.0

    def rows(self):
        for n, l2, se in zip(self.n_values, self.l2_error, self.stderr):
            yield {
                "H": self.hurst, "n": n, "l2_error": l2, "stderr": se,
                "replicates": self.replicates, "slope": self.slope,
                "half_width": self.half_width, "pass": self.passed,
            }


def fit_rate(points):
    """Weighted least squares of log2(l2) on log2(n).

    ``points`` is a list of (n, l2_error, stderr); weights come from the
    delta-method error of log2(l2).  half_width is twice the slope's
    standard error.
    """
    points = [p for p in points if p[1] > 0]
    if len(points) < 3:
        raise PlanError("need at least 3 usable points for a rate fit")
    n = np.array([p[0] for p in points], dtype=float)
    l2 = np.array([p[1] for p in points], dtype=float)
    se = np.array([p[2] for p in points], dtype=float)
    x = np.log2(n)
    y = np.log2(l2)
    sig = se / (l2 * np.log(2.0))
    if np.all(sig > 0):
        w = 1.0 / sig**2
    else:
        w = np.ones_like(x)
    sw = w.sum()
    xbar = (w * x).sum() / sw
    ybar = (w * y).sum() / sw
    sxx = (w * (x - xbar) ** 2).sum()
    slope = float((w * (x - xbar) * (y - ybar)).sum() / sxx)
    intercept = float(ybar - slope * xbar)
    slope_se = float(np.sqrt(1.0 / sxx)) if np.all(sig > 0) else float(
        np.sqrt(((y - intercept - slope * x) ** 2).sum() / max(len(x) - 2, 1) / sxx)
    )
    return {"slope": slope, "intercept": intercept, "half_width": 2 * slope_se}


def _replicate_errors(plan: ExperimentPlan, first: int, count: int) -> np.ndarray:
    """Errors S_n - delta_ij * limit for replicates [first, first+count),
    shape (len(n_values), count)."""
    h = as_hurst(plan.hurst)
    fine_grid = GridSpec(plan.t, plan.fine_n, plan.t)
    grids = [GridSpec(plan.t, n, plan.t) for n in plan.n_values]
    i, j = plan.component_pair
    batch = sample_fft_batch(h, fine_grid, plan.master_seed, count,
                             plan.components, first_replicate=first)
    two_h = 2 * h.value
    errs = np.empty((len(grids), count))
    for r in range(count):
        path = FbmPath(h, fine_grid, batch[r])
        if plan.reference_kind == "fine_sign_change":
            # closed-form route: S_n per atom, limit from the fine grid
            fine_sc = {a: sign_change_error(path, a, fine_grid, i)
                       for a, _ in plan.integrand.atoms}
            for gi, grid in enumerate(grids):
                e = 0.0
                for a, c in plan.integrand.atoms:
                    e += 2 * c * (sign_change_error(path, a, grid, i) - fine_sc[a])
                errs[gi, r] = e
        else:
            ref = riemann_sum(path, plan.integrand, (i, j), fine_grid)
            if i == j:
                limit = sum(
                    2 * c * sign_change_error(path, a, fine_grid, i)
                    for a, c in plan.integrand.atoms
                )
            else:
                limit = 0.0
            for gi, grid in enumerate(grids):
                n = grid.points_per_unit
                s_n = n ** (two_h - 1) * (
                    ref - riemann_sum(path, plan.integrand, (i, j), grid))
                errs[gi, r] = s_n - limit
    return errs


def _collect(plan: ExperimentPlan, total: int, threads: int) -> np.ndarray:
    out = np.empty((len(plan.n_values), total))
    step = _chunk_size(plan)
    chunks = [(r, min(step, total - r)) for r in range(0, total, step)]

    def work(chunk):
        first, count = chunk
        out[:, first:first + count] = _replicate_errors(plan, first, count)

    if threads <= 1 or len(chunks) == 1:
        for c in chunks:
            work(c)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    return out


def _l2_and_stderr(errs: np.ndarray):
    sq = errs**2
    mean_sq = sq.mean(axis=1)
    l2 = np.sqrt(mean_sq)
    m = errs.shape[1]
    std_sq = sq.std(axis=1, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(l2 > 0, std_sq / (2 * np.maximum(l2, 1e-300) * np.sqrt(m)), 0.0)
    return l2, se


def run_rate_experiment(plan: ExperimentPlan, threads=None) -> RateReport:
    """Estimate l2(n) = ||S_n - delta_ij integral L dmu||_{L2} per n and
    fit the log-log rate; passes when slope <= -(1-H)/2 + 0.2 (the bound
    is one-sided, so faster decay also passes)."""
    start = time.monotonic()
    threads = resolve_threads(threads)
    hv = as_hurst(plan.hurst).value

    if plan.replicates > 0:
        total = plan.replicates
        plan.check_budget(total)
        errs = _collect(plan, total, threads)
    else:
        plan.check_budget(PILOT_REPLICATES)
        errs = _collect(plan, PILOT_REPLICATES, threads)
        l2, se = _l2_and_stderr(errs)
        needed = PILOT_REPLICATES
        for l2_c, se_c in zip(l2, se):
            if l2_c > 0 and se_c > 0:
                needed = max(needed, int(np.ceil(
                    PILOT_REPLICATES * (se_c / (0.1 * l2_c)) ** 2)))
        total = min(needed, REPLICATE_CAP)
        plan.check_budget(total)
        # extend deterministically from the pilot's last replicate id
        if total > PILOT_REPLICATES:
            more = np.empty((len(plan.n_values), total - PILOT_REPLICATES))
            step = _chunk_size(plan)
            chunks = [(r, min(step, total - r))
                      for r in range(PILOT_REPLICATES, total, step)]

            def work(chunk):
                first, count = chunk
                more[:, first - PILOT_REPLICATES:first - PILOT_REPLICATES + count] = \
                    _replicate_errors(plan, first, count)

            if threads <= 1 or len(chunks) == 1:
                for c in chunks:
                    work(c)
            else:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    list(pool.map(work, chunks))
            errs = np.concatenate([errs, more], axis=1)

    l2, se = _l2_and_stderr(errs)
    usable = [(n, l2_c, se_c) for n, l2_c, se_c in zip(plan.n_values, l2, se)
              if l2_c > 0 and se_c <= l2_c]
    unusable = tuple(n for n, l2_c, se_c in zip(plan.n_values, l2, se)
                     if not (l2_c > 0 and se_c <= l2_c))
    if all(l2_c == 0 for l2_c in l2):
        # degenerate plan (e.g. empty measure): flag rather than fit
        return RateReport(hv, plan.n_values, tuple(l2), tuple(se),
                          errs.shape[1], 0.0, 0.0, 0.0, True, unusable,
                          time.monotonic() - start)
    fit = fit_rate(usable)
    target = -(1 - hv) / 2 + 0.2
    return RateReport(
        hv, plan.n_values, tuple(l2), tuple(se), errs.shape[1],
        fit["slope"], fit["half_width"], target,
        bool(fit["slope"] <= target), unusable, time.monotonic() - start,
    )


def run_localtime_experiment(plan: ExperimentPlan, threads=None) -> RateReport:
    """Rate experiment for the level-crossing local-time estimator: the
    plan must carry a single-atom measure and equal components."""
    if len(plan.integrand.atoms) != 1 or plan.component_pair[0] != plan.component_pair[1]:
        raise PlanError("local-time experiment needs one level and i = j")
    plan = replace(plan, reference_kind="fine_sign_change")
    return run_rate_experiment(plan, threads)


def level_decay_comparison(h, n: int, levels, replicates: int = 1000,
                           master_seed: int = 0, t: float = 1.0,
                           fine_factor: int = 16, threads=None):
    """l2 error of the crossing estimator per level on shared paths.

    The same replicate substreams serve every level, isolating the
    exp(-P a^2/2) level-decay effect from Monte Carlo noise.
    """
    from .integrals import indicator_measure

    out = {}
    for a in levels:
        plan = ExperimentPlan(
            hurst=h, n_values=(n // 4, n // 2, n),
            integrand=SignedMeasure(((float(a), 0.5),), 0.5),
            component_pair=(1, 1), t=t, replicates=replicates,
            master_seed=master_seed, fine_factor=fine_factor,
        )
        errs = _collect(plan, replicates, resolve_threads(threads))
        l2, se = _l2_and_stderr(errs)
        out[float(a)] = {"l2_error": float(l2[-1]), "stderr": float(se[-1])}
    return out
