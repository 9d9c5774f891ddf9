"""Riemann sums of pathwise integrals with bounded-variation integrands.

An integrand of bounded variation is represented by its derivative measure:
f(x) = beta + sum_k c_k * sgn(x - a_k), with sgn(0) = -1 so f is
left-continuous (the left derivative of a convex function when all c_k are
nonnegative).  An absolutely continuous part can be quantised into atoms.

The normalised discretisation error S_n = n^{2H-1} (integral - Riemann sum)
is the central object; for indicator integrands and a single component it
has a closed form as a sum of |B - a| over grid steps that cross the level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fbm import FbmPath, GridSpec

__all__ = [
    "SignedMeasure",
    "ErrorSample",
    "indicator_measure",
    "eval_integrand",
    "riemann_sum",
    "reference_integral",
    "sign_change_error",
    "normalised_error",
]

MAX_DENSITY_ATOMS = 10_000


def _sgn(x):
    """Sign with sgn(0) = -1 (left-continuous convention)."""
    return np.where(np.asarray(x) > 0, 1.0, -1.0)


@dataclass(frozen=True)
class SignedMeasure:
    """Derivative measure of a BV integrand: atoms (a_k, c_k) plus base
    constant beta in f(x) = beta + sum c_k sgn(x - a_k)."""

    atoms: tuple
    base_constant: float = 0.0
    quantisation_tv: float = 0.0  # TV mass moved during density quantisation

    def __post_init__(self):
        atoms = tuple((float(a), float(c)) for a, c in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not np.isfinite(self.total_variation):
            raise ValueError("total variation must be finite")

    @property
    def total_variation(self) -> float:
        return float(sum(abs(c) for _, c in self.atoms))

    def growth_functional(self, p: float = 1.0) -> float:
        """G(P) = integral of exp(-P a^2 / 2) against |mu|."""
        if p <= 0:
            raise ValueError("growth constant must be positive")
        return float(sum(abs(c) * np.exp(-p * a * a / 2) for a, c in self.atoms))

    @staticmethod
    def from_density(density, lo: float, hi: float, n_atoms: int = 1000,
                     base_constant: float = 0.0) -> "SignedMeasure":
        """Quantise a density on [lo, hi] into atoms at mass quantiles.

        The moved TV mass is recorded in ``quantisation_tv``; its effect on
        discretisation-error rates is reported, not certified.
        """
        if n_atoms > MAX_DENSITY_ATOMS:
            raise ValueError(f"at most {MAX_DENSITY_ATOMS} quantisation atoms")
        xs = np.linspace(lo, hi, 64 * n_atoms + 1)
        vals = np.asarray([density(x) for x in xs], dtype=float)
        absmass = np.trapezoid(np.abs(vals), xs)
        if absmass == 0:
            return SignedMeasure((), base_constant)
        cum_abs = np.concatenate([[0.0], np.cumsum(
            0.5 * (np.abs(vals[1:]) + np.abs(vals[:-1])) * np.diff(xs))])
        edges = np.interp(np.linspace(0, absmass, n_atoms + 1), cum_abs, xs)
        cum = np.concatenate([[0.0], np.cumsum(
            0.5 * (vals[1:] + vals[:-1]) * np.diff(xs))])
        masses = np.diff(np.interp(edges, xs, cum))
        atoms = tuple(
            (0.5 * (a + b), m)
            for a, b, m in zip(edges[:-1], edges[1:], masses)
            if m != 0.0
        )
        return SignedMeasure(atoms, base_constant,
                             quantisation_tv=absmass / n_atoms)


def indicator_measure(a: float = 0.0) -> SignedMeasure:
    """Measure representing f(x) = 1_{x > a}."""
    return SignedMeasure(((a, 0.5),), base_constant=0.5)


def eval_integrand(f: SignedMeasure, x):
    """Evaluate f(x) = beta + sum c_k sgn(x - a_k); vectorised in x."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, f.base_constant)
    for a, c in f.atoms:
        out = out + c * _sgn(x - a)
    return float(out) if out.ndim == 0 else out


def _coarse_values(path: FbmPath, grid: GridSpec) -> np.ndarray:
    """Path values restricted to the nodes of ``grid`` (which the path's
    own grid must refine); shape (components, grid.num_nodes)."""
    r = path.grid.refinement_of(grid)
    idx = np.arange(grid.full_steps + 1) * r
    if grid.has_partial_step:
        idx = np.append(idx, path.grid.num_nodes - 1)
    return path.values[:, idx]


def riemann_sum(path: FbmPath, f: SignedMeasure, pair: tuple, grid: GridSpec) -> float:
    """Left-point Riemann sum of integral f(B^i) dB^j on ``grid``.

    The final increment is clamped at t_end via the grid's terminal node.
    """
    vals = _coarse_values(path, grid)
    i, j = pair
    bi = vals[i - 1]
    bj = vals[j - 1]
    fv = eval_integrand(f, bi[:-1])
    return float(fv @ np.diff(bj))


def reference_integral(path: FbmPath, f: SignedMeasure, pair: tuple,
                       fine_factor: int) -> float:
    """Fine-grid Riemann sum standing in for the exact integral.

    The path must itself live on the fine grid; ``fine_factor`` records the
    refinement relative to the coarse evaluation grid and must be >= 16 so
    the reference bias stays well below the measured error.
    """
    if fine_factor < 16:
        raise ValueError("fine_factor must be >= 16")
    return riemann_sum(path, f, pair, path.grid)


def sign_change_error(path: FbmPath, a: float, grid: GridSpec,
                      component: int = 1) -> float:
    """Closed form of S_n for f = 1_{x > a} and equal components.

    n^{2H-1} sum_k |B_{(k+1)/n ^ t} - a| over steps where the path crosses
    level a (signs taken with sgn(0) = -1).
    """
    b = _coarse_values(path, grid)[component - 1] - a
    crossed = _sgn(b[1:]) * _sgn(b[:-1]) < 0
    n = grid.points_per_unit
    h = path.hurst.value
    return float(n ** (2 * h - 1) * np.abs(b[1:][crossed]).sum())


def normalised_error(path: FbmPath, f: SignedMeasure, pair: tuple,
                     grid: GridSpec, fine_factor: int) -> "ErrorSample":
    """S_n via the generic fine-reference route; returns the full sample."""
    coarse = riemann_sum(path, f, pair, grid)
    ref = reference_integral(path, f, pair, fine_factor)
    n = grid.points_per_unit
    h = path.hurst.value
    s_n = n ** (2 * h - 1) * (ref - coarse)
    return ErrorSample(path.hurst.value, grid, f, tuple(pair), coarse, ref, s_n)


@dataclass(frozen=True)
class ErrorSample:
    hurst: float
    grid: GridSpec
    integrand: SignedMeasure
    component_pair: tuple
    riemann_sum: float
    reference_integral: float
    s_n: float
