"""Numerical Littlewood-Paley calculus on the torus grid.

The partition is the classical one: a smooth radial ``chi`` equal to 1 on
``|k| <= 3/4`` and vanishing for ``|k| >= 4/3``, ``phi(r) = chi(r/2) - chi(r)``
supported in ``3/4 <= r <= 8/3`` and ``phi_j(k) = phi(2^-j |k|)``.  The top
block ``j_max = log2(N) - 1`` collects everything above it,
``1 - chi(2^-j_max |k|)``, so the blocks sum to one on every grid mode.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .spectral import TimeField, TorusGrid, DuhamelAccumulator

CHI_INNER = 0.75
CHI_OUTER = 4.0 / 3.0


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity step: 1 for ``x <= 0``, 0 for ``x >= 1``."""
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x < 1.0, np.exp(-1.0 / np.maximum(1.0 - x, 1e-300)), 0.0)
        b = np.where(x > 0.0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
    return a / (a + b)


def chi(r: np.ndarray) -> np.ndarray:
    return _smooth_step((np.asarray(r, dtype=float) - CHI_INNER) / (CHI_OUTER - CHI_INNER))


def bump(r: np.ndarray) -> np.ndarray:
    return chi(np.asarray(r) / 2.0) - chi(r)


@dataclass(frozen=True)
class DyadicPartition:
    grid: TorusGrid

    @property
    def j_max(self) -> int:
        return int(round(math.log2(self.grid.N))) - 1

    @property
    def blocks(self) -> range:
        return range(-1, self.j_max + 1)

    def weights(self) -> np.ndarray:
        """Array ``(j_max + 2, *spec_shape)``; row ``j + 1`` is the bump of block ``j``."""
        return _partition_table(self.grid.d, self.grid.N)

    def weight(self, j: int) -> np.ndarray:
        if not -1 <= j <= self.j_max:
            raise ValueError(f"block index {j} outside [-1, {self.j_max}]")
        return self.weights()[j + 1]

    def support(self, j: int) -> tuple[float, float]:
        """Radial support ``(r_min, r_max)`` of block ``j`` in wavenumber units."""
        if j == -1:
            return 0.0, CHI_OUTER
        hi = math.inf if j == self.j_max else CHI_OUTER * 2.0 ** (j + 1)
        return CHI_INNER * 2.0**j, hi


@lru_cache(maxsize=16)
def _partition_table(d: int, N: int) -> np.ndarray:
    grid = TorusGrid(d, N)
    kabs = grid.kabs
    j_max = int(round(math.log2(N))) - 1
    out = np.empty((j_max + 2,) + grid.spec_shape)
    out[0] = chi(kabs)
    for j in range(0, j_max):
        out[j + 1] = chi(kabs / 2.0 ** (j + 1)) - chi(kabs / 2.0**j)
    out[j_max + 1] = 1.0 - chi(kabs / 2.0**j_max)
    out.setflags(write=False)
    return out


def partition(grid: TorusGrid) -> DyadicPartition:
    return DyadicPartition(grid)


def block_fields(grid: TorusGrid, f: np.ndarray, F: np.ndarray | None = None) -> np.ndarray:
    """All blocks ``Delta_j f`` stacked along axis 0 (row ``j + 1``)."""
    if F is None:
        F = grid.fft(f)
    W = _partition_table(grid.d, grid.N)
    return np.stack([grid.ifft(w * F) for w in W])


def lp_block(grid: TorusGrid, j: int, f: np.ndarray) -> np.ndarray:
    return grid.ifft(DyadicPartition(grid).weight(j) * grid.fft(f))


def lp_low(grid: TorusGrid, j: int, f: np.ndarray) -> np.ndarray:
    """``Delta_{<=j} f``; zero for ``j < -1``."""
    if j < -1:
        return np.zeros(grid.shape)
    W = _partition_table(grid.d, grid.N)
    j = min(j, DyadicPartition(grid).j_max)
    return grid.ifft(W[: j + 2].sum(axis=0) * grid.fft(f))


def lp_high(grid: TorusGrid, j: int, f: np.ndarray) -> np.ndarray:
    """``Delta_{>j} f``."""
    return np.asarray(f, dtype=float) - lp_low(grid, j, f)


# -- Besov norms ------------------------------------------------------------------

@dataclass
class BesovReport:
    alpha: float
    norm: float
    block_sups: list[float]
    slope: float | None = None
    fit_range: tuple[int, int] | None = None

    def to_json(self) -> str:
        return json.dumps({"alpha": self.alpha, "norm": self.norm, "m_j": self.block_sups,
                           "slope": self.slope, "fit_range": self.fit_range})


def block_sups(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    """``m_j = max_x |Delta_j f(x)|`` for ``j = -1 .. j_max``."""
    B = block_fields(grid, f)
    return np.abs(B).reshape(B.shape[0], -1).max(axis=1)


def block_sups_time(u: TimeField) -> np.ndarray:
    return np.max(np.stack([block_sups(u.grid, f) for f in u.data]), axis=0)


def block_rms(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    """Root-mean-square of each block over the grid, ``j = -1 .. j_max``."""
    B = block_fields(grid, f)
    return np.sqrt(np.mean(B.reshape(B.shape[0], -1) ** 2, axis=1))


def block_rms_time(u: TimeField) -> np.ndarray:
    return np.max(np.stack([block_rms(u.grid, f) for f in u.data]), axis=0)


def norm_from_sups(m: np.ndarray, alpha: float) -> float:
    j = np.arange(-1, m.size - 1)
    return float(np.max(2.0 ** (j * alpha) * m))


def besov_norm(grid: TorusGrid, f: np.ndarray, alpha: float) -> float:
    return norm_from_sups(block_sups(grid, f), alpha)


def besov_norm_time(u: TimeField, alpha: float) -> float:
    """``max_t ||u(t)||_{C^alpha}`` over the stored snapshots."""
    return norm_from_sups(block_sups_time(u), alpha)


def besov_report(grid: TorusGrid, f: np.ndarray, alpha: float, fit: bool = False) -> BesovReport:
    m = block_sups(grid, f)
    rep = BesovReport(alpha, norm_from_sups(m, alpha), m.tolist())
    if fit:
        lo, hi = default_fit_range(grid)
        rep.slope = slope_from_sups(m, lo, hi)
        rep.fit_range = (lo, hi)
    return rep


def linf(f: np.ndarray) -> float:
    return float(np.max(np.abs(f)))


# -- paraproducts -------------------------------------------------------------------

def _blocks_pair(grid, u, v):
    return block_fields(grid, u), block_fields(grid, v)


def para_less(grid: TorusGrid, u: np.ndarray, v: np.ndarray, _blocks=None) -> np.ndarray:
    """``u < v = sum_j Delta_{<=j-2} u Delta_j v``."""
    Bu, Bv = _blocks or _blocks_pair(grid, u, v)
    low = np.cumsum(Bu, axis=0)  # row i: Delta_{<= i-1} u
    out = np.zeros(grid.shape)
    for j in range(1, Bv.shape[0] - 1):
        # Delta_{<= j-2} u is row (j-2)+1 of the cumulative sum
        out += low[j - 1] * Bv[j + 1]
    return out


def para_greater(grid: TorusGrid, u: np.ndarray, v: np.ndarray, _blocks=None) -> np.ndarray:
    if _blocks is not None:
        _blocks = (_blocks[1], _blocks[0])
    return para_less(grid, v, u, _blocks)


def resonant(grid: TorusGrid, u: np.ndarray, v: np.ndarray, _blocks=None) -> np.ndarray:
    """``u o v = sum_{|i-j| <= 1} Delta_i u Delta_j v``."""
    Bu, Bv = _blocks or _blocks_pair(grid, u, v)
    n = Bu.shape[0]
    out = np.zeros(grid.shape)
    for i in range(n):
        near = Bv[max(i - 1, 0): min(i + 2, n)].sum(axis=0)
        out += Bu[i] * near
    return out


def precurly(grid: TorusGrid, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``u <= v = u < v + u o v``."""
    b = _blocks_pair(grid, u, v)
    return para_less(grid, u, v, b) + resonant(grid, u, v, b)


def succurly(grid: TorusGrid, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``u >= v = u > v + u o v``."""
    b = _blocks_pair(grid, u, v)
    return para_greater(grid, u, v, b) + resonant(grid, u, v, b)


def bony_parts(grid: TorusGrid, u: np.ndarray, v: np.ndarray):
    b = _blocks_pair(grid, u, v)
    return para_less(grid, u, v, b), resonant(grid, u, v, b), para_greater(grid, u, v, b)


def commutator_C(grid: TorusGrid, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``C(f, g, h) = (f < g) o h - f (g o h)``."""
    return resonant(grid, para_less(grid, f, g), h) - f * resonant(grid, g, h)


def paralinearization_residual(grid: TorusGrid, F: Callable, dF: Callable, f: np.ndarray) -> np.ndarray:
    """``F(f) - F'(f) < f``."""
    try:
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            Ff = np.asarray(F(f), dtype=float)
            dFf = np.asarray(dF(f), dtype=float)
    except Exception as exc:  # noqa: BLE001
        raise ValueError(f"function not evaluable on the field: {exc}") from exc
    if not (np.all(np.isfinite(Ff)) and np.all(np.isfinite(dFf))):
        raise ValueError("function not evaluable on the field: non-finite values")
    return Ff - para_less(grid, dFf, f)


def paramultiplication_residual(grid: TorusGrid, f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``f < (g < h) - (f g) < h``."""
    return para_less(grid, f, para_less(grid, g, h)) - para_less(grid, f * g, h)


def j_commutation_residual(f: TimeField, g: TimeField, order: int = 2) -> TimeField:
    """``J(f < g) - f < J g`` along the stored time grid."""
    grid = f.grid
    if len(f) != len(g):
        raise ValueError("time fields live on different time grids")
    acc_fg = DuhamelAccumulator(grid, f.dt, order)
    acc_g = DuhamelAccumulator(grid, f.dt, order)
    out = np.empty_like(f.data)
    for i in range(len(f)):
        jfg = grid.ifft(acc_fg.push(grid.fft(para_less(grid, f[i], g[i]))))
        jg = grid.ifft(acc_g.push(grid.fft(g[i])))
        out[i] = jfg - para_less(grid, f[i], jg)
    return TimeField(grid, f.dt, out, f.t0)


def time_holder_seminorm(f: TimeField, exponent: float) -> float:
    """``sup_{s<t} ||f(t) - f(s)||_inf / |t - s|^exponent`` over stored times."""
    n = len(f)
    best = 0.0
    for i in range(n - 1):
        diff = np.abs(f.data[i + 1:] - f.data[i]).reshape(n - i - 1, -1).max(axis=1)
        lag = f.dt * np.arange(1, n - i)
        best = max(best, float(np.max(diff / lag**exponent)))
    return best


# -- regularity estimation -------------------------------------------------------

def default_fit_range(grid: TorusGrid) -> tuple[int, int]:
    """Blocks ``2 .. j_max - 1`` (``1 .. j_max - 1`` on coarse grids).

    Block ``-1`` and ``0`` are not dyadic annuli and the top block is cut by
    the grid, so neither enters the fit.
    """
    j_max = DyadicPartition(grid).j_max
    return (2 if j_max >= 4 else 1), j_max - 1


def slope_from_sups(m: Sequence[float], lo: int, hi: int) -> float:
    """Least-squares slope of ``-log2 m_j`` against ``j`` for ``lo <= j <= hi``.

    ``m`` is indexed from block ``-1``.
    """
    m = np.asarray(m, dtype=float)
    js = np.arange(lo, hi + 1)
    vals = m[js + 1]
    if hi <= lo or np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise ValueError("degenerate regularity fit: blocks in the fit range vanish")
    return float(np.polyfit(js, -np.log2(vals), 1)[0])


def regularity_slope(field, grid: TorusGrid | None = None, fit_range: tuple[int, int] | None = None,
                     estimator: str = "sup") -> float:
    """Fitted regularity exponent of a field or a :class:`TimeField`.

    For a time field the block norms are maxima over the snapshots.
    ``estimator="rms"`` fits the spatial root-mean-square of each block instead
    of its sup; for stationary random fields it carries no ``log`` factor from
    the number of grid points per block.
    """
    if estimator not in ("sup", "rms"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if isinstance(field, TimeField):
        grid = field.grid
        m = block_sups_time(field) if estimator == "sup" else block_rms_time(field)
    else:
        if grid is None:
            raise ValueError("a grid is required for a bare array")
        m = block_sups(grid, field) if estimator == "sup" else block_rms(grid, field)
    lo, hi = fit_range or default_fit_range(grid)
    return slope_from_sups(m, lo, hi)


def random_band_limited(grid: TorusGrid, rng: np.random.Generator, alpha: float,
                        kmax: float | None = None, amplitude: float = 1.0) -> np.ndarray:
    """Random real field with block amplitudes ``~ 2^{-j alpha}`` up to ``kmax``.

    The field is normalised so that its ``C^alpha`` norm equals ``amplitude``.
    """
    g = grid.random_white(rng)
    k = np.maximum(grid.kabs, 1.0)
    spec = g * k ** (-alpha - grid.d / 2.0)
    if kmax is None:
        kmax = grid.N / 3.0
    spec = spec * (grid.kabs <= kmax)
    f = grid.ifft(spec)
    n = besov_norm(grid, f, alpha)
    return f * (amplitude / n) if n > 0 else f
