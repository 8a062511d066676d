"""Numerical checks of the inequalities and global statements.

Implicit constants (``<~``) are handled by two-sample calibration: the
constant is the largest LHS/RHS ratio over a calibration set, and a fresh set
drawn from disjoint seeds must stay below it with 25% headroom.  The maximum
principle carries an explicit constant and is checked without calibration.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import lp
from .spectral import (ETDStepper, TimeField, TorusGrid, apply_semigroup,
                       gradient, gradient_hat, laplacian)
from .transform import (CoefficientState, SolverOptions, TransformPipeline, _split_terms,
                        solve_u)
from .trees import Mollifier, TreeEnsemble, renorm_constants

HEADROOM = 1.25
N_SAMPLES = 100


class DegenerateSample(ValueError):
    """A sample whose right-hand side vanishes."""


def sample_rng(master: int, group: int, index: int) -> np.random.Generator:
    """Generator for sample ``index`` of ``group`` (0 = calibration, 1 = fresh)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master, spawn_key=(group, index)))


@dataclass
class EstimateReport:
    name: str
    calibration: list[float]
    fresh: list[float]
    constant: float
    headroom: float = HEADROOM
    explicit_constant: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def fresh_max(self) -> float:
        return max(self.fresh) if self.fresh else 0.0

    @property
    def threshold(self) -> float:
        return self.constant if self.explicit_constant else self.constant * self.headroom

    @property
    def passed(self) -> bool:
        return self.fresh_max <= self.threshold

    @property
    def violations(self) -> int:
        return sum(r > self.threshold for r in self.fresh)

    def summary(self) -> str:
        kind = "explicit" if self.explicit_constant else "calibrated"
        return (f"{self.name}: {kind} C={self.constant:.4g}, fresh max={self.fresh_max:.4g}, "
                f"threshold={self.threshold:.4g}, {'PASS' if self.passed else 'FAIL'}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(fresh_max=self.fresh_max, threshold=self.threshold, passed=self.passed)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _ratio(lhs: float, rhs: float) -> float:
    if not rhs > 1e-300 or not math.isfinite(rhs):
        raise DegenerateSample(f"right-hand side vanishes ({rhs!r})")
    return lhs / rhs


def calibrated_check(name: str, ratio_fn: Callable[[np.random.Generator], float],
                     n: int = N_SAMPLES, seed: int = 0, headroom: float = HEADROOM,
                     meta: dict | None = None) -> EstimateReport:
    calib = [float(ratio_fn(sample_rng(seed, 0, i))) for i in range(n)]
    fresh = [float(ratio_fn(sample_rng(seed, 1, i))) for i in range(n)]
    return EstimateReport(name, calib, fresh, max(calib), headroom, False, meta or {})


# -- random test fields ---------------------------------------------------------------

def random_field(grid: TorusGrid, rng: np.random.Generator, alpha: float,
                 amplitude: float | None = None) -> np.ndarray:
    """Band-limited field whose block amplitudes decay like ``2^{-j s}``.

    ``s`` is drawn near ``alpha``; the ``C^alpha`` norm is set to
    ``amplitude`` (log-uniform in ``[0.1, 10]`` if not given).
    """
    s = alpha + rng.uniform(0.0, 0.75)
    kmax = rng.uniform(2.0, grid.N / 2.0)
    if amplitude is None:
        amplitude = 10.0 ** rng.uniform(-1.0, 1.0)
    return lp.random_band_limited(grid, rng, s, kmax=kmax, amplitude=amplitude)


# -- exact identities --------------------------------------------------------------------

def exact_identity_suite(grid: TorusGrid, n: int = N_SAMPLES, seed: int = 0) -> dict[str, float]:
    """Worst errors over ``n`` random fields of the identities that hold exactly.

    ``block_bound`` is the worst ``LHS - RHS`` (relative) of
    ``sup_{j > m} 2^{j (alpha - d)} ||Delta_j f|| <= 2^{-m d} ||f||_alpha``, the
    sup-definition form that follows from the definition of the norm;
    ``block_bound_field_ratio`` is the largest ratio obtained by measuring the
    field ``Delta_{>m} f`` itself, whose blocks overlap their neighbours.
    """
    part = lp.DyadicPartition(grid)
    out = {"partition_of_unity": float(np.max(np.abs(part.weights().sum(axis=0) - 1.0)))}
    bony = pou = block = roundtrip = transform_rt = 0.0
    field_ratio = 0.0
    for i in range(n):
        rng = sample_rng(seed, 0, i)
        u = random_field(grid, rng, rng.uniform(-1.0, 1.5))
        v = random_field(grid, rng, rng.uniform(-1.0, 1.5))
        lo, res, hi = lp.bony_parts(grid, u, v)
        bony = max(bony, lp.linf(lo + res + hi - u * v) / max(1.0, lp.linf(u * v)))
        B = lp.block_fields(grid, u)
        pou = max(pou, lp.linf(B.sum(axis=0) - u) / max(1.0, lp.linf(u)))
        roundtrip = max(roundtrip, lp.linf(grid.ifft(grid.fft(u)) - u) / max(1.0, lp.linf(u)))
        I2 = random_field(grid, rng, 1.0, amplitude=rng.uniform(0.1, 2.0))
        transform_rt = max(transform_rt, lp.linf(np.exp(-3.0 * I2) * (np.exp(3.0 * I2) * u) - u)
                           / max(1.0, lp.linf(u)))
        m = np.abs(B).reshape(B.shape[0], -1).max(axis=1)
        alpha = rng.uniform(-1.0, 1.5)
        full = lp.norm_from_sups(m, alpha)
        for cut in range(-1, part.j_max):
            for dlt in (0.0, 0.25, 0.5, 1.0):
                js = np.arange(cut + 1, part.j_max + 1)
                seq = float(np.max(2.0 ** (js * (alpha - dlt)) * m[js + 1]))
                rhs = 2.0 ** (-cut * dlt) * full
                block = max(block, (seq - rhs) / rhs)
                fld = lp.besov_norm(grid, lp.lp_high(grid, cut, u), alpha - dlt)
                field_ratio = max(field_ratio, fld / rhs)
    out.update(bony=bony, lp_reconstruction=pou, block_bound=max(block, 0.0),
               fft_roundtrip=roundtrip, transform_roundtrip=transform_rt,
               block_bound_field_ratio=field_ratio)
    return out


# -- calibrated inequality samplers ------------------------------------------------------

def product_ratio(grid, rng, alpha=0.6, beta=-0.3):
    u, v = random_field(grid, rng, alpha), random_field(grid, rng, beta)
    return _ratio(lp.besov_norm(grid, u * v, min(alpha, beta)),
                  lp.besov_norm(grid, u, alpha) * lp.besov_norm(grid, v, beta))


def paraproduct_linf_ratio(grid, rng, beta=-0.5):
    u, v = random_field(grid, rng, 0.5), random_field(grid, rng, beta)
    return _ratio(lp.besov_norm(grid, lp.para_less(grid, u, v), beta),
                  lp.linf(u) * lp.besov_norm(grid, v, beta))


def paraproduct_neg_ratio(grid, rng, alpha=-0.3, beta=0.5):
    u, v = random_field(grid, rng, alpha), random_field(grid, rng, beta)
    return _ratio(lp.besov_norm(grid, lp.para_less(grid, u, v), alpha + beta),
                  lp.besov_norm(grid, u, alpha) * lp.besov_norm(grid, v, beta))


def resonant_ratio(grid, rng, alpha=-0.3, beta=0.6):
    u, v = random_field(grid, rng, alpha), random_field(grid, rng, beta)
    return _ratio(lp.besov_norm(grid, lp.resonant(grid, u, v), alpha + beta),
                  lp.besov_norm(grid, u, alpha) * lp.besov_norm(grid, v, beta))


def resonant_linf_ratio(grid, rng, beta=0.5):
    u, v = random_field(grid, rng, 0.5), random_field(grid, rng, beta)
    return _ratio(lp.besov_norm(grid, lp.resonant(grid, u, v), beta),
                  lp.linf(u) * lp.besov_norm(grid, v, beta))


def commutator_ratio(grid, rng, alpha=0.6, beta=-0.3, gamma=-0.2):
    f, g, h = (random_field(grid, rng, a) for a in (alpha, beta, gamma))
    C = lp.commutator_C(grid, f, g, h)
    return _ratio(lp.besov_norm(grid, C, alpha + beta + gamma),
                  lp.besov_norm(grid, f, alpha) * lp.besov_norm(grid, g, beta)
                  * lp.besov_norm(grid, h, gamma))


def interpolation_ratio(grid, rng, alpha=0.5, beta=1.5):
    f = random_field(grid, rng, beta)
    th = alpha / beta
    return _ratio(lp.besov_norm(grid, f, alpha),
                  lp.besov_norm(grid, f, beta) ** th * lp.linf(f) ** (1.0 - th))


def semigroup_ratio(grid, rng, gamma=1.0, alpha=-0.5):
    w = random_field(grid, rng, alpha)
    t = 10.0 ** rng.uniform(-3.0, 0.0)
    Pw = grid.ifft(apply_semigroup(grid, grid.fft(w), t))
    return _ratio(lp.besov_norm(grid, Pw, alpha + gamma), t ** (-gamma / 2.0) * lp.besov_norm(grid, w, alpha))


def _time_profile(rng, times):
    w = rng.uniform(0.5, 12.0)
    phase = rng.uniform(0, 2 * math.pi)
    return np.sin(w * times) * np.cos(phase) + (1.0 - np.cos(w * times)) * np.sin(phase)


def schauder_ratio(grid, rng, alpha=0.1, variant: int = 1, T=0.5, n_t=51):
    """``||f||_{2-alpha} / ||(L - b > grad - c >) f||_{-alpha}`` with ``f(0) = 0``.

    ``variant=2`` uses the pointwise operator ``L - b . grad - c`` (needs
    ``alpha < 1/2``).  The time derivative is a second-order finite
    difference on the snapshot grid.
    """
    times = np.linspace(0.0, T, n_t)
    dt = times[1] - times[0]
    modes = [random_field(grid, rng, 2.0 - alpha, amplitude=1.0) for _ in range(2)]
    prof = [_time_profile(rng, times) for _ in modes]
    f = np.einsum("mt,m...->t...", np.array(prof), np.array(modes))
    b = [random_field(grid, rng, -alpha, amplitude=rng.uniform(0.1, 3.0)) for _ in range(grid.d)]
    c = random_field(grid, rng, -alpha, amplitude=rng.uniform(0.1, 3.0))
    ft = np.gradient(f, dt, axis=0, edge_order=2)
    rhs = np.empty_like(f)
    for k in range(n_t):
        gf = gradient(grid, f[k])
        if variant == 1:
            drift = sum(lp.para_greater(grid, bi, gi) for bi, gi in zip(b, gf))
            react = lp.para_greater(grid, c, f[k])
        else:
            drift = sum(bi * gi for bi, gi in zip(b, gf))
            react = c * f[k]
        rhs[k] = ft[k] - laplacian(grid, f[k]) + f[k] - drift - react
    F, R = TimeField(grid, dt, f), TimeField(grid, dt, rhs)
    return _ratio(lp.besov_norm_time(F, 2.0 - alpha), lp.besov_norm_time(R, -alpha))


def lp_suite(grid: TorusGrid, n: int = N_SAMPLES, seed: int = 0) -> list[EstimateReport]:
    cases = [
        ("product", product_ratio),
        ("paraproduct_linf", paraproduct_linf_ratio),
        ("paraproduct_neg", paraproduct_neg_ratio),
        ("resonant", resonant_ratio),
        ("resonant_linf", resonant_linf_ratio),
        ("commutator", commutator_ratio),
        ("interpolation", interpolation_ratio),
    ] + [(f"semigroup_gamma{g}", (lambda gg: lambda gr, r: semigroup_ratio(gr, r, gg))(g))
         for g in (0.5, 1.0, 1.5)]
    return [calibrated_check(name, lambda r, fn=fn: fn(grid, r), n, seed) for name, fn in cases]


def check_schauder(grid: TorusGrid, n: int = N_SAMPLES, seed: int = 0, alpha: float = 0.1,
                   variant: int = 1) -> EstimateReport:
    if variant == 2 and alpha >= 0.5:
        raise ValueError("the pointwise Schauder variant needs alpha < 1/2")
    return calibrated_check(f"schauder{variant}", lambda r: schauder_ratio(grid, r, alpha, variant),
                            n, seed, meta={"alpha": alpha})


# -- maximum principle ---------------------------------------------------------------------

@dataclass
class MaxPrincipleInstance:
    """Coefficients ``b(t) = b0 + sin(w t) b1`` and likewise for ``Xi`` and ``g``."""

    b0: list[np.ndarray]
    b1: list[np.ndarray]
    xi0: np.ndarray
    xi1: np.ndarray
    g0: np.ndarray
    g1: np.ndarray
    f0: np.ndarray
    omega: float

    def at(self, t: float):
        s = math.sin(self.omega * t)
        return ([x + s * y for x, y in zip(self.b0, self.b1)], self.xi0 + s * self.xi1,
                self.g0 + s * self.g1)

    @classmethod
    def random(cls, grid: TorusGrid, rng: np.random.Generator) -> "MaxPrincipleInstance":
        def smooth(scale):
            return lp.random_band_limited(grid, rng, 2.0, kmax=rng.uniform(1.5, 4.0),
                                          amplitude=scale)
        b0 = [smooth(rng.uniform(0.0, 5.0)) for _ in range(grid.d)]
        b1 = [smooth(rng.uniform(0.0, 2.0)) for _ in range(grid.d)]
        g_amp = 10.0 ** rng.uniform(-1.0, 2.0)
        return cls(b0, b1, smooth(rng.uniform(0.0, 2.0)), smooth(rng.uniform(0.0, 1.0)),
                   smooth(g_amp), smooth(g_amp * rng.uniform(0.0, 0.5)),
                   smooth(10.0 ** rng.uniform(-1.0, 1.0)), rng.uniform(1.0, 20.0))


@dataclass
class MaxPrincipleResult:
    sup_f: float
    bound: float
    xi_sup: float
    g_sup: float
    f0_sup: float

    @property
    def ratio(self) -> float:
        return self.sup_f / self.bound


def solve_max_principle(grid: TorusGrid, inst: MaxPrincipleInstance, T: float = 0.5,
                        dt: float = 2e-3, tol: float = 1e-10) -> MaxPrincipleResult:
    """Solve ``(d/dt - Lap - b . grad) f = -e^Xi f^3 + g`` and evaluate the bound
    ``e^{||Xi||/3} ||g||^{1/3} + ||f(0)||``."""
    n = int(round(T / dt))
    stepper = ETDStepper(grid, dt, order=2, tol=tol, mass=0.0)
    f_hat = grid.fft(inst.f0)
    sup_f = lp.linf(inst.f0)
    xi_sup = g_sup = 0.0
    for k in range(n + 1):
        _, xi, g = inst.at(k * dt)
        xi_sup, g_sup = max(xi_sup, lp.linf(xi)), max(g_sup, lp.linf(g))
    for k in range(n):
        t0 = k * dt
        cache = {}

        def coeffs(th, t0=t0):
            if th not in cache:
                cache[th] = inst.at(t0 + th * dt)
            return cache[th]

        def rhs(F, th):
            b, xi, g = coeffs(th)
            f = grid.ifft(F)
            drift = sum(bi * gi for bi, gi in zip(b, gradient_hat(grid, F)))
            return grid.forcing(drift - np.exp(xi) * f**3 + g)

        def pre(f, th):
            return 3.0 * np.exp(coeffs(th)[1]) * f * f

        f_hat = stepper.step(f_hat, rhs, pre)
        sup_f = max(sup_f, lp.linf(grid.ifft(f_hat)))
    f0_sup = lp.linf(inst.f0)
    bound = math.exp(xi_sup / 3.0) * g_sup ** (1.0 / 3.0) + f0_sup
    return MaxPrincipleResult(sup_f, bound, xi_sup, g_sup, f0_sup)


def check_max_principle(grid: TorusGrid, n: int = 50, seed: int = 0, T: float = 0.5,
                        dt: float = 2e-3) -> EstimateReport:
    ratios = [solve_max_principle(grid, MaxPrincipleInstance.random(grid, sample_rng(seed, 1, i)),
                                  T, dt).ratio for i in range(n)]
    return EstimateReport("max_principle", [], ratios, 1.0, 1.0, True, {"T": T, "dt": dt})


# -- U1 / U2 bounds --------------------------------------------------------------------------

@dataclass
class UBoundContext:
    """Coefficient snapshots of one ensemble shared by all U-bound samples."""

    grid: TorusGrid
    states: list[CoefficientState]
    eps: float = 0.05
    eps_prime: float = 0.01
    kappa: float = 0.6

    @classmethod
    def from_ensemble(cls, ens: TreeEnsemble, **kw) -> "UBoundContext":
        states = [c for st, c in TransformPipeline(ens).stream() if ens.saved(st.n)]
        return cls(ens.grid, states, **kw)


def split_forcings(ctx: UBoundContext, u1: np.ndarray, u2: np.ndarray, n: int):
    """``U1`` and ``U2`` at every stored time for synthetic ``(u1, u2)`` paths."""
    g = ctx.grid
    U1, U2 = [], []
    for k, c in enumerate(ctx.states):
        _, _, a, b = _split_terms(g, c, n, u1[k], u2[k], gradient(g, u1[k]), gradient(g, u2[k]))
        U1.append(a)
        U2.append(b)
    return np.stack(U1), np.stack(U2)


def _tnorm(g, f, alpha):
    return max(lp.besov_norm(g, x, alpha) for x in f)


def u_bound_terms(ctx: UBoundContext, u1: np.ndarray, u2: np.ndarray, n: int, delta: float) -> dict:
    """The three inequalities for ``U1`` and ``U2`` as (LHS, RHS) pairs."""
    g, eps, ep, kap = ctx.grid, ctx.eps, ctx.eps_prime, ctx.kappa
    U1, U2 = split_forcings(ctx, u1, u2, n)
    u = u1 + u2
    m1, m2, m = (float(np.max(np.abs(x))) for x in (u1, u2, u))
    poly = sum(m1**i * m2 ** (3 - i) for i in (1, 2, 3))
    base = poly + _tnorm(g, u1, 1.0 + ep) + _tnorm(g, u, 0.5 + ep) * (1.0 + m)
    return {
        "U1": (_tnorm(g, U1, -0.5 - eps - delta), (1.0 + 2.0 ** (-n * delta) * m) ** 2),
        "U2_neg": (_tnorm(g, U2, -0.5 - eps), base),
        "U2_linf": (float(np.max(np.abs(U2))), base + 2.0 ** (n * kap) * m + 2.0 ** (2 * n * kap) * m * m),
    }


def random_split_pair(ctx: UBoundContext, rng: np.random.Generator):
    K = len(ctx.states)
    times = np.linspace(0.0, 1.0, K)
    out = []
    for _ in range(2):
        amp = 10.0 ** rng.uniform(-1.5, 1.3)
        modes = [random_field(ctx.grid, rng, 1.5, amplitude=1.0) for _ in range(2)]
        prof = [1.0 + 0.5 * np.sin(rng.uniform(0.5, 6.0) * times + rng.uniform(0, 6.3)) for _ in modes]
        out.append(amp * np.einsum("mt,m...->t...", np.array(prof), np.array(modes)))
    return out[0], out[1]


def check_U_bounds(ctx: UBoundContext, n_samples: int = N_SAMPLES, seed: int = 0,
                   which: Sequence[str] = ("U1", "U2_neg", "U2_linf"),
                   fixed_delta: float | None = None) -> dict[str, EstimateReport]:
    """Calibrated ratios of the three bounds over random synthetic ``(u1, u2)``.

    The bounds hold for arbitrary ``u1, u2``, which is what makes synthetic
    paths legitimate samples.  Each sample draws ``n`` in ``{1, 2, 3}`` and,
    unless fixed, the block-bound exponent ``delta`` in ``[0, 3/2]``.
    """
    def ratios(group):
        out = {k: [] for k in which}
        for i in range(n_samples):
            rng = sample_rng(seed, group, i)
            u1, u2 = random_split_pair(ctx, rng)
            n = int(rng.integers(1, 4))
            delta = fixed_delta if fixed_delta is not None else rng.uniform(0.0, 1.5)
            terms = u_bound_terms(ctx, u1, u2, n, delta)
            for k in which:
                out[k].append(_ratio(*terms[k]))
        return out

    cal, fresh = ratios(0), ratios(1)
    return {k: EstimateReport(f"U_bound_{k}", cal[k], fresh[k], max(cal[k]),
                              meta={"eps": ctx.eps, "kappa": ctx.kappa}) for k in which}


# -- studies ---------------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    deltas: list[float]
    norm: str
    pairwise: dict[str, list[float]]
    cross_family: list[float]
    rates: dict[str, float | None]
    blow_up: bool = False

    @staticmethod
    def _decreasing(v: Sequence[float]) -> bool:
        return all(b < a for a, b in zip(v, v[1:]))

    @property
    def monotone(self) -> dict[str, bool]:
        return {k: self._decreasing(v) for k, v in self.pairwise.items()}

    @property
    def cross_monotone(self) -> bool:
        return self._decreasing(self.cross_family)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(monotone=self.monotone, cross_monotone=self.cross_monotone)
        return d


def _fit_rate(deltas, diffs) -> float | None:
    x = np.log(np.asarray(deltas[1:], dtype=float))
    y = np.asarray(diffs, dtype=float)
    if len(y) < 2 or np.any(y <= 0):
        return None
    return float(np.polyfit(x, np.log(y), 1)[0])


def delta_convergence_study(grid: TorusGrid, deltas: Sequence[float], phi0: np.ndarray,
                            T: float, dt: float, seed: int = 0,
                            families: Sequence[str] = ("sharp", "gaussian"),
                            alpha: float = 0.5, save_every: int | None = None,
                            opts: SolverOptions = SolverOptions(), realization: int = 0,
                            noise: bool = True) -> ConvergenceReport:
    """Common-noise solves of the u equation across ``deltas`` and families.

    Every run uses the same innovations, damped by the family's multiplier,
    so differences are pathwise.  ``pairwise[family][m]`` is
    ``||u_{delta_m} - u_{delta_{m+1}}||_{C_T C^alpha}``; ``cross_family[m]`` is
    the distance between the first two families at ``delta_m``.
    """
    deltas = [float(x) for x in deltas]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")
    n_steps = int(round(T / dt))
    save_every = save_every or max(1, n_steps // 10)
    sols: dict[str, list[np.ndarray]] = {f: [] for f in families}
    blow = False
    for fam in families:
        for dl in deltas:
            m = Mollifier(fam, dl)
            ens = TreeEnsemble(grid, m, seed, realization, dt, n_steps, renorm_constants(grid, m),
                               save_every=save_every, noise=noise)
            res = solve_u(ens, phi0, opts)
            blow = blow or res.blow_up
            sols[fam].append(res.u.data)

    def dist(a, b):
        return lp.besov_norm_time(TimeField(grid, dt * save_every, a - b), alpha)

    pairwise = {f: [dist(s[i], s[i + 1]) for i in range(len(s) - 1)] for f, s in sols.items()}
    cross = []
    if len(families) >= 2:
        a, b = sols[families[0]], sols[families[1]]
        cross = [dist(x, y) for x, y in zip(a, b)]
    rates = {f: _fit_rate(deltas, v) for f, v in pairwise.items()}
    return ConvergenceReport(deltas, f"C_T C^{alpha}", pairwise, cross, rates, blow)


@dataclass
class GlobalRun:
    magnitude: float
    blow_up: bool
    t_star: float | None
    times: list[float]
    besov_u: list[float]
    linf_u: list[float]
    window_sup: float
    norm_at_1: float


@dataclass
class GlobalReport:
    runs: list[GlobalRun]
    window: tuple[float, float]

    @property
    def any_blow_up(self) -> bool:
        return any(r.blow_up for r in self.runs)

    @property
    def spread(self) -> float:
        w = [r.window_sup for r in self.runs]
        return max(w) / min(w)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(any_blow_up=self.any_blow_up, spread=self.spread)
        return d


def global_bound_study(grid: TorusGrid, mollifier: Mollifier, shape: np.ndarray, T: float,
                       dt: float, magnitudes: Sequence[float] = (1.0, 5.0, 10.0), seed: int = 0,
                       window: tuple[float, float] = (2.0, 4.0), save_every: int | None = None,
                       opts: SolverOptions = SolverOptions()) -> GlobalReport:
    """Long solves from ``phi_0 = m * shape / ||shape||_inf`` for each magnitude ``m``."""
    n_steps = int(round(T / dt))
    save_every = save_every or max(1, int(round(0.05 / dt)))
    C = renorm_constants(grid, mollifier)
    unit = shape / lp.linf(shape)
    runs = []
    for mag in magnitudes:
        ens = TreeEnsemble(grid, mollifier, seed, 0, dt, n_steps, C, save_every=save_every)
        res = solve_u(ens, mag * unit, opts)
        t = res.times
        inside = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
        w = float(np.max(res.besov_u[inside])) if inside.any() else float("nan")
        at1 = float(np.interp(1.0, t, res.besov_u)) if t[-1] >= 1.0 else float("nan")
        runs.append(GlobalRun(float(mag), res.blow_up, res.t_star, t.tolist(), res.besov_u.tolist(),
                              res.linf_u.tolist(), w, at1))
    return GlobalReport(runs, window)
