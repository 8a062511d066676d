"""Mollified noise, the stationary field Z, renormalisation constants and the
stochastic trees built from Z.

Noise normalisation: per complex Fourier mode (forward transform divided by
``N**d``) the noise has ``E[xi_k(t) conj(xi_k(s))] = delta(t - s)``, so mode ``k``
of ``Z`` is an Ornstein-Uhlenbeck process with rate ``lam_k = 1 + mu_k`` and
stationary variance ``chi_k^2 / (2 lam_k)``.  Mollification damps mode ``k`` by
``chi_k``; it acts in space only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import lp
from .spectral import DuhamelAccumulator, TimeField, TorusGrid, gradient

TREE_NAMES = ("Z", "W2", "W3", "I2", "I3")
RESONANT_NAMES = ("R1", "R2", "R3", "R4")

# fitted regularity targets (epsilon dropped)
TABLE1 = {"Z": -0.5, "W2": -1.0, "I3": 0.5, "I2": 1.0,
          "R1": 0.0, "R2": 0.0, "R3": 0.0, "R4": -0.5}


@dataclass(frozen=True)
class Mollifier:
    family: str
    delta: float

    def __post_init__(self):
        if self.family not in ("sharp", "gaussian"):
            raise ValueError(f"unknown mollifier family {self.family!r}")
        if not self.delta > 0:
            raise ValueError("mollification scale must be positive")

    def damping(self, grid: TorusGrid) -> np.ndarray:
        r = self.delta * grid.kabs
        if self.family == "sharp":
            return (r <= 1.0 + 1e-12).astype(float)
        return np.exp(-(r**2))


@dataclass(frozen=True)
class RenormConstants:
    a: float
    b: float
    delta: float
    family: str
    convention: str = "stationary"


def realization_seed(master: int, index: int) -> np.random.SeedSequence:
    """Counter-based child seed; independent of how realizations are scheduled."""
    return np.random.SeedSequence(entropy=master, spawn_key=(index,))


# -- renormalisation constants ------------------------------------------------------

def compute_a(grid: TorusGrid, mollifier: Mollifier) -> float:
    chi = mollifier.damping(grid)
    return float(np.sum(grid.multiplicity * chi**2 / (2.0 * grid.lam)))


def _full_modes(grid: TorusGrid):
    k = np.fft.fftfreq(grid.N, 1.0 / grid.N)
    ks = np.meshgrid(*([k] * grid.d), indexing="ij")
    return np.stack([x.ravel() for x in ks], axis=1).astype(int)


def _resonant_weight(grid: TorusGrid) -> np.ndarray:
    """``rho_p = sum_{|i-j|<=1} phi_i(p) phi_j(p)`` on the rfft layout."""
    W = lp.DyadicPartition(grid).weights()
    n = W.shape[0]
    rho = np.zeros(grid.spec_shape)
    for i in range(n):
        rho += W[i] * W[max(i - 1, 0): min(i + 2, n)].sum(axis=0)
    return rho


def compute_b(grid: TorusGrid, mollifier: Mollifier, convention: str = "stationary",
              n_quad: int = 400) -> float:
    """Second-order constant: ``b / 3 = E[(I2_stat o W2)(t, x)]``.

    The paired Wick contractions give

        b / 3 = sum_p rho_p sum_{k1 + k2 = p} F_k1 F_k2 * 2 / (lam_p + lam_k1 + lam_k2),

    ``F_k = chi_k^2 / (2 lam_k)``, with ``k1 + k2`` taken modulo ``N`` as the grid
    product does.  The denominator is written as ``int_0^inf exp(-s r) dr``,
    so the inner sum becomes a cyclic convolution at each quadrature node
    ``r``; the ``r`` integral uses the trapezoid rule in ``log r``.
    """
    if convention != "stationary":
        raise ValueError(f"unknown b convention {convention!r}")
    F = mollifier.damping(grid) ** 2 / (2.0 * grid.lam)
    weight = grid.multiplicity * _resonant_weight(grid) * grid.forcing_mask
    lam = grid.lam
    lam_hi = 3.0 * float(lam.max())
    s_lo = math.log(1e-10 / lam_hi)
    s_hi = math.log(60.0 / 3.0)
    s = np.linspace(s_lo, s_hi, n_quad)
    hs = s[1] - s[0]
    total = 0.0
    for si in s:
        r = math.exp(si)
        G = grid.ifft(F * np.exp(-lam * r))
        conv = grid.fft(G * G).real
        val = float(np.sum(weight * np.exp(-lam * r) * 2.0 * conv))
        total += val * r * hs
    return 3.0 * total


def compute_b_bruteforce(grid: TorusGrid, mollifier: Mollifier) -> float:
    """Direct double loop over retained mode pairs; oracle for small grids."""
    modes = _full_modes(grid)
    N = grid.N
    kk = np.where(modes > N // 2, modes - N, modes)
    k2 = np.sum(kk.astype(float) ** 2, axis=1)
    lam = 1.0 + 4.0 * math.pi**2 * k2
    r = mollifier.delta * np.sqrt(k2)
    if mollifier.family == "sharp":
        chi = (r <= 1.0 + 1e-12).astype(float)
    else:
        chi = np.exp(-(r**2))
    F = chi**2 / (2.0 * lam)
    keep = np.nonzero(F > 0)[0]
    # rho and product mask as functions of the full-grid mode
    rho_full = _full_from_rfft(grid, _resonant_weight(grid) * grid.forcing_mask)
    index = {tuple(m): i for i, m in enumerate(modes % N)}
    total = 0.0
    for i in keep:
        for j in keep:
            p = tuple((modes[i] + modes[j]) % N)
            ip = index[p]
            total += rho_full[ip] * F[i] * F[j] * 2.0 / (lam[ip] + lam[i] + lam[j])
    return 3.0 * total


def _full_from_rfft(grid: TorusGrid, arr: np.ndarray) -> np.ndarray:
    """Expand an even real rfft-layout table to all modes (fftn order, raveled)."""
    modes = _full_modes(grid) % grid.N
    out = np.empty(len(modes))
    h = grid.N // 2
    for n, m in enumerate(modes):
        m = m.copy()
        if m[-1] > h:
            m = (-m) % grid.N
        out[n] = arr[tuple(m)]
    return out


def renorm_constants(grid: TorusGrid, mollifier: Mollifier) -> RenormConstants:
    return RenormConstants(compute_a(grid, mollifier), compute_b(grid, mollifier),
                           mollifier.delta, mollifier.family)


# -- sampling Z and streaming the trees -----------------------------------------

class OUNoise:
    """Exact per-mode OU recursion for the unmollified field (``chi = 1``).

    The same innovations drive every mollification (multiply by ``chi``) and
    every coarser time step (``substeps`` fine steps per step), which is what
    couples runs across ``delta``, mollifier families and ``dt``.
    """

    def __init__(self, grid: TorusGrid, seed, h: float):
        self.grid = grid
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.decay = np.exp(-grid.lam * h)
        self.kick = np.sqrt(-np.expm1(-2.0 * grid.lam * h) / (2.0 * grid.lam))
        self.value = grid.random_white(self.rng) * np.sqrt(1.0 / (2.0 * grid.lam))

    def advance(self, substeps: int = 1) -> np.ndarray:
        for _ in range(substeps):
            self.value = self.decay * self.value + self.kick * self.grid.random_white(self.rng)
        return self.value


@dataclass
class TreeState:
    n: int
    t: float
    Z: np.ndarray
    W2: np.ndarray
    W3: np.ndarray
    I2: np.ndarray
    I3: np.ndarray
    Z_hat: np.ndarray


def wick_powers(grid: TorusGrid, Z: np.ndarray, a: float) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise ``(Z^2 - a, Z^3 - 3 a Z)``."""
    W2 = Z * Z - a
    W3 = Z * Z * Z - 3.0 * a * Z
    return W2, W3


def build_wick(Z: TimeField, a: float) -> tuple[TimeField, TimeField]:
    g = Z.grid
    W2 = np.empty_like(Z.data)
    W3 = np.empty_like(Z.data)
    for i, z in enumerate(Z.data):
        W2[i], W3[i] = wick_powers(g, z, a)
    return TimeField(g, Z.dt, W2, Z.t0), TimeField(g, Z.dt, W3, Z.t0)


def integrate_trees(W2: TimeField, W3: TimeField, order: int = 2) -> tuple[TimeField, TimeField]:
    from .spectral import duhamel_time_field
    return duhamel_time_field(W2, order), duhamel_time_field(W3, order)


def stream_trees(grid: TorusGrid, mollifier: Mollifier, constants: RenormConstants,
                 dt: float, n_steps: int, seed, noise_substeps: int = 1,
                 order: int = 2, noise: bool = True) -> Iterator[TreeState]:
    """Yield the trees at ``t_n = n dt`` for ``n = 0 .. n_steps``."""
    chi = mollifier.damping(grid)
    ou = OUNoise(grid, seed, dt / noise_substeps)
    acc2 = DuhamelAccumulator(grid, dt, order)
    acc3 = DuhamelAccumulator(grid, dt, order)
    a = constants.a
    for n in range(n_steps + 1):
        if n:
            ou.advance(noise_substeps)
        Zh = chi * ou.value if noise else np.zeros(grid.spec_shape, dtype=complex)
        Z = grid.ifft(Zh)
        W2, W3 = wick_powers(grid, Z, a)
        I2 = grid.ifft(acc2.push(grid.forcing(W2)))
        I3 = grid.ifft(acc3.push(grid.forcing(W3)))
        yield TreeState(n, n * dt, Z, W2, W3, I2, I3, Zh)


@dataclass
class TreeEnsemble:
    """One realisation of all trees at one mollification scale and seed.

    ``fields`` holds snapshots every ``save_every`` steps; :meth:`stream`
    regenerates the full-resolution sequence bit-for-bit from the seed.
    """

    grid: TorusGrid
    mollifier: Mollifier
    seed: int
    realization: int
    dt: float
    n_steps: int
    constants: RenormConstants
    save_every: int = 1
    noise_substeps: int = 1
    order: int = 2
    noise: bool = True
    fields: dict[str, TimeField] = field(default_factory=dict)

    @property
    def T(self) -> float:
        return self.dt * self.n_steps

    @property
    def a(self) -> float:
        return self.constants.a

    @property
    def b(self) -> float:
        return self.constants.b

    def seed_sequence(self) -> np.random.SeedSequence:
        return realization_seed(self.seed, self.realization)

    def stream(self) -> Iterator[TreeState]:
        return stream_trees(self.grid, self.mollifier, self.constants, self.dt, self.n_steps,
                            self.seed_sequence(), self.noise_substeps, self.order, self.noise)

    def saved(self, n: int) -> bool:
        return n % self.save_every == 0

    def __getitem__(self, name: str) -> TimeField:
        return self.fields[name]


def generate_trees(grid: TorusGrid, mollifier: Mollifier, T: float, dt: float, seed: int,
                   realization: int = 0, save_every: int = 1, noise_substeps: int = 1,
                   order: int = 2, constants: RenormConstants | None = None,
                   keep: tuple[str, ...] = TREE_NAMES, noise: bool = True) -> TreeEnsemble:
    n_steps = int(round(T / dt))
    if not math.isclose(n_steps * dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("T must be an integer multiple of dt")
    if n_steps % save_every:
        raise ValueError("save_every must divide the number of steps")
    if constants is None:
        constants = renorm_constants(grid, mollifier)
    ens = TreeEnsemble(grid, mollifier, seed, realization, dt, n_steps, constants,
                       save_every, noise_substeps, order, noise)
    store = {name: [] for name in keep}
    for st in ens.stream():
        if ens.saved(st.n):
            for name in keep:
                store[name].append(getattr(st, name))
    ens.fields = {name: TimeField(grid, dt * save_every, np.stack(v)) for name, v in store.items()}
    return ens


def sample_Z(grid: TorusGrid, mollifier: Mollifier, T: float, dt: float, seed: int,
             noise_substeps: int = 1) -> TimeField:
    n_steps = int(round(T / dt))
    chi = mollifier.damping(grid)
    ou = OUNoise(grid, realization_seed(seed, 0), dt / noise_substeps)
    out = np.empty((n_steps + 1,) + grid.shape)
    out[0] = grid.ifft(chi * ou.value)
    for n in range(1, n_steps + 1):
        out[n] = grid.ifft(chi * ou.advance(noise_substeps))
    return TimeField(grid, dt, out)


# -- renormalised resonant trees ---------------------------------------------------

def grad_sq(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    return sum(g * g for g in gradient(grid, f))


def resonant_trees_at(grid: TorusGrid, b: float, Z, W2, I2, I3) -> dict[str, np.ndarray]:
    return {
        "R1": lp.resonant(grid, I3, Z),
        "R2": lp.resonant(grid, I2, W2) - b / 3.0,
        "R3": grad_sq(grid, I2) - b / 3.0,
        "R4": lp.resonant(grid, I3, W2) - b * Z,
    }


def build_resonant_trees(ens: TreeEnsemble) -> dict[str, TimeField]:
    g = ens.grid
    out = {k: [] for k in RESONANT_NAMES}
    F = ens.fields
    for i in range(len(F["Z"])):
        r = resonant_trees_at(g, ens.b, F["Z"][i], F["W2"][i], F["I2"][i], F["I3"][i])
        for k in RESONANT_NAMES:
            out[k].append(r[k])
    dt = F["Z"].dt
    return {k: TimeField(g, dt, np.stack(v)) for k, v in out.items()}


def gradient_resonant_sum(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    """``sum_i d_i f o d_i f``."""
    return sum(lp.resonant(grid, g, g) for g in gradient(grid, f))


@dataclass
class LeibnizReport:
    residual_linf: float
    lhs_linf: float
    dt: float


def leibniz_equivalence_check(I2: TimeField, W2: TimeField) -> LeibnizReport:
    """Compare ``sum_i d_i I2 o d_i I2`` with ``I2 o W2 - (L + 1)(I2 o I2) / 2``.

    Leibniz for the resonant product gives
    ``(d_t - Lap)(f o f) = 2 f o (d_t - Lap) f - 2 sum_i d_i f o d_i f``.  ``I2``
    is only Hoelder in time, so the identity is checked integrated from 0 to
    every stored time (trapezoid rule), which avoids differencing a rough path.
    """
    g = I2.grid
    n = len(I2)
    if n < 3:
        raise ValueError("need at least three snapshots")
    if len(W2) != n:
        raise ValueError("time fields live on different time grids")
    sq = [lp.resonant(g, f, f) for f in I2.data]
    lhs_rate = [gradient_resonant_sum(g, f) for f in I2.data]
    rhs_rate = [lp.resonant(g, f, w) - 0.5 * g.ifft((1.0 + g.lam) * g.fft(q))
                for f, w, q in zip(I2.data, W2.data, sq)]
    lhs = np.zeros(g.shape)
    rhs = np.zeros(g.shape)
    worst = size = 0.0
    h = 0.5 * I2.dt
    for i in range(1, n):
        lhs += h * (lhs_rate[i - 1] + lhs_rate[i])
        rhs += h * (rhs_rate[i - 1] + rhs_rate[i])
        diff = lhs - (rhs - 0.5 * (sq[i] - sq[0]))
        worst = max(worst, lp.linf(diff))
        size = max(size, lp.linf(lhs))
    return LeibnizReport(worst, size, I2.dt)


# -- regularity ----------------------------------------------------------------------

def tree_fields(ens: TreeEnsemble) -> dict[str, TimeField]:
    out = dict(ens.fields)
    out.update(build_resonant_trees(ens))
    return out


def regularity_report(ensembles: list[TreeEnsemble], fit_range=None) -> dict[str, dict]:
    """Fitted regularity per tree averaged over realisations, next to the target.

    ``mean`` uses block sups; ``rms_mean`` is the same fit on block
    root-mean-squares, reported alongside as a bias-free comparison.
    """
    slopes: dict[str, list[float]] = {k: [] for k in TABLE1}
    rms: dict[str, list[float]] = {k: [] for k in TABLE1}
    for ens in ensembles:
        fields = tree_fields(ens)
        for name in TABLE1:
            slopes[name].append(lp.regularity_slope(fields[name], fit_range=fit_range))
            rms[name].append(lp.regularity_slope(fields[name], fit_range=fit_range, estimator="rms"))
    return {name: {"mean": float(np.mean(v)), "std": float(np.std(v)), "samples": v,
                   "rms_mean": float(np.mean(rms[name])), "rms_std": float(np.std(rms[name])),
                   "target": TABLE1[name]}
            for name, v in slopes.items()}


# -- renormalisation studies -----------------------------------------------------------

def monte_carlo_a(grid: TorusGrid, mollifier: Mollifier, n_realizations: int, seed: int,
                  T: float = 100.0, h: float = 0.5) -> tuple[float, float]:
    """Monte Carlo ``E[Z(x)^2]``; returns ``(estimate, std error)``.

    Each realisation averages ``Z^2`` over space and over a stationary path of
    length ``T`` sampled every ``h`` with the exact OU transition.  The zero
    mode relaxes at rate 1, so without the time average it dominates the error.
    """
    chi = mollifier.damping(grid)
    n = int(round(T / h))
    vals = np.empty(n_realizations)
    for r in range(n_realizations):
        ou = OUNoise(grid, realization_seed(seed, r), h)
        acc = 0.0
        for i in range(n):
            acc += np.mean(grid.ifft(chi * ou.value) ** 2)
            ou.advance()
        vals[r] = acc / n
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_realizations))


@dataclass
class ConstantScaling:
    ms: list[int]
    a: list[float]
    b: list[float]
    a_slope: float
    a_increment_slope: float
    b_slope: float
    b_r2: float


def constant_scaling(grid: TorusGrid, ms, family: str = "sharp", with_b: bool = True) -> ConstantScaling:
    """``a`` and ``b`` over ``delta = 2^-m``: slope of ``log a`` vs ``log delta``
    and a linear fit of ``b`` against ``m``."""
    ms = list(ms)
    a = [compute_a(grid, Mollifier(family, 2.0**-m)) for m in ms]
    log_d = -np.array(ms, dtype=float) * math.log(2.0)
    a_slope = float(np.polyfit(log_d, np.log(a), 1)[0])
    # divergent part only: the increments drop the finite low-mode sum
    a_inc = float(np.polyfit(log_d[1:], np.log(np.diff(a)), 1)[0]) if len(ms) > 2 else math.nan
    b, b_slope, r2 = [], math.nan, math.nan
    if with_b:
        b = [compute_b(grid, Mollifier(family, 2.0**-m)) for m in ms]
        coef = np.polyfit(ms, b, 1)
        fit = np.polyval(coef, ms)
        ss_res = float(np.sum((np.array(b) - fit) ** 2))
        ss_tot = float(np.sum((np.array(b) - np.mean(b)) ** 2))
        b_slope = float(coef[0])
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
    return ConstantScaling(ms, a, [float(x) for x in b], a_slope, a_inc, b_slope, r2)


@dataclass
class NecessityReport:
    ms: list[int]
    alpha: float
    w3_differences: list[float]
    z3_norms: list[float]

    @property
    def differences_decrease(self) -> bool:
        return bool(np.all(np.diff(self.w3_differences) < 0))

    @property
    def raw_increases(self) -> bool:
        return bool(np.all(np.diff(self.z3_norms) > 0))


def renormalization_necessity(grid: TorusGrid, ms, n_realizations: int, seed: int,
                              T: float = 0.01, dt: float = 1e-3, family: str = "sharp",
                              alpha: float = -0.6) -> NecessityReport:
    """``C_T C^alpha`` norms of ``W3`` differences between consecutive
    ``delta = 2^-m`` and of the raw cube ``Z^3``, averaged over realisations.

    All scales share one innovation sequence per realisation.
    """
    ms = list(ms)
    mols = [Mollifier(family, 2.0**-m) for m in ms]
    chis = [mo.damping(grid) for mo in mols]
    avals = [compute_a(grid, mo) for mo in mols]
    n_steps = int(round(T / dt))
    diffs = np.zeros((n_realizations, len(ms) - 1))
    raw = np.zeros((n_realizations, len(ms)))
    for r in range(n_realizations):
        ou = OUNoise(grid, realization_seed(seed, r), dt)
        for n in range(n_steps + 1):
            if n:
                ou.advance()
            Zs = [grid.ifft(c * ou.value) for c in chis]
            W3 = [z**3 - 3.0 * a * z for z, a in zip(Zs, avals)]
            for i in range(len(ms) - 1):
                diffs[r, i] = max(diffs[r, i], lp.besov_norm(grid, W3[i + 1] - W3[i], alpha))
            for i, z in enumerate(Zs):
                raw[r, i] = max(raw[r, i], lp.besov_norm(grid, z**3, alpha))
    return NecessityReport(ms, alpha, diffs.mean(axis=0).tolist(), raw.mean(axis=0).tolist())
