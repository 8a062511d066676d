"""Torus grids, Fourier transforms and the heat semigroup of L = d/dt - Lap + 1.

Conventions used everywhere in the package:

* the torus has period 1 per axis and ``N`` points per axis;
* the forward transform divides by ``N**d`` so that the zero coefficient is the
  spatial mean, ``f(x) = sum_k F_k exp(2 pi i k.x)``;
* Laplacian eigenvalues are ``mu_k = 4 pi^2 |k|^2`` and ``L`` acts on mode ``k``
  as ``d/dt + lam_k`` with ``lam_k = mass + mu_k`` (``mass = 1`` by default).

Real fields are plain ``float64`` arrays of shape ``(N,)*d``; spectral fields are
the matching ``rfftn`` half-spectrum arrays of shape ``(N,)*(d-1) + (N//2+1,)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.fft as sfft


class NumericalFailure(RuntimeError):
    """Base class for numerical failures (exit code 3 in the CLI)."""


class PicardError(NumericalFailure):
    """Inner fixed-point iteration of a time step failed to contract."""


class BlowUpError(NumericalFailure):
    """A field became non-finite or exceeded the blow-up threshold."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the period-1 torus of dimension ``d``.

    ``dealias`` controls whether :meth:`forcing` applies the 2/3 rule to the
    spectrum of every nonlinear source that enters a time step.  Pointwise
    algebra between fields at a fixed time is plain collocation either way;
    the default is pure collocation, under which every pointwise identity of
    the transform holds on the grid exactly.
    """

    d: int
    N: int
    dealias: bool = False

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.N < 4 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 4, got {self.N}")

    # -- shapes ---------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def spec_shape(self) -> tuple[int, ...]:
        return (self.N,) * (self.d - 1) + (self.N // 2 + 1,)

    @property
    def size(self) -> int:
        return self.N**self.d

    # -- mode tables (rfft layout) -------------------------------------------
    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per axis, broadcastable to ``spec_shape``."""
        full = np.fft.fftfreq(self.N, 1.0 / self.N)
        half = np.arange(self.N // 2 + 1, dtype=float)
        ks = []
        for ax in range(self.d):
            k = half if ax == self.d - 1 else full
            shp = [1] * self.d
            shp[ax] = k.size
            ks.append(k.reshape(shp))
        return tuple(ks)

    @cached_property
    def k2(self) -> np.ndarray:
        out = np.zeros(self.spec_shape)
        for k in self.wavenumbers:
            out = out + k**2
        return out

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def mu(self) -> np.ndarray:
        """Laplacian eigenvalue ``4 pi^2 |k|^2`` per mode."""
        return 4.0 * math.pi**2 * self.k2

    @cached_property
    def lam(self) -> np.ndarray:
        """Symbol ``1 + mu_k`` of ``-Lap + 1``."""
        return 1.0 + self.mu

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """Number of full-spectrum modes represented by each rfft entry."""
        m = np.full(self.spec_shape, 2.0)
        m[..., 0] = 1.0
        m[..., -1] = 1.0
        return m

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        mask = np.ones(self.spec_shape, dtype=bool)
        cut = self.N / 3.0
        for k in self.wavenumbers:
            mask = mask & (np.abs(k) <= cut)
        return mask

    @cached_property
    def nyquist_free(self) -> list[np.ndarray]:
        """Per-axis ``2 pi i k`` with the Nyquist wavenumber zeroed."""
        out = []
        for k in self.wavenumbers:
            kk = np.where(np.abs(k) == self.N // 2, 0.0, k)
            out.append(2j * math.pi * kk)
        return out

    @cached_property
    def points(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.N) / self.N
        return tuple(np.meshgrid(*([x] * self.d), indexing="ij"))

    # -- transforms ------------------------------------------------------------
    @cached_property
    def _axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, axes=self._axes, norm="forward")

    def ifft(self, F: np.ndarray) -> np.ndarray:
        return sfft.irfftn(F, s=self.shape, axes=self._axes, norm="forward")

    def dealiased(self, f: np.ndarray) -> np.ndarray:
        """Physical field with all modes ``|k_i| > N/3`` removed."""
        return self.ifft(self.fft(f) * self.dealias_mask)

    def forcing(self, f: np.ndarray) -> np.ndarray:
        """Spectrum of a nonlinear source, 2/3-truncated if the grid dealiases."""
        F = self.fft(f)
        return F * self.dealias_mask if self.dealias else F

    @property
    def forcing_mask(self) -> np.ndarray:
        return self.dealias_mask.astype(float) if self.dealias else np.ones(self.spec_shape)

    def mean(self, f: np.ndarray) -> float:
        return float(np.mean(f))

    def random_white(self, rng: np.random.Generator) -> np.ndarray:
        """Hermitian complex Gaussians with ``E|g_k|^2 = 1`` on every mode."""
        x = rng.standard_normal(self.shape)
        return self.fft(x) * math.sqrt(self.size)


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite entries in {what}")


def forward_transform(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    _check_finite(f, "real field")
    return grid.fft(f)


def inverse_transform(grid: TorusGrid, F: np.ndarray) -> np.ndarray:
    F = np.asarray(F)
    if F.shape != grid.spec_shape:
        raise ValueError(f"spectrum shape {F.shape} does not match grid {grid.spec_shape}")
    _check_finite(F, "spectral field")
    return grid.ifft(F)


def full_spectrum(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    """All ``N**d`` coefficients (numpy ``fftn`` index order) of a real field."""
    return np.fft.fftn(f) / grid.size


def apply_semigroup(grid: TorusGrid, F: np.ndarray, t: float, mass: float = 1.0) -> np.ndarray:
    """``P_t`` on a spectrum: multiply mode ``k`` by ``exp(-t (mass + mu_k))``."""
    if t < 0:
        raise ValueError(f"semigroup time must be non-negative, got {t}")
    return F * np.exp(-t * (mass + grid.mu))


def gradient(grid: TorusGrid, f: np.ndarray) -> list[np.ndarray]:
    F = grid.fft(f)
    return [grid.ifft(ik * F) for ik in grid.nyquist_free]


def gradient_hat(grid: TorusGrid, F: np.ndarray) -> list[np.ndarray]:
    return [grid.ifft(ik * F) for ik in grid.nyquist_free]


def dealias(grid: TorusGrid, F: np.ndarray) -> np.ndarray:
    return F * grid.dealias_mask


def laplacian(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    return grid.ifft(-grid.mu * grid.fft(f))


# -- exponential weights --------------------------------------------------------

def _phi1_over_x(x: np.ndarray) -> np.ndarray:
    """``(1 - exp(-x)) / x`` with the removable singularity at 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1e-4
    xs = x[small]
    out[small] = 1.0 - xs / 2.0 + xs**2 / 6.0
    xl = x[~small]
    out[~small] = -np.expm1(-xl) / xl
    return out


def _g_over_x2(x: np.ndarray) -> np.ndarray:
    """``(1 - exp(-x)(1 + x)) / x**2`` without cancellation for small ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1e-3
    xs = x[small]
    out[small] = 0.5 - xs / 3.0 + xs**2 / 8.0 - xs**3 / 30.0
    xl = x[~small]
    out[~small] = (-np.expm1(-xl) - xl * np.exp(-xl)) / xl**2
    return out


@dataclass
class ExpWeights:
    """Mode-wise weights of one exponential step of length ``h``.

    ``decay = exp(-lam h)``, ``phi1 = int_0^h exp(-lam (h - s)) ds`` and the split
    ``phi1 = w_start + w_end`` of the linear-interpolation quadrature.
    """

    h: float
    decay: np.ndarray
    phi1: np.ndarray
    w_start: np.ndarray
    w_end: np.ndarray

    @classmethod
    def build(cls, lam: np.ndarray, h: float) -> "ExpWeights":
        if h <= 0:
            raise ValueError(f"time step must be positive, got {h}")
        x = lam * h
        decay = np.exp(-x)
        phi1 = h * _phi1_over_x(x)
        w_start = h * _g_over_x2(x)
        return cls(h, decay, phi1, w_start, phi1 - w_start)


@dataclass
class TimeField:
    """Snapshots of a field on the uniform time grid ``t_i = t0 + i * dt``.

    ``data[i]`` is the physical field at ``times[i]``.  When a field is stored
    with a stride, ``dt`` is the spacing of the stored snapshots.
    """

    grid: TorusGrid
    dt: float
    data: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape[1:] != self.grid.shape:
            raise ValueError("snapshot shape does not match grid")

    @property
    def n_steps(self) -> int:
        return self.data.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.data.shape[0])

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i):
        return self.data[i]

    def subsample(self, every: int) -> "TimeField":
        if self.n_steps % every:
            raise ValueError("stride must divide the number of steps")
        return TimeField(self.grid, self.dt * every, self.data[::every].copy(), self.t0)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "TimeField":
        return TimeField(self.grid, self.dt, np.stack([fn(f) for f in self.data]), self.t0)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    @classmethod
    def zeros(cls, grid: TorusGrid, dt: float, n_steps: int) -> "TimeField":
        return cls(grid, dt, np.zeros((n_steps + 1,) + grid.shape))


def _check_same_grid(*fields: TimeField) -> None:
    g = fields[0].grid
    for f in fields[1:]:
        if (f.grid.d, f.grid.N) != (g.d, g.N):
            raise ValueError("time fields live on different grids")
        if len(f) != len(fields[0]) or not math.isclose(f.dt, fields[0].dt):
            raise ValueError("time fields live on different time grids")


class DuhamelAccumulator:
    """Running value of ``J f(t) = int_0^t P_{t-s} f(s) ds`` along a time stream.

    ``order=2`` integrates the piecewise-linear interpolant of the source
    exactly against the kernel; ``order=1`` uses the piecewise-constant
    (left endpoint) interpolant.
    """

    def __init__(self, grid: TorusGrid, dt: float, order: int = 2, mass: float = 1.0):
        if order not in (1, 2):
            raise ValueError("Duhamel interpolation order must be 1 or 2")
        self.grid = grid
        self.order = order
        self.w = ExpWeights.build(mass + grid.mu, dt)
        self.value = np.zeros(grid.spec_shape, dtype=complex)
        self._prev: np.ndarray | None = None

    def push(self, source_hat: np.ndarray) -> np.ndarray:
        """Feed the source spectrum at the next time; returns ``J f`` there."""
        if self._prev is None:
            self._prev = source_hat
            return self.value
        w = self.w
        if self.order == 2:
            self.value = w.decay * self.value + w.w_start * self._prev + w.w_end * source_hat
        else:
            self.value = w.decay * self.value + w.phi1 * self._prev
        self._prev = source_hat
        return self.value


def duhamel_time_field(source: TimeField, order: int = 2, mass: float = 1.0) -> TimeField:
    """``J f`` at every stored time of ``source`` (``J f(0) = 0``)."""
    grid = source.grid
    acc = DuhamelAccumulator(grid, source.dt, order, mass)
    out = np.empty_like(source.data)
    for i, f in enumerate(source.data):
        out[i] = grid.ifft(acc.push(grid.fft(f)))
    return TimeField(grid, source.dt, out, source.t0)


def duhamel_integral(source: TimeField, t_index: int, order: int = 2, mass: float = 1.0) -> np.ndarray:
    if not 0 <= t_index < len(source):
        raise IndexError(f"time index {t_index} outside the time grid")
    grid = source.grid
    acc = DuhamelAccumulator(grid, source.dt, order, mass)
    val = acc.value
    for f in source.data[: t_index + 1]:
        val = acc.push(grid.fft(f))
    return grid.ifft(val)


# -- exponential time stepping ---------------------------------------------------

Rhs = Callable[[np.ndarray, float], np.ndarray]
"""Right-hand side evaluator ``N(u_hat, theta) -> spectrum``.

``theta`` in ``[0, 1]`` is the position inside the current step at which the
time-dependent coefficients are to be taken (``1`` is the step end).
"""


@dataclass
class ETDStepper:
    """One step of the mild formulation ``u(t+h) = P_h u + int P_{h-s} N ds``.

    ``order=1`` freezes ``N`` at the step end (``u*`` is the new value, found by
    Picard iteration); ``order=2`` interpolates ``N`` linearly between the two
    step ends.  ``precondition`` is an optional pointwise field ``s(x) >= 0``
    approximating ``-dN/du``; it turns the plain Picard sweep into a damped
    one that stays contractive for stiff cubic reactions.  A step whose
    iteration does not contract is halved recursively, at most
    ``max_halvings`` times.
    """

    grid: TorusGrid
    dt: float
    order: int = 1
    tol: float = 1e-10
    max_iter: int = 8
    mass: float = 1.0
    retry_half: bool = True
    max_halvings: int = 6
    iterations: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        self._w = {}

    def weights(self, h: float) -> ExpWeights:
        if h not in self._w:
            self._w[h] = ExpWeights.build(self.mass + self.grid.mu, h)
        return self._w[h]

    def step(self, u_hat: np.ndarray, rhs: Rhs, precondition: Callable | None = None) -> np.ndarray:
        return self._advance(u_hat, rhs, 0.0, 1.0, precondition, 0)

    def _advance(self, u_hat, rhs, th0, th1, precondition, depth):
        try:
            return self._substep(u_hat, rhs, self.dt * (th1 - th0), th0, th1, precondition)
        except PicardError:
            if not self.retry_half or depth >= self.max_halvings:
                raise
        mid = 0.5 * (th0 + th1)
        half = self._advance(u_hat, rhs, th0, mid, precondition, depth + 1)
        return self._advance(half, rhs, mid, th1, precondition, depth + 1)

    def _substep(self, u_hat, rhs, h, th0, th1, precondition):
        g = self.grid
        w = self.weights(h)
        base = w.decay * u_hat
        n0 = None
        if self.order == 2:
            n0 = rhs(u_hat, th0)
            base = base + w.w_start * n0
            wend = w.w_end
        else:
            wend = w.phi1
        # predictor: explicit exponential Euler
        guess = w.decay * u_hat + w.phi1 * (n0 if n0 is not None else rhs(u_hat, th1))
        if not np.all(np.isfinite(guess)):
            raise BlowUpError("non-finite field in time step")
        u_phys = g.ifft(guess)
        hstar = float(wend.flat[0].real)
        for it in range(1, self.max_iter + 1):
            new_hat = base + wend * rhs(guess, th1)
            if not np.all(np.isfinite(new_hat)):
                raise BlowUpError("non-finite field in Picard iteration")
            new_phys = g.ifft(new_hat)
            err = float(np.max(np.abs(new_phys - u_phys)))
            scale = max(1.0, float(np.max(np.abs(new_phys))))
            if precondition is not None and err > self.tol * scale:
                s = precondition(u_phys, th1)
                new_phys = u_phys + (new_phys - u_phys) / (1.0 + hstar * s)
                new_hat = g.fft(new_phys)
            guess, u_phys = new_hat, new_phys
            if err <= self.tol * scale:
                self.iterations.append(it)
                return guess
        raise PicardError(f"Picard iteration did not contract in {self.max_iter} sweeps (h={h:g})")


def etd_step(grid: TorusGrid, u: np.ndarray, nonlinearity: Callable[[np.ndarray], np.ndarray],
             dt: float, order: int = 1, tol: float = 1e-10, max_iter: int = 8,
             mass: float = 1.0) -> np.ndarray:
    """Advance a physical field one step of ``L u = N(u)`` with autonomous ``N``.

    ``nonlinearity`` maps a physical field to a physical field.
    """
    stepper = ETDStepper(grid, dt, order=order, tol=tol, max_iter=max_iter, mass=mass)

    def rhs(u_hat, _theta):
        return grid.fft(nonlinearity(grid.ifft(u_hat)))

    return grid.ifft(stepper.step(grid.fft(np.asarray(u, dtype=float)), rhs))
