"""Spectral propagator of the modulated linear Schroedinger flow.

The propagator from s to t only depends on tau = X_t - X_s and acts as the
Fourier multiplier exp(i tau |xi|^2).  The whole line is truncated to a
periodic box [-L/2, L/2)^d, where the discrete multiplier is exactly unitary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NotAdmissible, NotContained, TauZero, ValidationError
from .selfaffine import SelfAffineCurve


@dataclass(frozen=True)
class SpatialGrid:
    d: int
    nx: int
    length: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValidationError(f"dimension must be 1 or 2, got {self.d}")
        if self.nx < 8 or self.nx & (self.nx - 1):
            raise ValidationError(f"points per axis must be a power of two >= 8, got {self.nx}")
        if not self.length > 0:
            raise ValidationError("domain length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.nx

    @property
    def cell(self) -> float:
        """Volume element dx^d."""
        return self.dx**self.d

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.length + self.dx * np.arange(self.nx)

    @cached_property
    def xi(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x] * self.d), indexing="ij"))

    @cached_property
    def r2(self) -> np.ndarray:
        return sum(c**2 for c in self.coords)

    @cached_property
    def k2(self) -> np.ndarray:
        """|xi|^2 on the FFT frequency grid."""
        ks = np.meshgrid(*([self.xi] * self.d), indexing="ij")
        return sum(k**2 for k in ks)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nx,) * self.d

    def to_dict(self) -> dict:
        return {"d": self.d, "Nx": self.nx, "L": self.length}


@dataclass(frozen=True, eq=False)
class WaveField:
    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValidationError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    def lp(self, p: float) -> float:
        """Riemann-sum L^p norm (p = inf gives the grid max)."""
        a = np.abs(self.values)
        if math.isinf(p):
            return float(a.max())
        return float((np.sum(a**p) * self.grid.cell) ** (1.0 / p))

    def l2(self) -> float:
        return self.lp(2.0)

    def l2_parseval(self) -> float:
        hat = np.fft.fftn(self.values)
        return float(np.sqrt(np.sum(np.abs(hat) ** 2) * self.grid.cell / hat.size))

    def mass(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.cell)

    def peak(self) -> float:
        return float(np.abs(self.values).max())

    def grad_norm(self) -> float:
        """Spectral ||grad psi||_2."""
        hat = np.fft.fftn(self.values)
        return float(np.sqrt(np.sum(self.grid.k2 * np.abs(hat) ** 2) * self.grid.cell / hat.size))

    def inner_mass_fraction(self) -> float:
        """Fraction of the mass inside the central half of the box (per axis)."""
        inner = np.ones(self.grid.shape, dtype=bool)
        for c in self.grid.coords:
            inner &= np.abs(c) < 0.25 * self.grid.length
        w = np.abs(self.values) ** 2
        total = w.sum()
        return float(w[inner].sum() / total) if total else 1.0


_TWO_PI = 2 * np.arccos(np.longdouble(-1))


def multiplier(k2: np.ndarray, tau) -> np.ndarray:
    """exp(i tau |xi|^2), with the phase reduced mod 2 pi in extended precision.

    ``tau`` may be an array broadcasting against ``k2``.  The reduction keeps
    the symbol accurate to roundoff even where tau |xi|^2 is in the thousands,
    so composition and inversion hold to ~1e-15 instead of eps * tau |xi|^2.
    """
    phase = np.asarray(tau, dtype=np.longdouble) * np.asarray(k2, dtype=np.longdouble)
    phase = np.fmod(phase, _TWO_PI).astype(float)
    return np.exp(1j * phase)


def gaussian(grid: SpatialGrid, width: float = 1.0, amplitude: complex = 1.0) -> WaveField:
    """amplitude * exp(-|x|^2 / (2 width^2))."""
    return WaveField(grid, amplitude * np.exp(-grid.r2 / (2.0 * width**2)))


def apply_propagator(field: WaveField, tau: float) -> WaveField:
    """Multiply the spectrum by exp(i tau |xi|^2)."""
    if tau == 0:
        return WaveField(field.grid, field.values.copy())
    hat = np.fft.fftn(field.values)
    return WaveField(field.grid, np.fft.ifftn(multiplier(field.grid.k2, tau) * hat))


def compose_check(field: WaveField, tau1: float, tau2: float) -> float:
    """Largest of ||P(P f, tau1), tau2) - P(f, tau1 + tau2)||_2 and ||P(P(f, tau1), -tau1) - f||_2."""
    two = apply_propagator(apply_propagator(field, tau1), tau2)
    one = apply_propagator(field, tau1 + tau2)
    back = apply_propagator(apply_propagator(field, tau1), -tau1)
    dev = WaveField(field.grid, two.values - one.values).l2()
    inv = WaveField(field.grid, back.values - field.values).l2()
    return max(dev, inv)


CONTAINMENT = 1.0 - 1e-10


def dispersive_ratio(field: WaveField, tau: float) -> float:
    """||P_tau f||_inf |tau|^(d/2) / ||f||_1; the whole-line kernel bounds it by (4 pi)^(-d/2)."""
    if tau == 0:
        raise TauZero("dispersive ratio needs tau != 0")
    if field.inner_mass_fraction() < CONTAINMENT:
        raise NotContained("less than 1 - 1e-10 of the mass lies in the inner half of the box")
    out = apply_propagator(field, tau)
    return out.lp(math.inf) * abs(tau) ** (field.grid.d / 2) / field.lp(1.0)


@dataclass(frozen=True)
class AdmissiblePair:
    """(q, p) with 2/q = d h (1/2 - 1/p)."""

    q: float
    p: float
    h: float
    d: int = 1

    def __post_init__(self):
        if not (2 < self.q < math.inf and 2 < self.p < math.inf):
            raise NotAdmissible(f"need q, p in (2, inf), got q={self.q}, p={self.p}")
        if not 0 < self.alpha < 1:
            raise NotAdmissible(f"d(1/2 - 1/p) = {self.alpha} is outside (0, 1)")
        gap = 2.0 / self.q - self.d * self.h * (0.5 - 1.0 / self.p)
        if abs(gap) > 1e-12:
            raise NotAdmissible(
                f"(q={self.q}, p={self.p}) is not {self.h}-admissible in d={self.d}"
            )

    @property
    def alpha(self) -> float:
        return self.d * (0.5 - 1.0 / self.p)

    @classmethod
    def from_p(cls, p: float, h: float, d: int = 1) -> "AdmissiblePair":
        alpha = d * (0.5 - 1.0 / p)
        if alpha <= 0:
            raise NotAdmissible(f"p={p} gives no admissible q")
        return cls(2.0 / (h * alpha), p, h, d)

    @property
    def dual(self) -> tuple[float, float]:
        """Hoelder conjugates (q', p')."""
        return self.q / (self.q - 1), self.p / (self.p - 1)


def _time_grid(curve: SelfAffineCurve, n: int, T: float):
    if n > curve.level:
        raise ValidationError(f"time level {n} exceeds curve level {curve.level}")
    c = curve.coarsen(n)
    steps = T * c.n_intervals
    J = int(round(steps))
    if J < 1 or abs(steps - J) > 1e-9:
        raise ValidationError(f"T={T} is not on the level-{n} grid of base {c.b}")
    return c, J


def _check_pair(pair: AdmissiblePair, curve: SelfAffineCurve, grid: SpatialGrid, strict: bool = True) -> None:
    if strict and abs(pair.h - curve.order) > 1e-12:
        raise NotAdmissible(f"pair is {pair.h}-admissible but the curve has order {curve.order}")
    if pair.d != grid.d:
        raise NotAdmissible("pair dimension does not match the grid")


def _propagated_norms(f: WaveField, taus: np.ndarray, p: float) -> np.ndarray:
    """||P_tau f||_p for each tau, one FFT pair per tau."""
    hat = np.fft.fftn(f.values)
    out = np.empty(taus.size)
    for i, tau in enumerate(taus):
        u = np.fft.ifftn(multiplier(f.grid.k2, tau) * hat)
        out[i] = (np.sum(np.abs(u) ** p) * f.grid.cell) ** (1.0 / p)
    return out


def strichartz_norm(
    f: WaveField,
    pair: AdmissiblePair,
    curve: SelfAffineCurve,
    n: int,
    T: float = 1.0,
    strict: bool = True,
) -> tuple[float, float]:
    """Left-endpoint L^q([0, T]; L^p) norm of t -> P_{0,t} f and its ratio to ||f||_2.

    Times are t_j = j b^-n with exact curve values; slices sharing the same
    value X(t_j) share one propagator application.  ``strict=False`` allows a
    pair built for another order (used to show what goes wrong then).
    """
    _check_pair(pair, curve, f.grid, strict)
    c, J = _time_grid(curve, n, T)
    nums = c.values[:J]
    uniq, counts = np.unique(nums, return_counts=True)
    norms = _propagated_norms(f, uniq / float(c.scale), pair.p)
    dt = 1.0 / c.n_intervals
    total = float((np.sum(counts * norms**pair.q) * dt) ** (1.0 / pair.q))
    l2 = f.l2()
    return total, (total / l2 if l2 > 0 else 0.0)


def _mixed(norms: np.ndarray, q: float, dt: float) -> float:
    return float((np.sum(norms**q) * dt) ** (1.0 / q))


def inhomogeneous_strichartz_norm(
    g,
    pair: AdmissiblePair,
    retarded: bool,
    curve: SelfAffineCurve,
    n: int,
    dual_pair: AdmissiblePair | None = None,
    T: float | None = None,
) -> tuple[float, float]:
    """Mixed norm of the discrete Duhamel sum and its ratio to ||g||_{L^r' L^l'}.

    ``g`` is a sequence of fields (or an array of shape (J, *grid.shape)) at
    t_0..t_{J-1}.  The sum runs over s_m < t_j (retarded) or over all m, using
    P_{t_m, t_j} = P_{0, t_j} P_{0, t_m}^* so the cost is O(J) transforms.
    """
    slices = [s.values if isinstance(s, WaveField) else np.asarray(s) for s in g]
    grid = g[0].grid if isinstance(g[0], WaveField) else None
    if grid is None:
        raise ValidationError("g must be a sequence of WaveField slices")
    _check_pair(pair, curve, grid)
    dual_pair = dual_pair or pair
    _check_pair(dual_pair, curve, grid)
    J = len(slices)
    T = J / curve.b**n if T is None else T
    c, J2 = _time_grid(curve, n, T)
    if J2 != J:
        raise ValidationError(f"{J} slices do not match T={T} at level {n}")
    dt = 1.0 / c.n_intervals
    taus = c.values[:J] / float(c.scale)
    k2 = grid.k2
    # interaction picture: P_{0,t_m}^* g(t_m) in Fourier space
    pulled = np.array([multiplier(k2, -taus[m]) * np.fft.fftn(slices[m]) for m in range(J)])
    if retarded:
        acc = np.concatenate([np.zeros((1,) + grid.shape, complex), np.cumsum(pulled, axis=0)[:-1]])
    else:
        acc = np.broadcast_to(pulled.sum(axis=0), pulled.shape)
    norms = np.empty(J)
    for j in range(J):
        u = np.fft.ifftn(multiplier(k2, taus[j]) * acc[j]) * dt
        norms[j] = (np.sum(np.abs(u) ** pair.p) * grid.cell) ** (1.0 / pair.p)
    total = _mixed(norms, pair.q, dt)
    rq, lp = dual_pair.dual
    gn = np.array([(np.sum(np.abs(s) ** lp) * grid.cell) ** (1.0 / lp) for s in slices])
    denom = _mixed(gn, rq, dt)
    return total, (total / denom if denom > 0 else 0.0)
