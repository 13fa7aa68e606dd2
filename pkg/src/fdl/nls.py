"""Mild solutions of the modulated-dispersion NLS.

Model: i d_t psi = (d_t X) Laplacian psi + lambda |psi|^(2 sigma) psi.
Its linear part is solved exactly by the propagator with tau = X_t - X_s, so
on the b-adic time grid of the curve every dispersion increment is the exact
value X(t_{j+1}) - X(t_j) = +-a^-n and X is never interpolated.

Two routes to the solution are provided:

* ``evolve``: Lie or Strang splitting between the exact nonlinear phase
  flow and the exact modulated dispersion step.
* ``picard_iterate``: fixed-point iteration of the discrete Duhamel map
  Gamma(psi)(t_j) = P_{0,t_j} [psi_0 - i lambda dt sum_{m<j} P_{0,t_m}^* N(psi(t_m))],
  evaluated with running prefix sums in the interaction picture.

With lambda > 0 the nonlinearity has the same sign as the dispersion where X
increases, i.e. it is focusing for the constant-dispersion control X_t = t.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import Divergence, NaNDetected, ValidationError
from .propagator import SpatialGrid, WaveField, gaussian, multiplier
from .selfaffine import SelfAffineCurve, build, identity_pattern

METHODS = ("lie", "strang", "picard")
BLOWUP_FACTOR = 10.0
ROUNDOFF_FLOOR = 1e-12


class Admissibility(NamedTuple):
    r: float
    ratio: float  # (2 sigma + 2) / r = d h sigma / 2
    supercritical: bool


def admissible_r(sigma: float, d: int, h: float) -> Admissibility:
    """Time exponent r making (r, 2 sigma + 2) h-admissible.

    >>> admissible_r(3, 1, 0.5).r
    10.666666666666666
    """
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    r = 2.0 * (2 * sigma + 2) / (d * h * sigma)
    ratio = (2 * sigma + 2) / r
    # the boundary sigma = 2/(d h) counts as critical despite rounding
    return Admissibility(r, ratio, ratio >= 1.0 - 1e-12)


@dataclass(frozen=True)
class InitialData:
    kind: str = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0

    def field(self, grid: SpatialGrid) -> WaveField:
        if self.kind != "gaussian":
            raise ValidationError(f"unknown initial data kind {self.kind!r}")
        return gaussian(grid, self.width, self.amplitude)


@dataclass(frozen=True)
class SolverConfig:
    sigma: float
    lam: float
    T: float
    time_level: int
    grid: SpatialGrid
    curve: SelfAffineCurve
    method: str = "strang"
    initial: InitialData = field(default_factory=InitialData)
    psi0: WaveField | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")
        if not 0 < self.T <= 1:
            raise ValidationError(f"T must lie in (0, 1], got {self.T}")
        if self.time_level > self.curve.level:
            raise ValidationError(
                f"time level {self.time_level} exceeds curve level {self.curve.level}"
            )
        steps = self.T * self.curve.b**self.time_level
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ValidationError(f"T={self.T} is not a multiple of b^-{self.time_level}")

    @property
    def steps(self) -> int:
        return int(round(self.T * self.curve.b**self.time_level))

    @property
    def dt(self) -> float:
        return float(self.curve.b) ** (-self.time_level)

    @property
    def admissibility(self) -> Admissibility:
        return admissible_r(self.sigma, self.grid.d, self.curve.order)

    @property
    def subcritical(self) -> bool:
        return self.sigma < 2.0 / (self.grid.d * self.curve.order)

    def initial_field(self) -> WaveField:
        return self.psi0 if self.psi0 is not None else self.initial.field(self.grid)

    def metadata(self) -> dict:
        adm = self.admissibility
        return {
            "sigma": self.sigma,
            "lambda": self.lam,
            "T": self.T,
            "time_level": self.time_level,
            "steps": self.steps,
            "method": self.method,
            "grid": self.grid.to_dict(),
            "curve": {"a": self.curve.a, "b": self.curve.b, "level": self.curve.level, "H": self.curve.order},
            "initial": asdict(self.initial) if self.psi0 is None else "field",
            "r": adm.r,
            "step_exponent": 1.0 - adm.ratio,
            "subcritical": self.subcritical,
            "nonlinearity": "focusing" if self.lam > 0 else ("defocusing" if self.lam < 0 else "linear"),
            "sign_convention": "i psi_t = X'(t) Laplacian psi + lambda |psi|^(2 sigma) psi",
        }


@dataclass
class RunTrace:
    step: list[int] = field(default_factory=list)
    t: list[float] = field(default_factory=list)
    mass: list[float] = field(default_factory=list)
    peak: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    initial_mass: float = 0.0
    initial_peak: float = 0.0
    initial_grad: float = 0.0
    mixed_norm_acc: float = 0.0
    r: float = 0.0
    failed: bool = False

    def append(self, step, t, mass, peak, grad):
        self.step.append(step)
        self.t.append(t)
        self.mass.append(mass)
        self.peak.append(peak)
        self.grad_norm.append(grad)

    @property
    def mass_drift(self) -> float:
        if not self.mass:
            return 0.0
        return float(np.max(np.abs(np.array(self.mass) - self.initial_mass)) / self.initial_mass)

    @property
    def peak_growth(self) -> float:
        return float(max(self.peak, default=self.initial_peak) / self.initial_peak)

    @property
    def grad_growth(self) -> float:
        return float(max(self.grad_norm, default=self.initial_grad) / self.initial_grad)

    @property
    def divergence_suspected(self) -> bool:
        return self.failed or self.peak_growth > BLOWUP_FACTOR or self.grad_growth > BLOWUP_FACTOR

    @property
    def mixed_norm(self) -> float:
        """Left-endpoint L^r([0, T]; L^(2 sigma + 2)) norm accumulated during the run."""
        return self.mixed_norm_acc ** (1.0 / self.r) if self.r else 0.0

    def rows(self):
        return zip(self.step, self.t, self.mass, self.peak, self.grad_norm)


def nonlinear_phase_step(field: WaveField, dt: float, sigma: float, lam: float) -> WaveField:
    """Exact flow of i psi_t = lambda |psi|^(2 sigma) psi over time dt (modulus is kept)."""
    if lam == 0 or dt == 0:
        return WaveField(field.grid, field.values.copy())
    return WaveField(field.grid, _phase(field.values, dt, sigma, lam))


def _phase(u, dt, sigma, lam):
    return u * np.exp(-1j * lam * dt * np.abs(u) ** (2 * sigma))


def _slice_norms(u, p, cell):
    return (np.sum(np.abs(u.reshape(u.shape[0], -1)) ** p, axis=1) * cell) ** (1.0 / p)


def _lp(u, p, cell):
    return float((np.sum(np.abs(u) ** p) * cell) ** (1.0 / p))


def evolve(config: SolverConfig) -> tuple[WaveField, RunTrace]:
    """Split-step evolution on the b-adic grid; returns the field at T and the trace.

    Raises :class:`NaNDetected` (with ``partial`` = the trace so far) when the
    field stops being finite.
    """
    if config.method == "picard":
        raise ValidationError("use picard_iterate for the picard method")
    grid = config.grid
    c = config.curve.coarsen(config.time_level)
    dt = config.dt
    sigma, lam = config.sigma, config.lam
    scale = float(c.scale)
    incs = np.diff(c.values[: config.steps + 1])
    mults = {int(k): multiplier(grid.k2, k / scale) for k in np.unique(incs)}
    p = 2 * sigma + 2
    adm = config.admissibility

    psi0 = config.initial_field()
    u = psi0.values.copy()
    trace = RunTrace(
        initial_mass=psi0.mass(), initial_peak=psi0.peak(), initial_grad=psi0.grad_norm(), r=adm.r
    )
    cell = grid.cell
    ntot = u.size
    strang = config.method == "strang"
    linear = lam == 0
    hat = hat0 = np.fft.fftn(u)
    level_value = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(config.steps):
            trace.mixed_norm_acc += _lp(u, p, cell) ** adm.r * dt
            if linear:
                # without the nonlinearity the increments compose exactly: keep the
                # integer running value X(t_j) a^n and apply one multiplier
                level_value += int(incs[j])
                hat = hat0 * multiplier(grid.k2, level_value / scale)
                u = np.fft.ifftn(hat)
            elif strang:
                u = _phase(u, 0.5 * dt, sigma, lam)
                hat = np.fft.fftn(u) * mults[int(incs[j])]
                u = _phase(np.fft.ifftn(hat), 0.5 * dt, sigma, lam)
                hat = np.fft.fftn(u)
            else:
                u = _phase(u, dt, sigma, lam)
                hat = np.fft.fftn(u) * mults[int(incs[j])]
                u = np.fft.ifftn(hat)
            a2 = np.abs(u) ** 2
            peak = float(np.sqrt(a2.max()))
            if not math.isfinite(peak):
                trace.failed = True
                raise NaNDetected(f"non-finite field at step {j + 1}", partial=trace)
            grad = float(np.sqrt(np.sum(grid.k2 * np.abs(hat) ** 2) * cell / ntot))
            trace.append(j + 1, (j + 1) * dt, float(a2.sum() * cell), peak, grad)
    return WaveField(grid, u), trace


@dataclass
class PicardResult:
    slices: np.ndarray  # psi(t_j), j = 0..J, last iterate
    distances: list[float]
    r: float
    p: float

    @property
    def ratios(self) -> list[float]:
        d = self.distances
        return [d[i + 1] / d[i] if d[i] > 0 else 0.0 for i in range(len(d) - 1)]

    def final(self, grid: SpatialGrid) -> WaveField:
        return WaveField(grid, self.slices[-1])


def picard_iterate(config: SolverConfig, iterations: int) -> PicardResult:
    """Iterate the discrete Duhamel map starting from psi^0(t_j) = P_{0,t_j} psi_0.

    ``distances[k]`` is the discrete L^r([0, T]; L^(2 sigma + 2)) distance
    between iterates k+1 and k.  Raises :class:`Divergence` when the distance
    grows three times in a row and :class:`NaNDetected` on non-finite values.
    """
    if iterations < 1:
        raise ValidationError("iterations must be >= 1")
    grid = config.grid
    c = config.curve.coarsen(config.time_level)
    J = config.steps
    dt = config.dt
    sigma, lam = config.sigma, config.lam
    taus = c.values[: J + 1] / float(c.scale)
    axes = tuple(range(1, grid.d + 1))
    forward = multiplier(grid.k2, taus.reshape((-1,) + (1,) * grid.d))
    hat0 = np.fft.fftn(config.initial_field().values)
    adm = config.admissibility
    r, p = adm.r, 2 * sigma + 2
    zero = np.zeros((J + 1,) + grid.shape, complex)

    def gamma(acc):
        return np.fft.ifftn(forward * (hat0 - 1j * lam * dt * acc), axes=axes)

    def duhamel(u):
        nl = np.abs(u) ** (2 * sigma) * u
        pulled = np.conj(forward) * np.fft.fftn(nl, axes=axes)
        acc = zero.copy()
        np.cumsum(pulled[:-1], axis=0, out=acc[1:])
        return acc

    u = gamma(zero)
    distances: list[float] = []
    grows = 0
    for _ in range(iterations):
        with np.errstate(over="ignore", invalid="ignore"):
            new = gamma(duhamel(u))
            if not np.all(np.isfinite(new)):
                raise NaNDetected("non-finite Picard iterate", partial=PicardResult(u, distances, r, p))
            norms = _slice_norms(new[:J] - u[:J], p, grid.cell)
            dist = float((np.sum(norms**r) * dt) ** (1.0 / r))
            size = float((np.sum(_slice_norms(new[:J], p, grid.cell) ** r) * dt) ** (1.0 / r))
        if not math.isfinite(dist):
            distances.append(dist)
            raise Divergence("Picard distance overflowed", partial=PicardResult(u, distances, r, p))
        # growth below the roundoff floor is noise, not divergence
        if distances and dist > distances[-1] and dist > ROUNDOFF_FLOOR * size:
            grows += 1
        else:
            grows = 0
        distances.append(dist)
        u = new
        if grows >= 3:
            raise Divergence("Picard distances grew three times in a row", partial=PicardResult(u, distances, r, p))
    return PicardResult(u, distances, r, p)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FDL_THREADS", "1")))
    except ValueError:
        return 1


def criticality_scan(base: SolverConfig, sigmas, control: str | None = "identity") -> list[dict]:
    """Run ``evolve`` for each sigma on the modulated curve and on the control curve.

    Rows come back in (sigma, curve) order regardless of execution order.
    Non-finite runs are recorded with status "nan" and the scan continues.
    """
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        raise ValidationError("empty sigma list")
    curves = [("modulated", base.curve)]
    if control == "identity":
        ctrl = build(identity_pattern(base.curve.b), base.time_level)
        curves.append(("identity", ctrl))
    elif control not in (None, "none"):
        raise ValidationError(f"unknown control {control!r}")
    method = base.method if base.method != "picard" else "strang"
    jobs = []
    for s in sigmas:
        for name, curve in curves:
            cfg = SolverConfig(
                s, base.lam, base.T, base.time_level, base.grid, curve, method, base.initial, base.psi0
            )
            jobs.append((s, name, cfg))

    def run(job):
        s, name, cfg = job
        row = {"sigma": s, "curve": name, "H": cfg.curve.order, "subcritical": cfg.subcritical}
        try:
            _, tr = evolve(cfg)
            status = "finished"
        except NaNDetected as exc:
            tr = exc.partial
            status = "nan"
        row.update(
            peak_growth=tr.peak_growth,
            grad_growth=tr.grad_growth,
            mass_drift=tr.mass_drift,
            divergence_suspected=tr.divergence_suspected,
            status=status,
        )
        return row

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(run, jobs))
