"""Discretized singular double integrals against a self-affine modulation.

On the level-n grid the curve is replaced by its piecewise-linear interpolant
and the cell integrals

    iota[k, l] = int_{cell k} int_{cell l} |X(t) - X(s)|^-alpha ds dt

are evaluated in closed form through the even antiderivative
``G(w) = |w|^(2-alpha) / ((1-alpha)(2-alpha))``: substituting u = X(t),
v = X(s) turns the cell integral into a four-term second difference of G
times the two reciprocal slopes.  Curve values are integers in units a^-n, so
the arguments of G are exact integers and exponentiation is the only
floating step.

For unit-increment curves iota[k, l] depends only on ``v_k - v_l`` and the two
orientations, so the double sum sum_kl f_k g_l iota[k, l] collapses to four
convolutions in value space (cost O(b^n + a^n log a^n) instead of b^(2n)).
General curves fall back to a block-streamed dense evaluation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, signal

from .errors import (
    AlphaOutOfRange,
    DegenerateNorm,
    ExponentMismatch,
    NonConvergence,
    ValidationError,
    ZeroIncrement,
)
from .selfaffine import SelfAffineCurve

QUAD_RTOL = 1e-8
# subinterval cap per adaptive pass (outer and each inner integral)
QUAD_LIMIT = 2000
DENSE_LIMIT = 2**24
BLOCK_CELLS = 2**22
FFT_THRESHOLD = 2048


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


@dataclass(frozen=True)
class HlsExponents:
    """Exponents tied by 2 - alpha*h = 1/p + 1/q."""

    alpha: float
    p: float
    q: float
    h: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not (1.0 < self.p < math.inf and 1.0 < self.q < math.inf):
            raise ExponentMismatch(f"p, q must lie in (1, inf), got p={self.p}, q={self.q}")
        gap = 2.0 - self.alpha * self.h - 1.0 / self.p - 1.0 / self.q
        if abs(gap) > 1e-12:
            raise ExponentMismatch(
                f"2 - alpha*h = {2 - self.alpha * self.h:.15g} but 1/p + 1/q = "
                f"{1 / self.p + 1 / self.q:.15g}"
            )

    @classmethod
    def matched(cls, alpha: float, h: float, p: float | None = None) -> "HlsExponents":
        """Solve the exponent relation for q (p = q when p is not given)."""
        _check_alpha(alpha)
        total = 2.0 - alpha * h
        if p is None:
            p = 2.0 / total
            return cls(alpha, p, p, h)
        rest = total - 1.0 / p
        if rest <= 0 or rest >= 1:
            raise ExponentMismatch(f"no q in (1, inf) with 1/p + 1/q = {total} for p={p}")
        return cls(alpha, p, 1.0 / rest, h)


@dataclass(frozen=True)
class StepFunction:
    """Left-endpoint samples f(j b^-n) of a step function on [0, 1]."""

    level: int
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)

    def norm(self, p: float, b: int) -> float:
        n = self.samples.size
        if n != b**self.level:
            raise ValidationError(f"{n} samples do not match level {self.level} in base {b}")
        return float((np.sum(np.abs(self.samples) ** p) / n) ** (1.0 / p))


def antiderivative(w, alpha: float):
    """G(w) = |w|^(2-alpha) / ((1-alpha)(2-alpha)), an even function with G'' = |w|^-alpha.

    Evaluated in extended precision: four-term second differences of G at
    large integer arguments lose about log10(w^2) digits.
    """
    w = np.abs(np.asarray(w, dtype=np.longdouble))
    a = np.longdouble(alpha)
    return w ** (2 - a) / ((1 - a) * (2 - a))


def _prefactor(curve: SelfAffineCurve, alpha: float) -> float:
    # zeta_k zeta_l a^-n(2-alpha) with zeta_m = b^-n a^n / dv_m, signs kept separately
    n = curve.level
    return float(curve.b) ** (-2 * n) * float(curve.a) ** (n * alpha)


def _second_difference(vk, vk1, vl, vl1, alpha):
    return (
        antiderivative(vk1 - vl, alpha)
        + antiderivative(vk - vl1, alpha)
        - antiderivative(vk1 - vl1, alpha)
        - antiderivative(vk - vl, alpha)
    )


def iota_block(curve: SelfAffineCurve, rows, cols, alpha: float) -> np.ndarray:
    """Closed-form iota for the outer product of cell indices ``rows`` x ``cols``."""
    alpha = _check_alpha(alpha)
    v = curve.values
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    dk = (v[rows + 1] - v[rows])[:, None]
    dl = (v[cols + 1] - v[cols])[None, :]
    if np.any(dk == 0) or np.any(dl == 0):
        raise ZeroIncrement("curve has a flat interval; the reciprocal slope is undefined")
    vk, vk1 = v[rows][:, None], v[rows + 1][:, None]
    vl, vl1 = v[cols][None, :], v[cols + 1][None, :]
    s = _second_difference(vk, vk1, vl, vl1, alpha)
    return (_prefactor(curve, alpha) * (s / (dk * dl))).astype(float)


def iota_closed_form(curve: SelfAffineCurve, k: int, l: int, alpha: float) -> float:
    """Exact cell integral iota[k, l] at the curve's level (eps = 0)."""
    n = curve.n_intervals
    if not (0 <= k < n and 0 <= l < n):
        raise ValidationError(f"cell ({k}, {l}) outside 0..{n - 1}")
    return float(iota_block(curve, [k], [l], alpha)[0, 0])


def iota_matrix(curve: SelfAffineCurve, alpha: float) -> np.ndarray:
    """Dense iota matrix; only for b^(2n) <= 2^24."""
    n = curve.n_intervals
    if n * n > DENSE_LIMIT:
        raise ValidationError(f"dense iota matrix of {n}x{n} exceeds {DENSE_LIMIT} entries")
    idx = np.arange(n)
    return iota_block(curve, idx, idx, alpha)


# ---------------------------------------------------------------- quadrature


def _inner(x, A, B, C, alpha, e):
    """int_0^1 (|A + B x - C y| + e)^-alpha dy, split at the crossing point."""
    ystar = (A + B * x) / C

    def kernel(y):
        return (abs(A + B * x - C * y) + e) ** (-alpha)

    if e > 0.0:
        pts = [ystar] if 0.0 < ystar < 1.0 else None
        return integrate.quad(kernel, 0.0, 1.0, points=pts, limit=QUAD_LIMIT, epsrel=1e-12, epsabs=0.0)[0]

    def smooth(y):
        # kernel / |y - ystar|^-alpha; the kernel is linear in y, so this is
        # |C|^-alpha, evaluated without forming 0/0 next to the crossing
        return abs(C) ** (-alpha)

    opts = dict(weight="alg", limit=QUAD_LIMIT, epsrel=1e-12, epsabs=0.0)
    if 0.0 < ystar < 1.0:
        left = integrate.quad(smooth, 0.0, ystar, wvar=(0.0, -alpha), **opts)[0]
        right = integrate.quad(smooth, ystar, 1.0, wvar=(-alpha, 0.0), **opts)[0]
        return left + right
    # crossing outside (or on the edge of) [0, 1]: difference of two
    # algebraic-weight integrals anchored at the crossing point
    if ystar <= 0.0:
        far = integrate.quad(smooth, ystar, 1.0, wvar=(-alpha, 0.0), **opts)[0]
        near = integrate.quad(smooth, ystar, 0.0, wvar=(-alpha, 0.0), **opts)[0] if ystar < 0.0 else 0.0
        return far - near
    far = integrate.quad(smooth, 0.0, ystar, wvar=(0.0, -alpha), **opts)[0]
    near = integrate.quad(smooth, 1.0, ystar, wvar=(0.0, -alpha), **opts)[0] if ystar > 1.0 else 0.0
    return far - near


@lru_cache(maxsize=65536)
def _unit_cell_integral(A: int, B: int, C: int, alpha: float, e: float, rtol: float) -> float:
    """int_0^1 int_0^1 (|A + B x - C y| + e)^-alpha dy dx by nested adaptive quadrature."""
    # breakpoints where the crossing line enters or leaves the square
    pts = sorted({x for x in ((-A) / B, (C - A) / B) if 0.0 < x < 1.0})
    val = err = None
    # ask for two extra digits first; fall back to the requested tolerance
    for target in (rtol * 1e-2, rtol):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(
                    _inner,
                    0.0,
                    1.0,
                    args=(A, B, C, alpha, e),
                    points=pts or None,
                    limit=QUAD_LIMIT,
                    epsrel=target,
                    epsabs=0.0,
                )
                break
            except integrate.IntegrationWarning as exc:
                failure = exc
    if val is None:
        raise NonConvergence(f"adaptive quadrature failed for cell (A={A}, B={B}, C={C}): {failure}")
    if not np.isfinite(val) or err > rtol * abs(val):
        raise NonConvergence(f"quadrature error {err:.3g} above tolerance for value {val:.6g}")
    return val


def iota_quadrature(
    curve: SelfAffineCurve, k: int, l: int, alpha: float, eps: float = 0.0, rtol: float = QUAD_RTOL
) -> float:
    """Regularized cell integral with kernel (|X(t) - X(s)| + eps)^-alpha by quadrature.

    Independent of the closed form: the cell is mapped to the unit square and
    integrated by nested adaptive Gauss-Kronrod rules, with the singular line
    handled by algebraic-weight rules (eps = 0) or explicit breakpoints.
    """
    alpha = _check_alpha(alpha)
    if eps < 0:
        raise ValidationError("eps must be >= 0")
    v = curve.values
    B = int(v[k + 1] - v[k])
    C = int(v[l + 1] - v[l])
    if B == 0 or C == 0:
        raise ZeroIncrement("curve has a flat interval")
    A = int(v[k] - v[l])
    n = curve.level
    scale = float(curve.a) ** n
    h = float(curve.b) ** (-n)
    # |X_t - X_s| + eps = a^-n (|A + B x - C y| + eps a^n)
    J = _unit_cell_integral(A, B, C, alpha, float(eps) * scale, rtol)
    return h * h * scale**alpha * J


# ---------------------------------------------------------------- double sums


def _is_unit(curve: SelfAffineCurve) -> bool:
    return bool(np.all(np.abs(curve.increments) == 1))


def _value_kernels(curve: SelfAffineCurve, alpha: float) -> dict:
    """K[(s, s')][d + A] = iota for cells with v_k - v_l = d, orientations s, s'."""
    A = curve.scale
    d = np.arange(-A, A + 1, dtype=np.int64)
    pref = _prefactor(curve, alpha)
    out = {}
    for s in (1, -1):
        for sp in (1, -1):
            S = (
                antiderivative(d + s, alpha)
                + antiderivative(d - sp, alpha)
                - antiderivative(d + s - sp, alpha)
                - antiderivative(d, alpha)
            )
            out[(s, sp)] = (pref * (s * sp * S)).astype(float)
    return out


def _histograms(curve: SelfAffineCurve, f: np.ndarray) -> dict:
    """Bin f (shape (..., b^n)) by left value v_k and orientation."""
    v = curve.values[:-1]
    sgn = curve.orientations
    A = curve.scale
    f = np.atleast_2d(f)
    out = {}
    for s in (1, -1):
        mask = sgn == s
        h = np.zeros((f.shape[0], A + 1))
        if mask.any():
            for i in range(f.shape[0]):
                h[i] = np.bincount(v[mask], weights=f[i, mask], minlength=A + 1)
        out[s] = h
    return out


def _correlate(K: np.ndarray, G: np.ndarray) -> np.ndarray:
    """H[i, v] = sum_v' K[v - v' + A] G[i, v'] for a batch of rows."""
    A = G.shape[1] - 1
    if A + 1 > FFT_THRESHOLD:
        full = signal.fftconvolve(G, K[None, :], axes=1)
    else:
        full = np.stack([np.convolve(row, K) for row in G])
    return full[:, A : 2 * A + 1]


def _bilinear_value_space(curve, F, Gm, alpha):
    K = _value_kernels(curve, alpha)
    hf = _histograms(curve, F)
    hg = _histograms(curve, Gm)
    total = np.zeros(hf[1].shape[0])
    for (s, sp), ker in K.items():
        if not hf[s].any() or not hg[sp].any():
            continue
        H = _correlate(ker, hg[sp])
        total += np.sum(hf[s] * H, axis=1)
    return total


def _bilinear_dense(curve, F, Gm, alpha):
    n = curve.n_intervals
    rows_per_block = max(1, BLOCK_CELLS // n)
    F = np.atleast_2d(F)
    Gm = np.atleast_2d(Gm)
    parts = []
    cols = np.arange(n)
    for start in range(0, n, rows_per_block):
        rows = np.arange(start, min(n, start + rows_per_block))
        block = iota_block(curve, rows, cols, alpha)
        parts.append(np.sum(F[:, rows] * (Gm @ block.T), axis=1))
    return np.sum(np.stack(parts), axis=0)


def bilinear(curve: SelfAffineCurve, F, Gm, alpha: float, method: str = "auto") -> np.ndarray:
    """Batched sum_kl F[i, k] Gm[i, l] iota[k, l] at the curve's level."""
    alpha = _check_alpha(alpha)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Gm = np.atleast_2d(np.asarray(Gm, dtype=float))
    if F.shape != Gm.shape or F.shape[1] != curve.n_intervals:
        raise ValidationError("step functions must match the curve's level")
    if np.any(curve.increments == 0):
        raise ZeroIncrement("curve has a flat interval")
    if method == "auto":
        method = "value" if _is_unit(curve) else "dense"
    if method == "value":
        return _bilinear_value_space(curve, F, Gm, alpha)
    return _bilinear_dense(curve, F, Gm, alpha)


def hls_sum(f: StepFunction, g: StepFunction, curve: SelfAffineCurve, alpha: float) -> float:
    """sum_jk f_j g_k iota[j, k] on the level of f and g."""
    if f.level != g.level:
        raise ValidationError("f and g must share a level")
    if np.any(f.samples < 0) or np.any(g.samples < 0):
        raise ValidationError("hls sums take nonnegative step functions")
    c = curve.coarsen(f.level)
    return float(bilinear(c, f.samples, g.samples, alpha)[0])


def _check_order(curve: SelfAffineCurve, exponents: HlsExponents, strict: bool) -> None:
    if strict and abs(curve.order - exponents.h) > 1e-12:
        raise ExponentMismatch(f"exponents built for h={exponents.h}, curve has order {curve.order}")


def hls_ratio(
    f: StepFunction, g: StepFunction, curve: SelfAffineCurve, exponents: HlsExponents, strict: bool = True
) -> float:
    """hls_sum / (||f||_p ||g||_q); 0 when both vanish."""
    _check_order(curve, exponents, strict)
    total = hls_sum(f, g, curve, exponents.alpha)
    denom = f.norm(exponents.p, curve.b) * g.norm(exponents.q, curve.b)
    if denom == 0.0:
        if total != 0.0:
            raise DegenerateNorm("zero norm with nonzero sum")
        return 0.0
    return total / denom


def jensen_bound(f: StepFunction, g: StepFunction, curve: SelfAffineCurve, exponents: HlsExponents) -> float:
    """max iota * b^(2n) * ||f||_p ||g||_q, an upper bound for hls_sum.

    Follows from bounding every cell by the largest one and using
    mean(f) <= ||f||_p on the probability space [0, 1].
    """
    c = curve.coarsen(f.level)
    top = max_iota(c, exponents.alpha)
    return top * float(c.n_intervals) ** 2 * f.norm(exponents.p, c.b) * g.norm(exponents.q, c.b)


def max_iota(curve: SelfAffineCurve, alpha: float) -> float:
    """Largest iota[k, l] over all cells at the curve's level."""
    alpha = _check_alpha(alpha)
    if _is_unit(curve):
        K = _value_kernels(curve, alpha)
        A = curve.scale
        ones = np.ones((1, curve.n_intervals))
        hist = _histograms(curve, ones)
        best = 0.0
        for (s, sp), ker in K.items():
            if not hist[s].any() or not hist[sp].any():
                continue
            # differences d = v_k - v_l that actually occur, indexed by d + A
            hs = (hist[s][0] > 0).astype(float)
            hp = (hist[sp][0] > 0).astype(float)
            if A + 1 > FFT_THRESHOLD:
                present = signal.fftconvolve(hs, hp[::-1]) > 0.5
            else:
                present = np.convolve(hs, hp[::-1]) > 0.5
            best = max(best, float(ker[present].max()))
        return best
    n = curve.n_intervals
    rows_per_block = max(1, BLOCK_CELLS // n)
    cols = np.arange(n)
    best = 0.0
    for start in range(0, n, rows_per_block):
        rows = np.arange(start, min(n, start + rows_per_block))
        best = max(best, float(iota_block(curve, rows, cols, alpha).max()))
    return best


# ---------------------------------------------------------------- experiments


def scaling_check(curve: SelfAffineCurve, alpha: float, levels) -> list[dict]:
    """max iota * b^(n(2 - H alpha)) per level (bounded in n when X is self-affine)."""
    alpha = _check_alpha(alpha)
    rows = []
    for n in levels:
        c = curve.coarsen(n)
        top = max_iota(c, alpha)
        rows.append(
            {
                "level": n,
                "b": c.b,
                "max_iota": top,
                "max_iota_normalized": top * float(c.b) ** (n * (2.0 - c.order * alpha)),
            }
        )
    return rows


def scaling_slope(rows: list[dict]) -> float:
    """Log-log slope of the normalized maxima against the grid scale b^n."""
    x = np.array([r["level"] * math.log(r.get("b", math.e)) for r in rows])
    y = np.log([r["max_iota_normalized"] for r in rows])
    return float(np.polyfit(x, y, 1)[0])


def trial_generator(seed: int, *counters: int) -> np.random.Generator:
    """Counter-based stream: the same (seed, counters) always gives the same draws."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, counters)])))


def _candidates(n: int, b: int, exponents: HlsExponents):
    """Structured (name, f, g) candidates at level n."""
    N = b**n
    t = np.arange(N) / N
    dt = 1.0 / N
    yield "ones", np.ones(N), np.ones(N)
    for m in range(1, n + 1):
        width = b ** (n - m)
        for i in sorted({0, b**m // 2, b**m - 1}):
            f = np.zeros(N)
            f[i * width : (i + 1) * width] = 1.0
            yield f"indicator:{m}:{i}", f, f
    # truncated power profiles, the near-extremizers for p, q close to 1
    for where, centre in (("left", 0.0), ("mid", 0.5), ("right", 1.0)):
        dist = np.abs(t + 0.5 * dt - centre) + 0.5 * dt
        yield f"power:{where}", dist ** (-1.0 / exponents.p), dist ** (-1.0 / exponents.q)


@dataclass
class SearchLevel:
    level: int
    max_ratio: float
    argmax_id: str
    ones_ratio: float
    max_iota_normalized: float


@dataclass
class SearchReport:
    exponents: HlsExponents
    seed: int
    trials: int
    levels: list[SearchLevel] = field(default_factory=list)
    best_f: np.ndarray | None = None
    best_g: np.ndarray | None = None

    @property
    def max_ratio(self) -> float:
        return max(r.max_ratio for r in self.levels)

    def ratios(self) -> np.ndarray:
        return np.array([r.max_ratio for r in self.levels])


def worst_case_search(
    curve: SelfAffineCurve,
    exponents: HlsExponents,
    trials: int,
    seed: int,
    levels=None,
    strict: bool = True,
) -> SearchReport:
    """Empirical modified-HLS constant: sup of hls_ratio over candidate pairs per level.

    Candidates are f = g = 1, indicators of b-adic intervals, truncated power
    profiles and ``trials`` random pairs with i.i.d. uniform samples drawn
    from a counter-based generator keyed by (seed, level, trial).
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    _check_order(curve, exponents, strict)
    if levels is None:
        levels = range(1, curve.level + 1)
    report = SearchReport(exponents, seed, trials)
    best_overall = -1.0
    for n in levels:
        c = curve.coarsen(n)
        N = c.n_intervals
        names, Fs, Gs = [], [], []
        for name, f, g in _candidates(n, c.b, exponents):
            names.append(name)
            Fs.append(f)
            Gs.append(g)
        for i in range(trials):
            rng = trial_generator(seed, n, i)
            names.append(f"random:{i}")
            Fs.append(rng.random(N))
            Gs.append(rng.random(N))
        F = np.array(Fs)
        Gm = np.array(Gs)
        sums = bilinear(c, F, Gm, exponents.alpha)
        nf = np.mean(np.abs(F) ** exponents.p, axis=1) ** (1.0 / exponents.p)
        ng = np.mean(np.abs(Gm) ** exponents.q, axis=1) ** (1.0 / exponents.q)
        ratios = sums / (nf * ng)
        i = int(np.argmax(ratios))
        top = max_iota(c, exponents.alpha)
        report.levels.append(
            SearchLevel(
                level=n,
                max_ratio=float(ratios[i]),
                argmax_id=names[i],
                ones_ratio=float(ratios[0]),
                max_iota_normalized=top * float(c.b) ** (n * (2.0 - c.order * exponents.alpha)),
            )
        )
        if ratios[i] > best_overall:
            best_overall = float(ratios[i])
            report.best_f, report.best_g = F[i], Gm[i]
    return report
