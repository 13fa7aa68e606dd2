"""Exact construction of self-affine functions on the b-adic grid.

A pattern ``(a, b, m_steps, d_steps)`` defines two piecewise-linear templates
M (increasing, 0 -> 1) and D (decreasing, 1 -> 0) made of ``b`` steps of
height ``1/a``.  Iterating the substitution "up interval -> scaled M,
down interval -> scaled D" yields the curves X^(n).  At level ``n`` every
value X(j b^-n) is an integer multiple of a^-n, so curves are stored as
int64 numerators and every downstream computation can start from exact
differences.

The order of the limit function is ``H = ln(a) / ln(b)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    BaseOrder,
    IndexOutOfRange,
    Overflow,
    ParityImpossible,
    RangeViolation,
    SumMismatch,
    ValidationError,
)

# a**n and b**n must stay below this bound
INT_LIMIT = 2**62


def parse_steps(steps) -> tuple[int, ...]:
    """Accept ``"++-+"`` or an iterable of +-1 and return a tuple of ints."""
    if isinstance(steps, str):
        table = {"+": 1, "-": -1}
        try:
            return tuple(table[c] for c in steps.strip())
        except KeyError as exc:
            raise ValidationError(f"bad step character {exc.args[0]!r} in {steps!r}") from None
    out = tuple(int(s) for s in steps)
    if any(s not in (-1, 1) for s in out):
        raise ValidationError(f"steps must be +1 or -1, got {list(out)}")
    return out


def format_steps(steps: Sequence[int]) -> str:
    return "".join("+" if s > 0 else "-" for s in steps)


@dataclass(frozen=True)
class SelfAffinePattern:
    """Generator data of a self-affine function.

    Use :func:`validate_pattern` to construct one; the constructor does not
    re-check the conditions.
    """

    a: int
    b: int
    m_steps: tuple[int, ...]
    d_steps: tuple[int, ...]

    @property
    def order(self) -> float:
        return math.log(self.a) / math.log(self.b)

    H = order

    @property
    def m_partial(self) -> np.ndarray:
        """a*M(i/b) for i = 0..b."""
        return np.concatenate([[0], np.cumsum(self.m_steps)]).astype(np.int64)

    @property
    def d_partial(self) -> np.ndarray:
        """a*D(i/b) for i = 0..b."""
        return (self.a + np.concatenate([[0], np.cumsum(self.d_steps)])).astype(np.int64)

    @property
    def is_identity(self) -> bool:
        return self.a == self.b

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "m_steps": list(self.m_steps),
            "d_steps": list(self.d_steps),
        }


def validate_pattern(a: int, b: int, m_steps, d_steps) -> SelfAffinePattern:
    """Check the template conditions and return a :class:`SelfAffinePattern`.

    Raises
    ------
    BaseOrder
        ``a < 2`` or ``a > b``.
    ParityImpossible
        ``b - a`` is odd: no sequence of b unit steps can sum to a.
    RangeViolation
        A partial sum leaves ``[0, a]``.
    SumMismatch
        Step counts or sums are wrong (M must rise by a, D must fall by a).
    """
    a, b = int(a), int(b)
    if a < 2 or a > b:
        raise BaseOrder(f"need 2 <= a <= b, got a={a}, b={b}")
    if (b - a) % 2:
        raise ParityImpossible(f"b - a = {b - a} is odd; b unit steps cannot sum to a={a}")
    m = parse_steps(m_steps)
    d = parse_steps(d_steps)
    if len(m) != b or len(d) != b:
        raise SumMismatch(f"need exactly b={b} steps, got {len(m)} (M) and {len(d)} (D)")
    pm = np.cumsum(m)
    pd = a + np.cumsum(d)
    if pm.min() < 0 or pm.max() > a:
        raise RangeViolation(f"M partial sums {pm.tolist()} leave [0, {a}]")
    if pd.min() < 0 or pd.max() > a:
        raise RangeViolation(f"D partial sums {pd.tolist()} leave [0, {a}]")
    if sum(m) != a:
        raise SumMismatch(f"M steps sum to {sum(m)}, expected +{a}")
    if sum(d) != -a:
        raise SumMismatch(f"D steps sum to {sum(d)}, expected -{a}")
    return SelfAffinePattern(a, b, m, d)


def identity_pattern(b: int = 4) -> SelfAffinePattern:
    """The a = b pattern, whose limit is X_t = t."""
    return validate_pattern(b, b, [1] * b, [-1] * b)


DEFAULT_PATTERN = validate_pattern(2, 4, [1, 1, -1, 1], [-1, -1, 1, -1])


@dataclass(frozen=True, eq=False)
class SelfAffineCurve:
    """Level-n realization of X: ``X(j b^-n) = values[j] * a^-n``.

    ``pattern`` is None for hand-made curves built with :meth:`from_values`.
    """

    a: int
    b: int
    level: int
    values: np.ndarray
    pattern: SelfAffinePattern | None = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64)
        if v.ndim != 1 or v.size != self.b**self.level + 1:
            raise ValidationError(
                f"expected {self.b ** self.level + 1} values at level {self.level}, got {v.size}"
            )
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, a: int, b: int, values, level: int | None = None) -> "SelfAffineCurve":
        values = np.asarray(values, dtype=np.int64)
        if level is None:
            level = round(math.log(values.size - 1, b))
        return cls(int(a), int(b), int(level), values, None)

    @property
    def order(self) -> float:
        return math.log(self.a) / math.log(self.b)

    H = order

    @property
    def n_intervals(self) -> int:
        return self.b**self.level

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def orientations(self) -> np.ndarray:
        """+1 on up intervals, -1 on down intervals (0 only for degenerate curves)."""
        return np.sign(self.increments)

    @property
    def scale(self) -> int:
        """Denominator a**level of the stored numerators."""
        return self.a**self.level

    def as_float(self) -> np.ndarray:
        return self.values / float(self.scale)

    def times(self) -> np.ndarray:
        return np.arange(self.n_intervals + 1) / float(self.n_intervals)

    def coarsen(self, level: int) -> "SelfAffineCurve":
        """Restrict to the level-``level`` grid (exact for pattern-built curves)."""
        if level == self.level:
            return self
        if not 0 <= level <= self.level:
            raise IndexOutOfRange(f"level {level} outside 0..{self.level}")
        stride = self.b ** (self.level - level)
        div = self.a ** (self.level - level)
        coarse = self.values[::stride]
        if np.any(coarse % div):
            raise ValidationError(f"curve values are not exact at level {level}")
        return SelfAffineCurve(self.a, self.b, level, coarse // div, self.pattern)

    def to_dict(self) -> dict:
        out = {
            "a": self.a,
            "b": self.b,
            "level": self.level,
            "m_steps": list(self.pattern.m_steps) if self.pattern else None,
            "d_steps": list(self.pattern.d_steps) if self.pattern else None,
            "values": self.values.tolist(),
            "orientations": self.orientations.tolist(),
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SelfAffineCurve":
        pattern = None
        if data.get("m_steps") is not None:
            pattern = validate_pattern(data["a"], data["b"], data["m_steps"], data["d_steps"])
        curve = cls(int(data["a"]), int(data["b"]), int(data["level"]), data["values"], pattern)
        if "orientations" in data and list(data["orientations"]) != curve.orientations.tolist():
            raise ValidationError("orientations do not match values")
        return curve

    def __eq__(self, other):
        if not isinstance(other, SelfAffineCurve):
            return NotImplemented
        return (
            (self.a, self.b, self.level) == (other.a, other.b, other.level)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _check_size(a: int, b: int, level: int) -> None:
    if a**level >= INT_LIMIT or b**level >= INT_LIMIT:
        raise Overflow(f"a^n or b^n exceeds 2^62 at level {level} (a={a}, b={b})")


def _refine_values(values: np.ndarray, pattern: SelfAffinePattern) -> np.ndarray:
    """One substitution step applied to an arbitrary unit-increment polyline."""
    a, b = pattern.a, pattern.b
    base = a * values[:-1]
    up = base[:, None] + pattern.m_partial[None, :b]
    down = base[:, None] - a + pattern.d_partial[None, :b]
    inc = np.diff(values)
    fine = np.where(inc[:, None] > 0, up, down).ravel()
    return np.append(fine, a * values[-1])


def refine(curve: SelfAffineCurve) -> SelfAffineCurve:
    """Return the level n+1 curve; coarse points are kept (v'[j b] = a v[j])."""
    if curve.pattern is None:
        raise ValidationError("refine needs a pattern-built curve")
    _check_size(curve.a, curve.b, curve.level + 1)
    fine = _refine_values(curve.values, curve.pattern)
    return SelfAffineCurve(curve.a, curve.b, curve.level + 1, fine, curve.pattern)


def build(pattern: SelfAffinePattern, level: int) -> SelfAffineCurve:
    """Build X^(level) exactly.

    >>> build(DEFAULT_PATTERN, 1).values.tolist()
    [0, 1, 2, 1, 2]
    """
    if level < 1:
        raise ValidationError(f"level must be >= 1, got {level}")
    _check_size(pattern.a, pattern.b, level)
    values = np.array([0, 1], dtype=np.int64)
    for _ in range(level):
        values = _refine_values(values, pattern)
    return SelfAffineCurve(pattern.a, pattern.b, level, values, pattern)


def down_template(pattern: SelfAffinePattern, level: int) -> np.ndarray:
    """Numerators of the decreasing template refined ``level`` times (1 -> 0)."""
    values = np.array([1, 0], dtype=np.int64)
    for _ in range(level):
        values = _refine_values(values, pattern)
    return values


def value_at(curve: SelfAffineCurve, j: int) -> Fraction:
    """Exact X(j b^-n) as a Fraction."""
    if not 0 <= j <= curve.n_intervals:
        raise IndexOutOfRange(f"grid index {j} outside 0..{curve.n_intervals}")
    return Fraction(int(curve.values[j]), curve.scale)


@dataclass(frozen=True)
class AssumptionReport:
    c_constant: Fraction | float
    attained_at: tuple[int, int]
    min_increment: Fraction


def assumption_constant(curve: SelfAffineCurve) -> AssumptionReport:
    """C = 1 / min_{m, j} b^(Hm) |X((j+1) b^-m) - X(j b^-m)| over levels 1..n."""
    best = None
    for m in range(1, curve.level + 1):
        stride = curve.b ** (curve.level - m)
        inc = np.abs(np.diff(curve.values[::stride]))
        j = int(np.argmin(inc))
        # b^(Hm) = a^m cancels the a^-m of level m, leaving a^-(n-m)
        cand = Fraction(int(inc[j]), curve.a ** (curve.level - m))
        if best is None or cand < best[0]:
            best = (cand, (m, j))
    low, where = best
    c = Fraction(1) / low if low else math.inf
    return AssumptionReport(c, where, low)


def family_of_pieces(curve: SelfAffineCurve, m: int) -> tuple[np.ndarray, int]:
    """Distinct rescaled pieces b^(Hn) (X((j+t) b^-n) - X(j b^-n)) on the level-m subgrid.

    Pieces are integer rows of length b^m + 1 in units a^-m, collected for
    every n = 0..level-m and every j.  Returns ``(family, N)`` with the
    family sorted lexicographically.
    """
    if not 0 <= m < curve.level:
        raise ValidationError(f"scale m must satisfy 0 <= m < level={curve.level}")
    bm = curve.b**m
    rows = []
    for n in range(curve.level - m + 1):
        c = curve.coarsen(n + m).values
        starts = np.arange(curve.b**n) * bm
        idx = starts[:, None] + np.arange(bm + 1)[None, :]
        rows.append(c[idx] - c[starts][:, None])
    family = np.unique(np.concatenate(rows), axis=0)
    return family, int(family.shape[0])


def piece_table(curve: SelfAffineCurve, n: int, j: int, m: int) -> np.ndarray:
    """The single rescaled piece for interval j at scale n, sampled at scale m."""
    c = curve.coarsen(n + m).values
    bm = curve.b**m
    return c[j * bm : (j + 1) * bm + 1] - c[j * bm]


def empirical_hoelder(curve: SelfAffineCurve) -> float:
    """Regression slope of log max-increment against log b^-m, m = 1..level."""
    if curve.level < 3:
        raise ValidationError("empirical_hoelder needs level >= 3")
    ms = np.arange(1, curve.level + 1)
    logs = []
    for m in ms:
        inc = np.abs(np.diff(curve.coarsen(m).values)).max()
        logs.append(math.log(int(inc)) - m * math.log(curve.a))
    slope, _ = np.polyfit(-ms * math.log(curve.b), logs, 1)
    return float(slope)


def sup_distance(coarse: SelfAffineCurve, fine: SelfAffineCurve) -> Fraction:
    """Exact sup |X^(n+1) - X^(n)| with X^(n) linearly interpolated.

    Both curves are piecewise linear on the finer grid, so the sup is
    attained at fine grid points.
    """
    if fine.level != coarse.level + 1:
        raise ValidationError("curves must be consecutive levels")
    a, b = coarse.a, coarse.b
    inc = np.diff(coarse.values)
    i = np.arange(b)
    # b * a^(n+1) * X^(n) at fine point j b + i
    interp = (b * a * coarse.values[:-1])[:, None] + a * inc[:, None] * i[None, :]
    diff = np.abs(b * fine.values[:-1].reshape(-1, b) - interp)
    return Fraction(int(diff.max()), b * a ** (coarse.level + 1))
