"""Compression functions: level maps ``C(v)`` from input to output power.

Four kinds are supported:

``linear``       ``C(v) = G v``
``power_law``    ``C(v) = g0**2 * v**(1/cr)`` (``cr = inf`` gives a constant)
``knee``         linear below ``knee_low_db``, slope ``1/cr`` (log-log) above it,
                 clipped at ``limit_db``; corners optionally rounded in dB
``logarithmic``  ``C(v) = scale * ln(1 + v/offset)``

All levels handed to these functions are powers (not dB) and must be
strictly positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

KINDS = ("linear", "power_law", "knee", "logarithmic")

_DB = 10.0 / math.log(10.0)


# levels within this many dB of a knee corner count as on the corner
_CORNER_ATOL = 1e-12


class DomainError(ValueError):
    """Input level outside the domain ``v > 0`` of a compression function."""


class NonDifferentiableError(ValueError):
    """Slope requested exactly at a corner; carries both one-sided slopes."""

    def __init__(self, v, left, right):
        super().__init__(f"compression function is not differentiable at v={v!r} (slopes {left} / {right})")
        self.v = v
        self.left = left
        self.right = right


def db_to_power(db):
    return 10.0 ** (np.asarray(db, dtype=np.float64) / 10.0)


def power_to_db(p):
    return 10.0 * np.log10(np.asarray(p, dtype=np.float64))


@dataclass(frozen=True)
class CompressorSpec:
    """Declarative compression function.

    Use the ``linear``, ``power_law``, ``knee`` and ``logarithmic``
    constructors rather than filling fields by hand; fields that do not
    apply to ``kind`` are ignored.
    """

    kind: str
    gain_db: float = 0.0
    cr: float = 1.0
    g0_db: float = 0.0
    knee_low_db: float = -60.0
    limit_db: float | None = None
    knee_width_db: float = 0.0
    scale: float = 1.0
    offset: float = 1.0
    _corners: tuple = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown compressor kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("power_law", "knee") and not self.cr >= 1:
            raise ValueError(f"compression ratio must be >= 1, got {self.cr}")
        if self.kind == "logarithmic" and not (self.scale > 0 and self.offset > 0):
            raise ValueError("logarithmic compressor needs positive scale and offset")
        if self.kind == "knee":
            if self.knee_width_db < 0:
                raise ValueError("knee_width_db must be nonnegative")
            object.__setattr__(self, "_corners", self._knee_corners())

    # -- constructors -------------------------------------------------
    @classmethod
    def linear(cls, gain_db=0.0):
        return cls("linear", gain_db=float(gain_db))

    @classmethod
    def power_law(cls, cr, g0_db=0.0):
        return cls("power_law", cr=float(cr), g0_db=float(g0_db))

    @classmethod
    def power_law_with_equilibrium(cls, cr, equilibrium_db):
        """Power law whose unity-gain level ``C(v) = v`` sits at ``equilibrium_db``."""
        cr = float(cr)
        g0_db = equilibrium_db * (1.0 - 1.0 / cr) if math.isfinite(cr) else equilibrium_db
        return cls("power_law", cr=cr, g0_db=float(g0_db))

    @classmethod
    def knee(cls, cr, knee_low_db, g0_db=0.0, limit_db=None, knee_width_db=0.0):
        return cls(
            "knee",
            cr=float(cr),
            g0_db=float(g0_db),
            knee_low_db=float(knee_low_db),
            limit_db=None if limit_db is None else float(limit_db),
            knee_width_db=float(knee_width_db),
        )

    @classmethod
    def logarithmic(cls, scale=1.0, offset=1.0):
        return cls("logarithmic", scale=float(scale), offset=float(offset))

    # -- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        keys = {
            "linear": ("gain_db",),
            "power_law": ("cr", "g0_db"),
            "knee": ("cr", "g0_db", "knee_low_db", "limit_db", "knee_width_db"),
            "logarithmic": ("scale", "offset"),
        }[self.kind]
        out = {"kind": self.kind}
        for k in keys:
            v = getattr(self, k)
            out[k] = "inf" if isinstance(v, float) and math.isinf(v) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "CompressorSpec":
        d = dict(d)
        kind = d.pop("kind")
        if d.get("cr") in ("inf", "Infinity"):
            d["cr"] = math.inf
        if kind not in KINDS:
            raise ValueError(f"unknown compressor kind {kind!r}")
        return getattr(cls, kind)(**d)

    # -- knee geometry (dB domain) ------------------------------------
    def _knee_corners(self):
        """``(input_db, slope_change)`` pairs for the log-log knee curve."""
        corners = [(self.knee_low_db, 1.0 / self.cr - 1.0)]
        if self.limit_db is not None:
            knee_out = self.g0_db + self.knee_low_db
            if self.limit_db < knee_out:
                raise ValueError(f"limit_db {self.limit_db} lies below the knee output level {knee_out}")
            if math.isfinite(self.cr):
                x_lim = self.knee_low_db + self.cr * (self.limit_db - knee_out)
                corners.append((x_lim, -1.0 / self.cr))
        if self.knee_width_db > 0 and len(corners) == 2 and corners[1][0] - corners[0][0] < self.knee_width_db:
            raise ValueError("knee_width_db is wider than the compressive region")
        return tuple(corners)

    def _knee_db(self, x):
        w = self.knee_width_db
        y = self.g0_db + x
        for xc, ds in self._corners:
            d = x - xc
            if w > 0:
                ramp = np.where(d <= -w / 2, 0.0, np.where(d >= w / 2, d, (d + w / 2) ** 2 / (2 * w)))
            else:
                ramp = np.maximum(d, 0.0)
            y = y + ds * ramp
        return y

    def _knee_slope(self, x, side=1):
        w = self.knee_width_db
        s = np.ones_like(x)
        for xc, ds in self._corners:
            d = x - xc
            if w > 0:
                s = s + ds * np.clip((d + w / 2) / w, 0.0, 1.0)
            else:
                on = np.abs(d) <= _CORNER_ATOL
                s = s + ds * (((d > 0) & ~on) | (on & (side > 0)))
        # summed slope changes can undershoot 0 by an ulp in the limiting region
        return np.clip(s, 0.0, 1.0)

    def corners_db(self):
        """Input levels (dB) at which the curve is not differentiable."""
        if self.kind == "knee" and self.knee_width_db == 0:
            return [xc for xc, _ in self._corners]
        return []

    # -- evaluation ---------------------------------------------------
    def __call__(self, v):
        return compress_level(self, v)


def _check_level(v):
    arr = np.asarray(v, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise DomainError("compression functions are defined for levels v > 0")
    return arr


def _scalar_or_array(out, v):
    return float(out) if np.ndim(v) == 0 else out


def compress_level(spec: CompressorSpec, v):
    """Output level ``C(v)``; accepts scalars or arrays of positive powers."""
    arr = _check_level(v)
    k = spec.kind
    if k == "linear":
        out = db_to_power(spec.gain_db) * arr
    elif k == "power_law":
        alpha = 0.0 if math.isinf(spec.cr) else 1.0 / spec.cr
        out = db_to_power(spec.g0_db) * arr**alpha
    elif k == "knee":
        out = db_to_power(spec._knee_db(_DB * np.log(arr)))
    else:
        out = spec.scale * np.log1p(arr / spec.offset)
    return _scalar_or_array(out, v)


def gain(spec: CompressorSpec, v):
    """Amplitude gain ``sqrt(C(v) / v)``."""
    arr = _check_level(v)
    return _scalar_or_array(np.sqrt(np.asarray(compress_level(spec, arr)) / arr), v)


def power_gain(spec: CompressorSpec, v):
    """Power gain ``C(v) / v``."""
    arr = _check_level(v)
    return _scalar_or_array(np.asarray(compress_level(spec, arr)) / arr, v)


def _slope_array(spec, arr, side=1):
    k = spec.kind
    if k == "linear":
        return np.ones_like(arr)
    if k == "power_law":
        return np.full_like(arr, 0.0 if math.isinf(spec.cr) else 1.0 / spec.cr)
    if k == "knee":
        return spec._knee_slope(_DB * np.log(arr), side)
    r = arr / spec.offset
    return r / ((1.0 + r) * np.log1p(r))


def at_corner(spec: CompressorSpec, v):
    """Boolean mask of levels lying exactly on a corner of the curve."""
    arr = _check_level(v)
    corners = spec.corners_db()
    if not corners:
        return np.zeros(arr.shape, dtype=bool) if arr.ndim else False
    x = _DB * np.log(arr)
    mask = np.zeros(arr.shape, dtype=bool)
    for xc in corners:
        mask |= np.isclose(x, xc, rtol=0.0, atol=_CORNER_ATOL)
    return mask if arr.ndim else bool(mask)


def compression_slope(spec: CompressorSpec, v):
    """Log-log slope ``C'(v) v / C(v)``.

    Raises :class:`NonDifferentiableError` (with ``left``/``right``) when a
    scalar ``v`` sits exactly on a knee corner. For arrays, corners get the
    right-hand slope; use :func:`at_corner` to mask them.
    """
    arr = _check_level(v)
    if arr.ndim == 0 and at_corner(spec, arr):
        left = float(_slope_array(spec, arr, side=-1))
        right = float(_slope_array(spec, arr, side=1))
        raise NonDifferentiableError(float(arr), left, right)
    return _scalar_or_array(_slope_array(spec, arr), v)


def derivative(spec: CompressorSpec, v):
    """``C'(v)`` via the slope identity ``C' = CS * C / v``."""
    arr = _check_level(v)
    return _scalar_or_array(_slope_array(spec, arr) * np.asarray(compress_level(spec, arr)) / arr, v)


def equilibrium_level(spec: CompressorSpec, lo=1e-15, hi=1e15):
    """Level ``v`` with ``C(v) = v`` (unity gain), or ``None`` if there is none in range."""
    if spec.kind == "linear":
        return None
    if spec.kind == "power_law" and math.isfinite(spec.cr) and spec.cr > 1:
        return float(db_to_power(spec.g0_db / (1.0 - 1.0 / spec.cr)))

    def f(u):
        return math.log(compress_level(spec, math.exp(u))) - u

    a, b = math.log(lo), math.log(hi)
    if f(a) * f(b) > 0:
        return None
    return math.exp(optimize.brentq(f, a, b, xtol=1e-14))


@dataclass(frozen=True)
class WorkingDomain:
    v_min: float = 1e-10
    v_max: float = 1e2
    grid_points: int = 512

    def __post_init__(self):
        if not 0 < self.v_min < self.v_max:
            raise ValueError(f"need 0 < v_min < v_max, got {self.v_min}, {self.v_max}")
        if self.grid_points < 2:
            raise ValueError("grid_points must be at least 2")

    def grid(self) -> np.ndarray:
        return np.geomspace(self.v_min, self.v_max, self.grid_points)

    @classmethod
    def around(cls, center, below_db=60.0, above_db=20.0, grid_points=64):
        """Domain spanning ``[center - below_db, center + above_db]``."""
        return cls(center * 10 ** (-below_db / 10), center * 10 ** (above_db / 10), grid_points)


@dataclass
class ValidationReport:
    nonnegative: bool
    nondecreasing: bool
    concave: bool
    gain_convex: bool
    worst_concavity_violation: float
    worst_gain_convexity_violation: float

    @property
    def is_compression_function(self) -> bool:
        return self.nonnegative and self.nondecreasing and self.concave


def _midpoint_excess(f, grid):
    """Max over grid pairs of ``(f(u)+f(w))/2 - f((u+w)/2)`` (positive = not concave)."""
    u, w = np.meshgrid(grid, grid, indexing="ij")
    iu = np.triu_indices(grid.size, k=1)
    u, w = u[iu], w[iu]
    fu, fw, fm = f(u), f(w), f(0.5 * (u + w))
    return float(np.max(0.5 * (fu + fw) - fm))


def validate_compression(spec: CompressorSpec, domain: WorkingDomain | None = None, tol=1e-9) -> ValidationReport:
    """Grid-check the compression-function axioms and gain convexity.

    Concavity of ``C`` and convexity of ``C(v)/v`` are tested with the
    midpoint inequality over every pair of grid points. ``spec`` may also be
    any vectorized callable ``v -> C(v)``.
    """
    domain = domain or WorkingDomain()
    v = domain.grid()
    if isinstance(spec, CompressorSpec):
        curve = lambda a: np.asarray(compress_level(spec, a))  # noqa: E731
    else:
        curve = lambda a: np.asarray(spec(a), dtype=np.float64)  # noqa: E731
    c = curve(v)
    nonneg = bool(np.all(c >= -tol))
    nondec = bool(np.all(np.diff(c) >= -tol))
    concave_excess = _midpoint_excess(curve, v)
    # g convex  <=>  -g concave
    gain_excess = _midpoint_excess(lambda a: -curve(a) / a, v)
    return ValidationReport(
        nonnegative=nonneg,
        nondecreasing=nondec,
        concave=concave_excess <= tol,
        gain_convex=gain_excess <= tol,
        worst_concavity_violation=max(concave_excess, 0.0),
        worst_gain_convexity_violation=max(gain_excess, 0.0),
    )


def write_curve_csv(path, spec: CompressorSpec, domain: WorkingDomain | None = None) -> None:
    domain = domain or WorkingDomain()
    v = domain.grid()
    c = np.asarray(compress_level(spec, v))
    s = np.asarray(compression_slope(spec, v))
    with open(path, "w", newline="") as fh:
        fh.write("v_db,c_db,slope\n")
        for vi, ci, si in zip(power_to_db(v), power_to_db(c), s):
            fh.write(f"{vi:.6f},{ci:.6f},{si:.9f}\n")
