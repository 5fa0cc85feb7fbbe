"""Effective compression function of one component in a two-component mixture.

When envelopes add, the mixture level is ``v1 + v2`` and both components
receive the power gain ``C(v1 + v2) / (v1 + v2)``. The output level of the
first component is therefore

    ecf(v1 | v2) = C(v1 + v2) / (v1 + v2) * v1
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compression import (
    CompressorSpec,
    DomainError,
    NonDifferentiableError,
    WorkingDomain,
    _slope_array,
    at_corner,
    compress_level,
    compression_slope,
    equilibrium_level,
    power_to_db,
)


@dataclass(frozen=True)
class EcfContext:
    spec: CompressorSpec
    channel: int = 0


def _spec(ctx) -> CompressorSpec:
    return ctx.spec if isinstance(ctx, EcfContext) else ctx


def ecf(ctx, v1, v2):
    """Output level of a component at ``v1`` mixed with one at ``v2``."""
    spec = _spec(ctx)
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if np.any(~(v1 > 0)):
        raise DomainError("ecf requires v1 > 0")
    if np.any(~(v2 >= 0)):
        raise DomainError("ecf requires v2 >= 0")
    vx = v1 + v2
    out = np.asarray(compress_level(spec, vx)) / vx * v1
    return float(out) if out.ndim == 0 else out


def effective_compression_slope(ctx, v1, v2):
    """Log-log slope of ``ecf(. | v2)`` at ``v1``.

    Uses ``CS(vx) + (v2 / vx) * (1 - CS(vx))`` with ``vx = v1 + v2``, which
    equals ``CS(vx) + v2 / (vx C(vx)) * (C(vx) - vx C'(vx))``. A scalar call
    with ``vx`` on a knee corner raises :class:`NonDifferentiableError`.
    """
    spec = _spec(ctx)
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if np.any(~(v1 > 0)) or np.any(~(v2 >= 0)):
        raise DomainError("effective slope requires v1 > 0 and v2 >= 0")
    vx = v1 + v2
    if vx.ndim == 0:
        try:
            cs = compression_slope(spec, vx)
        except NonDifferentiableError as exc:
            left = exc.left + float(v2 / vx) * (1 - exc.left)
            right = exc.right + float(v2 / vx) * (1 - exc.right)
            raise NonDifferentiableError(float(vx), left, right) from None
        return float(cs + (v2 / vx) * (1.0 - cs))
    cs = _slope_array(spec, vx)
    return cs + (v2 / vx) * (1.0 - cs)


def ecf_slope_nondifferentiable(ctx, v1, v2):
    """Mask of ``(v1, v2)`` pairs whose mixture level hits a knee corner."""
    return at_corner(_spec(ctx), np.asarray(v1, dtype=np.float64) + np.asarray(v2, dtype=np.float64))


@dataclass
class GainField:
    """Mixture power gain tabulated over a ``(v1, v2)`` grid.

    ``gain_db[i, j]`` is the gain at ``v1[i]``, ``v2[j]``. ``equilibrium``
    is the level where ``C(v) = v`` (``None`` for linear specs) and
    ``contour_v1``/``contour_v2`` trace ``v1 + v2 = equilibrium`` inside the
    grid.
    """

    v1: np.ndarray
    v2: np.ndarray
    gain_db: np.ndarray
    equilibrium: float | None
    contour_v1: np.ndarray
    contour_v2: np.ndarray

    def rows(self):
        for i, a in enumerate(self.v1):
            for j, b in enumerate(self.v2):
                yield float(a), float(b), float(self.gain_db[i, j])


def default_grid(spec: CompressorSpec, points=64) -> WorkingDomain:
    eq = equilibrium_level(spec) or 1.0
    return WorkingDomain.around(eq, 60.0, 20.0, points)


def gain_field(ctx, grid1: WorkingDomain | None = None, grid2: WorkingDomain | None = None) -> GainField:
    spec = _spec(ctx)
    grid1 = grid1 or default_grid(spec)
    grid2 = grid2 or grid1
    v1, v2 = grid1.grid(), grid2.grid()
    vx = v1[:, None] + v2[None, :]
    g = power_to_db(np.asarray(compress_level(spec, vx)) / vx)
    eq = equilibrium_level(spec)
    if eq is not None:
        c2 = v2[v2 < eq]
        c1 = eq - c2
        keep = (c1 >= v1[0]) & (c1 <= v1[-1])
        c1, c2 = c1[keep], c2[keep]
    else:
        c1 = c2 = np.empty(0)
    return GainField(v1, v2, g, eq, c1, c2)


def write_gain_field_csv(path, field: GainField, reference=None) -> None:
    """Rows ``v1_db,v2_db,gain_db``; levels are relative to ``reference`` (default: equilibrium)."""
    ref = reference if reference is not None else (field.equilibrium or 1.0)
    with open(path, "w", newline="") as fh:
        fh.write("v1_db,v2_db,gain_db\n")
        for a, b, g in field.rows():
            fh.write(f"{10 * np.log10(a / ref):.6f},{10 * np.log10(b / ref):.6f},{g:.6f}\n")


def write_ecf_curves_csv(path, ctx, v1_grid, v2_values, reference=1.0) -> None:
    """Rows ``v2_db,v1_db,ecf_db``: one ECF curve per interferer level."""
    v1_grid = np.asarray(v1_grid, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        fh.write("v2_db,v1_db,ecf_db\n")
        for v2 in v2_values:
            out = ecf(ctx, v1_grid, np.full_like(v1_grid, v2))
            v2_db = 10 * np.log10(v2 / reference) if v2 > 0 else -np.inf
            for a, c in zip(v1_grid, out):
                fh.write(f"{v2_db:.6f},{10 * np.log10(a / reference):.6f},{10 * np.log10(c / reference):.6f}\n")
