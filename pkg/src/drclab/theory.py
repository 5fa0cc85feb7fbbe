"""Exact numerical checks of the mixture-compression inequalities.

Every checker evaluates expectations by enumerating small discrete
distributions, so results carry no sampling error. Random batches are
seeded and failing instances are shrunk greedily before being reported.

Checked statements:

* ``E[f(X) g(X)] <= E[f(X)] E[g(X)]`` for nondecreasing ``f`` and
  nonincreasing ``g`` (``check_lemma2``);
* ``Cov(ecf(V1|V2), ecf(V2|V1)) <= 0`` for independent ``V1``, ``V2``
  (``check_theorem1``);
* effective slope ``>=`` nominal slope at the mixture level
  (``check_theorem2``);
* ``ecf`` concave in ``v1`` and convex in ``v2`` when ``C(v)/v`` is convex
  (``check_lemma3``);
* long-term output SNR ``<=`` input SNR for constant interferer level
  (``check_theorem3``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .compression import (
    CompressorSpec,
    WorkingDomain,
    _slope_array,
    at_corner,
    validate_compression,
)
from .ecf import default_grid, ecf, effective_compression_slope
from .signal import make_rng

TOL = 1e-12
GRID_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteRV:
    """Finite distribution: ``support[i]`` has probability ``probs[i]``."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        s = tuple(float(v) for v in self.support)
        p = tuple(float(v) for v in self.probs)
        if len(s) != len(p) or not s:
            raise ValueError("support and probs must be non-empty and of equal length")
        if any(q < 0 for q in p):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(p) - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {sum(p)!r}")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, support):
        support = tuple(support)
        return cls(support, (1.0 / len(support),) * len(support))

    @classmethod
    def normalized(cls, support, weights):
        w = np.asarray(weights, dtype=np.float64)
        p = w / w.sum()
        # fold the rounding residue into the largest weight
        p[np.argmax(p)] += 1.0 - p.sum()
        return cls(tuple(support), tuple(p))

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.support)

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.probs)

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    def to_dict(self):
        return {"support": list(self.support), "probs": list(self.probs)}


@dataclass(frozen=True)
class MonotonePair:
    """Nondecreasing ``f`` and nonincreasing ``g`` tabulated on a sorted support."""

    points: tuple
    f: tuple
    g: tuple

    def __post_init__(self):
        x = np.asarray(self.points, dtype=np.float64)
        f = np.asarray(self.f, dtype=np.float64)
        g = np.asarray(self.g, dtype=np.float64)
        if not (x.shape == f.shape == g.shape) or x.ndim != 1:
            raise ValueError("points, f and g must be 1-D and of equal length")
        order = np.argsort(x, kind="stable")
        x, f, g = x[order], f[order], g[order]
        if np.any(np.diff(x) <= 0):
            raise ValueError("points must be distinct")
        if np.any(np.diff(f) < 0):
            raise ValueError("f must be nondecreasing")
        if np.any(np.diff(g) > 0):
            raise ValueError("g must be nonincreasing")
        object.__setattr__(self, "points", tuple(x))
        object.__setattr__(self, "f", tuple(f))
        object.__setattr__(self, "g", tuple(g))

    def evaluate(self, x):
        idx = {p: i for i, p in enumerate(self.points)}
        try:
            i = [idx[float(v)] for v in np.atleast_1d(x)]
        except KeyError as exc:
            raise ValueError(f"{exc.args[0]} is not a tabulated point") from None
        return np.asarray(self.f)[i], np.asarray(self.g)[i]


@dataclass
class CheckResult:
    """Outcome of one exact check."""

    holds: bool
    lhs: float = math.nan
    rhs: float = math.nan
    margin: float = math.nan
    skipped: str | None = None
    detail: dict = field(default_factory=dict)


@dataclass
class Report:
    """Aggregate over a batch of checks."""

    theorem: str
    instances: int = 0
    worst_margin: float = math.inf
    failures: list = field(default_factory=list)
    skipped: int = 0
    notes: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return not self.failures

    def add(self, result: CheckResult, instance=None):
        if result.skipped:
            self.skipped += 1
            return
        self.instances += 1
        if not math.isnan(result.margin):
            self.worst_margin = min(self.worst_margin, result.margin)
        if not result.holds:
            self.failures.append(instance if instance is not None else result.detail)

    def to_dict(self):
        d = asdict(self)
        d["holds"] = self.holds
        if math.isinf(d["worst_margin"]):
            d["worst_margin"] = None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if hasattr(x, "to_dict"):
        return x.to_dict()
    raise TypeError(f"not serializable: {type(x)}")


# -- opposite monotone pair covariance ------------------------------------


def check_lemma2(X: DiscreteRV, pair: MonotonePair, tol=TOL) -> CheckResult:
    """Compare ``E[f g]`` with ``E[f] E[g]`` by enumeration."""
    p = X.weights
    f, g = pair.evaluate(X.values)
    lhs = float(np.dot(p, f * g))
    rhs = float(np.dot(p, f) * np.dot(p, g))
    return CheckResult(lhs <= rhs + tol, lhs, rhs, rhs - lhs)


def _random_lemma2_instance(rng, max_support=6):
    k = int(rng.integers(1, max_support + 1))
    points = np.sort(rng.choice(np.arange(-50, 51), size=k, replace=False).astype(float))
    # steps may be zero so ties and constant segments are exercised
    f = np.cumsum(rng.integers(0, 4, size=k) * rng.random(k)) + rng.normal()
    g = -np.cumsum(rng.integers(0, 4, size=k) * rng.random(k)) + rng.normal()
    X = DiscreteRV.normalized(points, rng.random(k) + 1e-3)
    return X, MonotonePair(tuple(points), tuple(f), tuple(g))


def _shrink(instance, fails, drop):
    """Greedily drop support points while the instance keeps failing."""
    changed = True
    while changed:
        changed = False
        for i in range(len(instance[0].support)):
            smaller = drop(instance, i)
            if smaller is not None and fails(smaller):
                instance, changed = smaller, True
                break
    return instance


def _drop_rv(X: DiscreteRV, i):
    if len(X.support) <= 1:
        return None
    keep = [j for j in range(len(X.support)) if j != i]
    return DiscreteRV.normalized([X.support[j] for j in keep], [X.probs[j] for j in keep])


def run_lemma2(seed=0, instances=1000, max_support=6) -> Report:
    rng = make_rng(seed)
    rep = Report("lemma2")
    for _ in range(instances):
        X, pair = _random_lemma2_instance(rng, max_support)
        res = check_lemma2(X, pair)
        failed = None
        if not res.holds:

            def fails(inst):
                return not check_lemma2(*inst).holds

            def drop(inst, i):
                X2 = _drop_rv(inst[0], i)
                return None if X2 is None else (X2, inst[1])

            Xm, pm = _shrink((X, pair), fails, drop)
            failed = {"X": Xm.to_dict(), "f": list(pm.f), "g": list(pm.g), "points": list(pm.points)}
        rep.add(res, failed)
    return rep


# -- output-level covariance ----------------------------------------------


def check_theorem1(spec: CompressorSpec, V1: DiscreteRV, V2: DiscreteRV, tol=TOL) -> CheckResult:
    """Exact covariance of the two output levels over the product distribution.

    The covariance is divided by the product of the output means, so ``lhs``
    is dimensionless and invariant to level scaling.
    """
    if np.any(V1.values <= 0) or np.any(V2.values <= 0):
        raise ValueError("envelope supports must be positive")
    a, b = np.meshgrid(V1.values, V2.values, indexing="ij")
    w = np.outer(V1.weights, V2.weights)
    out1 = ecf(spec, a, b)
    out2 = ecf(spec, b, a)
    m1 = float(np.sum(w * out1))
    m2 = float(np.sum(w * out2))
    # centred and normalised by the means so the tolerance is scale free
    cov = float(np.sum(w * (out1 - m1) * (out2 - m2))) / (m1 * m2)
    return CheckResult(cov <= tol, cov, 0.0, -cov, detail={"mean_out1": m1, "mean_out2": m2})


def random_spec(rng, kinds=("linear", "power_law", "logarithmic", "knee"), crs=(1.0, 2.0, 3.0, 5.0, math.inf)):
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind == "linear":
        return CompressorSpec.linear(float(rng.uniform(-20, 20)))
    if kind == "power_law":
        return CompressorSpec.power_law(crs[int(rng.integers(len(crs)))], float(rng.uniform(-10, 10)))
    if kind == "logarithmic":
        return CompressorSpec.logarithmic(float(10 ** rng.uniform(-1, 1)), float(10 ** rng.uniform(-2, 2)))
    cr = crs[int(rng.integers(len(crs)))]
    knee = float(rng.uniform(-20, 10))
    limit = knee + float(rng.uniform(5, 20)) if math.isfinite(cr) and rng.random() < 0.5 else None
    return CompressorSpec.knee(max(cr, 1.0), knee, 0.0, limit)


def random_rv(rng, max_support=6, lo_db=-30.0, hi_db=30.0) -> DiscreteRV:
    k = int(rng.integers(1, max_support + 1))
    support = 10 ** (rng.uniform(lo_db, hi_db, size=k) / 10)
    return DiscreteRV.normalized(support, rng.random(k) + 1e-3)


def run_theorem1(seed=0, instances=500, kinds=("linear", "power_law"), max_support=6) -> Report:
    rng = make_rng(seed)
    rep = Report("theorem1")
    for _ in range(instances):
        spec = random_spec(rng, kinds)
        V1, V2 = random_rv(rng, max_support), random_rv(rng, max_support)
        res = check_theorem1(spec, V1, V2)
        failed = None
        if not res.holds:

            def fails(inst):
                return not check_theorem1(spec, *inst).holds

            def drop(inst, i):
                X2 = _drop_rv(inst[0], i)
                return None if X2 is None else (X2, inst[1])

            V1m, V2m = _shrink((V1, V2), fails, drop)
            V2m, V1m = _shrink((V2m, V1m), lambda inst: fails((inst[1], inst[0])), drop)
            failed = {"spec": spec.to_dict(), "V1": V1m.to_dict(), "V2": V2m.to_dict()}
        rep.add(res, failed)
    return rep


# -- effective slope vs nominal slope ---------------------------------------


def _grid_axes(grid):
    if isinstance(grid, WorkingDomain):
        return grid.grid(), grid.grid()
    if isinstance(grid, tuple) and len(grid) == 2:
        g1, g2 = grid
        g1 = g1.grid() if isinstance(g1, WorkingDomain) else np.asarray(g1, dtype=np.float64)
        g2 = g2.grid() if isinstance(g2, WorkingDomain) else np.asarray(g2, dtype=np.float64)
        return g1, g2
    g = np.asarray(grid, dtype=np.float64)
    return g, g


def default_theory_grid(spec: CompressorSpec, points=64) -> WorkingDomain:
    """64-point log grid from 60 dB below to 20 dB above the curve's reference level.

    The reference is the lower knee for knee curves, the offset for
    logarithmic curves and the equilibrium level (``C(v) = v``) otherwise.
    """
    if spec.kind == "knee":
        return WorkingDomain.around(10 ** (spec.knee_low_db / 10), 60.0, 20.0, points)
    if spec.kind == "logarithmic":
        return WorkingDomain.around(spec.offset, 60.0, 20.0, points)
    return default_grid(spec, points)


def _fd_loglog_slope(spec, v1, v2, h=1e-4):
    """Centred difference of ``ln ecf(e^u | v2)`` in ``u``."""
    up = ecf(spec, v1 * math.exp(h), v2)
    dn = ecf(spec, v1 * math.exp(-h), v2)
    return (np.log(up) - np.log(dn)) / (2 * h)


def check_theorem2(spec: CompressorSpec, grid=None, tol=GRID_TOL) -> Report:
    """Sweep a log grid: effective slope minus nominal slope at ``v1 + v2``.

    Pairs whose mixture level lies on a knee corner are skipped. The report
    also records the worst deviation in the equality cases (linear spec,
    ``v2 = 0``) and the worst relative gap between closed form and finite
    differences (corner neighbourhoods excluded).
    """
    grid = grid if grid is not None else default_theory_grid(spec)
    g1, g2 = _grid_axes(grid)
    v1, v2 = np.meshgrid(g1, g2, indexing="ij")
    vx = v1 + v2
    smooth = ~np.asarray(at_corner(spec, vx))
    es = effective_compression_slope(spec, v1, v2)
    cs = _slope_array(spec, vx)
    margin = (es - cs)[smooth]
    rep = Report("theorem2")
    rep.instances = int(smooth.sum())
    rep.skipped = int((~smooth).sum())
    rep.worst_margin = float(margin.min()) if margin.size else math.inf
    bad = np.argwhere(((es - cs) < -tol) & smooth)
    rep.failures = [{"v1": float(v1[i, j]), "v2": float(v2[i, j]), "margin": float((es - cs)[i, j])} for i, j in bad[:10]]

    eq_v2 = np.abs(effective_compression_slope(spec, g1, np.zeros_like(g1)) - _slope_array(spec, g1))
    smooth0 = ~np.asarray(at_corner(spec, g1))
    rep.notes["v2_zero_max_gap"] = float(eq_v2[smooth0].max()) if smooth0.any() else 0.0
    if spec.kind == "linear":
        rep.notes["linear_max_gap"] = float(np.abs(es - cs).max())

    # finite-difference cross-check away from corners (h = 1e-4 in log level)
    corners = spec.corners_db()
    far = smooth.copy()
    if corners:
        x_db = 10 * np.log10(vx)
        for xc in corners:
            far &= np.abs(x_db - xc) > 1e-2
    fd = _fd_loglog_slope(spec, v1, v2)
    rel = np.abs(fd - es) / np.maximum(np.abs(es), 1e-12)
    rep.notes["fd_max_rel_gap"] = float(rel[far].max()) if far.any() else 0.0
    rep.notes["equality_ok"] = rep.notes["v2_zero_max_gap"] <= tol and rep.notes.get("linear_max_gap", 0.0) <= tol
    if not rep.notes["equality_ok"]:
        rep.failures.append({"equality_case": True, "gaps": dict(rep.notes)})
    return rep


# -- midpoint convexity -----------------------------------------------------


@lru_cache(maxsize=256)
def _gain_convex(spec: CompressorSpec, domain: WorkingDomain) -> bool:
    return validate_compression(spec, domain).gain_convex


def _pairwise_midpoint(values_fn, axis_vals):
    """``f(mid) - (f(a) + f(b)) / 2`` for every pair of axis values, per row."""
    i, j = np.triu_indices(axis_vals.size, k=1)
    a, b = axis_vals[i], axis_vals[j]
    return values_fn(0.5 * (a + b)) - 0.5 * (values_fn(a) + values_fn(b))


def check_lemma3(spec: CompressorSpec, grid=None, tol=GRID_TOL, domain: WorkingDomain | None = None) -> Report:
    """Midpoint concavity in ``v1`` and convexity in ``v2`` on a log grid.

    Skipped (reported, not failed) when ``C(v)/v`` is not convex on
    ``domain`` (default: the span of the grid's mixture levels).
    """
    grid = grid if grid is not None else default_theory_grid(spec)
    g1, g2 = _grid_axes(grid)
    rep = Report("lemma3")
    if domain is None:
        domain = WorkingDomain(float(min(g1.min(), g2.min())), float(g1.max() + g2.max()), 512)
    if not _gain_convex(spec, domain):
        rep.skipped = 1
        rep.notes["skipped"] = "precondition failed: C(v)/v is not convex on the working domain"
        return rep
    worst_concave = math.inf
    for b in g2:
        d = _pairwise_midpoint(lambda v: ecf(spec, v, np.full_like(v, b)), g1)
        worst_concave = min(worst_concave, float(d.min()))
        rep.instances += d.size
    worst_convex = math.inf
    for a in g1:
        d = _pairwise_midpoint(lambda v: ecf(spec, np.full_like(v, a), v), g2)
        # convex: f(mid) <= mean, so the margin is -d
        worst_convex = min(worst_convex, float((-d).min()))
        rep.instances += d.size
    rep.notes["worst_concavity_margin_v1"] = worst_concave
    rep.notes["worst_convexity_margin_v2"] = worst_convex
    rep.worst_margin = min(worst_concave, worst_convex)
    if worst_concave < -tol:
        rep.failures.append({"axis": "v1", "margin": worst_concave})
    if worst_convex < -tol:
        rep.failures.append({"axis": "v2", "margin": worst_convex})
    return rep


# -- long-term SNR ----------------------------------------------------------

THEOREM3_DOMAIN = WorkingDomain(1e-6, 1e6, 128)


def check_theorem3(
    spec: CompressorSpec, V1: DiscreteRV, v2_const: float, tol=TOL, domain: WorkingDomain | None = None
) -> CheckResult:
    """Long-term SNR at input and output for a constant interferer level."""
    if not v2_const > 0 or np.any(V1.values <= 0):
        raise ValueError("levels must be positive")
    domain = domain or THEOREM3_DOMAIN
    if not _gain_convex(spec, domain):
        return CheckResult(True, skipped="precondition failed: C(v)/v is not convex on the working domain")
    v1, p = V1.values, V1.weights
    v2 = np.full_like(v1, float(v2_const))
    snr_in = float(np.dot(p, v1)) / v2_const
    num = float(np.dot(p, ecf(spec, v1, v2)))
    den = float(np.dot(p, ecf(spec, v2, v1)))
    snr_out = num / den
    return CheckResult(
        snr_out <= snr_in * (1 + tol),
        snr_out,
        snr_in,
        snr_in - snr_out,
        detail={"snr_in": snr_in, "snr_out": snr_out},
    )


def run_theorem3(seed=0, instances=500, max_support=6) -> Report:
    rng = make_rng(seed)
    rep = Report("theorem3")
    kinds = ("linear", "power_law", "logarithmic")
    for _ in range(instances):
        spec = random_spec(rng, kinds)
        V1 = random_rv(rng, max_support)
        v2 = float(10 ** (rng.uniform(-30, 30) / 10))
        res = check_theorem3(spec, V1, v2)
        failed = None
        if not res.holds:

            def fails(inst):
                return not check_theorem3(spec, inst[0], v2).holds

            def drop(inst, i):
                X2 = _drop_rv(inst[0], i)
                return None if X2 is None else (X2,)

            (V1m,) = _shrink((V1,), fails, drop)
            failed = {"spec": spec.to_dict(), "V1": V1m.to_dict(), "v2": v2}
        rep.add(res, failed)
    return rep


# -- suite ------------------------------------------------------------------


def theory_specs():
    """Representative specs for the grid-based checks."""
    return {
        "linear": CompressorSpec.linear(0.0),
        "power_law_cr2": CompressorSpec.power_law(2.0),
        "power_law_cr3": CompressorSpec.power_law(3.0),
        "power_law_cr5": CompressorSpec.power_law(5.0),
        "logarithmic": CompressorSpec.logarithmic(1.0, 1.0),
        "knee_cr3": CompressorSpec.knee(3.0, -10.0, 0.0, 10.0),
    }


def run_theory_suite(seed=0, instance_count=500) -> list:
    """All checkers; returns a list of :class:`Report`."""
    reports = [
        run_lemma2(seed, max(instance_count, 1000)),
        run_theorem1(seed + 1, instance_count),
        run_theorem3(seed + 2, instance_count),
    ]
    for name, spec in theory_specs().items():
        r2 = check_theorem2(spec)
        r2.theorem = f"theorem2[{name}]"
        reports.append(r2)
        r3 = check_lemma3(spec)
        r3.theorem = f"lemma3[{name}]"
        reports.append(r3)
    return reports
