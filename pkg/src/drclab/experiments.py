"""Reproducible experiment runners: envelope scatter, ECF overlays, SNR sweeps.

Each runner takes an :class:`ExperimentConfig`, writes CSV tables plus
``config.json`` (the fully resolved configuration) and ``summary.json``
into an output directory, and returns an :class:`ExperimentResult` whose
``checks`` map names to booleans.

Source levels follow one of two sweep modes:

``"interferer"``
    the target keeps its ``level_db`` and every interferer is placed at
    ``target_level - snr``;
``"target"``
    every interferer keeps its ``level_db`` and the target is placed at
    ``interferer_level + snr``.

``sources[0]`` is always the target. Each further source is an
interferer scenario and is mixed with the target on its own.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .compression import CompressorSpec, compress_level
from .ecf import ecf, gain_field
from .engine import (
    DrcConfig,
    export_wavs,
    process_mixture,
    write_component_envelopes_csv,
    write_gains_csv,
)
from .metrics import compute_metrics
from .signal import (
    SignalBuffer,
    generate_speechlike,
    generate_white_noise,
    mix_all,
    read_wav,
)
from ._validation import check_seed

GENERATORS = ("speechlike", "white", "babble", "wav")
U64 = 2**64


@dataclass(frozen=True)
class SourceSpec:
    """One signal source.

    ``generator`` is one of ``speechlike``, ``white``, ``babble`` (sum of
    ``talkers`` speech-like clips) or ``wav`` (read from ``path``).
    ``seed`` is added to the experiment seed.
    """

    generator: str = "speechlike"
    level_db: float = -20.0
    seed: int = 0
    path: str | None = None
    name: str | None = None
    talkers: int = 14
    mod_rate_hz: float = 4.0

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; expected one of {GENERATORS}")
        if self.generator == "wav" and not self.path:
            raise ValueError("wav sources need a path")
        if self.talkers < 1:
            raise ValueError("babble needs at least one talker")

    @property
    def label(self) -> str:
        return self.name or self.generator

    def to_dict(self):
        d = {"generator": self.generator, "level_db": self.level_db, "seed": self.seed, "name": self.label}
        if self.generator == "wav":
            d["path"] = self.path
        if self.generator == "babble":
            d["talkers"] = self.talkers
        if self.generator in ("speechlike", "babble"):
            d["mod_rate_hz"] = self.mod_rate_hz
        return d

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in ("generator", "level_db", "seed", "path", "name", "talkers", "mod_rate_hz") if k in d}
        if "generator" not in known and "path" in known:
            known["generator"] = "wav"
        return cls(**known)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    drc: DrcConfig
    sources: tuple
    snr_sweep_db: tuple = (0.0,)
    output_dir: str | None = None
    seed: int = 0
    duration_s: float = 10.0
    sweep: str = "interferer"
    cr_list: tuple = (1.0, 2.0, 3.0, math.inf)
    decimate: int = 160

    def __post_init__(self):
        sources = tuple(s if isinstance(s, SourceSpec) else SourceSpec.from_dict(s) for s in self.sources)
        if len(sources) < 2:
            raise ValueError("an experiment needs a target and at least one interferer")
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "snr_sweep_db", tuple(float(s) for s in self.snr_sweep_db))
        object.__setattr__(self, "cr_list", tuple(float(c) for c in self.cr_list))
        check_seed(self.seed)
        if self.sweep not in ("interferer", "target"):
            raise ValueError(f"sweep must be 'interferer' or 'target', got {self.sweep!r}")
        if not self.duration_s > 0:
            raise ValueError("duration_s must be positive")
        if self.decimate < 1:
            raise ValueError("decimate must be >= 1")
        if not self.snr_sweep_db:
            raise ValueError("snr_sweep_db must not be empty")

    @property
    def sample_rate(self) -> int:
        return self.drc.filterbank.sample_rate

    @property
    def length(self) -> int:
        return int(round(self.duration_s * self.sample_rate))

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def with_output(self, out):
        return replace(self, output_dir=str(out))

    def to_dict(self):
        return {
            "name": self.name,
            "drc": self.drc.to_dict(),
            "sources": [s.to_dict() for s in self.sources],
            "snr_sweep_db": list(self.snr_sweep_db),
            "output_dir": self.output_dir,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "sweep": self.sweep,
            "cr_list": [("inf" if math.isinf(c) else c) for c in self.cr_list],
            "decimate": self.decimate,
        }

    @classmethod
    def from_dict(cls, d, base: "ExperimentConfig | None" = None):
        """Build from a JSON mapping; keys missing from ``d`` fall back to ``base``."""
        merged = base.to_dict() if base is not None else {}
        merged.update(d)
        if "drc" not in merged or "sources" not in merged or "name" not in merged:
            raise ValueError("config needs 'name', 'drc' and 'sources'")
        return cls(
            name=merged["name"],
            drc=DrcConfig.from_dict(merged["drc"]),
            sources=tuple(merged["sources"]),
            snr_sweep_db=tuple(merged.get("snr_sweep_db") or (0.0,)),
            output_dir=merged.get("output_dir"),
            seed=int(merged.get("seed", 0)),
            duration_s=float(merged.get("duration_s", 10.0)),
            sweep=merged.get("sweep", "interferer"),
            cr_list=tuple(float(c) for c in merged.get("cr_list", (1.0, 2.0, 3.0, math.inf))),
            decimate=int(merged.get("decimate", 160)),
        )

    @classmethod
    def load(cls, path, base=None):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), base)


@dataclass
class ExperimentResult:
    name: str
    tables: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def summary(self):
        return {"name": self.name, "values": self.values, "checks": self.checks, "passed": self.passed}


# -- default configurations -------------------------------------------------

SNR_SWEEP = tuple(float(s) for s in range(-30, 31, 5))


def default_config(figure: str) -> ExperimentConfig:
    """Desk-scale defaults: 10 s at 16 kHz, 6 mel bands, 10/50 ms detector."""
    speech = SourceSpec("speechlike", -20.0, 1, name="speech")
    if figure == "fig5":
        return ExperimentConfig(
            "fig5",
            DrcConfig.uniform(CompressorSpec.power_law(3.0)),
            (speech, SourceSpec("white", -20.0, 2, name="white"), SourceSpec("speechlike", -20.0, 3, name="talker")),
            (0.0,),
        )
    if figure == "fig6":
        return ExperimentConfig(
            "fig6",
            DrcConfig.uniform(CompressorSpec.power_law(3.0)),
            (speech, SourceSpec("white", -20.0, 2, name="white")),
            (-30.0, 0.0, 30.0),
        )
    # SNR sweeps hold the interferer at the knee and move the target
    knee = CompressorSpec.knee(3.0, -50.0)
    target = SourceSpec("speechlike", -50.0, 1, name="speech")
    if figure == "fig7":
        return ExperimentConfig(
            "fig7", DrcConfig.uniform(knee), (target, SourceSpec("white", -50.0, 2, name="white")), SNR_SWEEP, sweep="target"
        )
    if figure == "fig8":
        return ExperimentConfig(
            "fig8",
            DrcConfig.uniform(knee),
            (
                target,
                SourceSpec("white", -50.0, 2, name="white"),
                SourceSpec("babble", -50.0, 3, name="babble"),
                SourceSpec("speechlike", -50.0, 4, name="talker"),
            ),
            SNR_SWEEP,
            sweep="target",
        )
    if figure == "process":
        return ExperimentConfig(
            "process",
            DrcConfig.uniform(CompressorSpec.power_law(3.0)),
            (speech, SourceSpec("white", -20.0, 2, name="white")),
            (0.0,),
        )
    raise ValueError(f"no default configuration for {figure!r}")


# -- sources ----------------------------------------------------------------


def _seed(cfg: ExperimentConfig, src: SourceSpec) -> int:
    return (cfg.seed + int(src.seed)) % U64


def make_source(src: SourceSpec, cfg: ExperimentConfig) -> SignalBuffer:
    """Render a source at 0 dB FS (WAV sources keep their own level unless rescaled later)."""
    n, fs = cfg.length, cfg.sample_rate
    seed = _seed(cfg, src)
    if src.generator == "white":
        return generate_white_noise(n, 0.0, seed, fs)
    if src.generator == "speechlike":
        return generate_speechlike(n, 0.0, seed, src.mod_rate_hz, fs)
    if src.generator == "babble":
        states = np.random.SeedSequence(seed).generate_state(src.talkers, dtype=np.uint64)
        clips = [
            generate_speechlike(n, 0.0, int(s), src.mod_rate_hz, fs)
            for s in states
        ]
        return mix_all(clips).with_level(0.0)
    buf = read_wav(src.path, fs)
    if len(buf) < n:
        raise ValueError(f"{src.path}: {len(buf)} samples, experiment needs {n}")
    return SignalBuffer(buf.samples[:n], fs)


def scenario_levels(cfg: ExperimentConfig, interferer: SourceSpec, snr_db: float):
    """``(target_level_db, interferer_level_db)`` for one sweep point."""
    if cfg.sweep == "interferer":
        return cfg.sources[0].level_db, cfg.sources[0].level_db - snr_db
    return interferer.level_db + snr_db, interferer.level_db


class _SourceCache:
    def __init__(self, cfg):
        self.cfg = cfg
        self._bufs = {}

    def get(self, src: SourceSpec) -> SignalBuffer:
        key = src
        if key not in self._bufs:
            self._bufs[key] = make_source(src, self.cfg)
        return self._bufs[key]

    def pair(self, interferer: SourceSpec, snr_db: float, drc: DrcConfig | None = None):
        lt, li = scenario_levels(self.cfg, interferer, snr_db)
        t = self.get(self.cfg.sources[0]).with_level(lt)
        i = self.get(interferer).with_level(li)
        run = process_mixture([t, i], drc or self.cfg.drc, names=[self.cfg.sources[0].label, interferer.label])
        return run


# -- output helpers ---------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.6f}"


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_table(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if hasattr(x, "to_dict"):
        return x.to_dict()
    raise TypeError(f"not serializable: {type(x)}")


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return _fmt(x)
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def write_json(path, obj) -> Path:
    path = Path(path)
    _atomic_write(path, json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _finish(result: ExperimentResult, cfg: ExperimentConfig, out) -> ExperimentResult:
    out = Path(out if out is not None else (cfg.output_dir or f"out/{cfg.name}"))
    for fname, (header, rows) in result.tables.items():
        result.files.append(write_table(out / fname, header, rows))
    result.files.append(write_json(out / "config.json", cfg.with_output(out).to_dict()))
    result.files.append(write_json(out / "summary.json", result.summary()))
    return result


def _key(snr):
    return f"{snr:+g}".replace("+", "p").replace("-", "m")


# -- figure runners ---------------------------------------------------------


def run_fig5(cfg: ExperimentConfig, out=None) -> ExperimentResult:
    """Envelope pairs before and after compression, one table per interferer.

    Levels are in dB relative to the mean input envelope (over both sources,
    all bands and all samples), so the average input level is 0 dB.
    """
    cache = _SourceCache(cfg)
    snr = cfg.snr_sweep_db[0]
    res = ExperimentResult("fig5")
    linear = all(c.kind == "linear" or (c.kind == "power_law" and c.cr == 1) for c in cfg.drc.compressors)
    for src in cfg.sources[1:]:
        run = cache.pair(src, snr)
        ref = 0.5 * (run.env_in[0].values.mean() + run.env_in[1].values.mean())
        ref_db = 10 * math.log10(ref)
        e1i, e2i = run.env_in[0].db() - ref_db, run.env_in[1].db() - ref_db
        e1o, e2o = run.env_out[0].db() - ref_db, run.env_out[1].db() - ref_db
        rows = []
        for t in range(0, e1i.shape[1], cfg.decimate):
            for b in range(e1i.shape[0]):
                rows.append((str(t), str(b), e1i[b, t], e2i[b, t], e1o[b, t], e2o[b, t]))
        res.tables[f"fig5_{src.label}.csv"] = (
            ["t", "band", "env1_in_db", "env2_in_db", "env1_out_db", "env2_out_db"],
            rows,
        )
        m = compute_metrics(run, cfg.drc.detector).averaged
        res.values[src.label] = {"rho_in": m["rho_in"], "rho_out": m["rho_out"], "snr_db": snr}
        if linear:
            res.checks[f"{src.label}: linear keeps rho"] = abs(m["rho_out"] - m["rho_in"]) < 0.02
        else:
            res.checks[f"{src.label}: rho_out < 0"] = m["rho_out"] < 0
            res.checks[f"{src.label}: rho_out < rho_in - 0.05"] = m["rho_out"] < m["rho_in"] - 0.05
    res.tables["fig5_rho.csv"] = (
        ["interferer", "rho_in", "rho_out"],
        [(k, v["rho_in"], v["rho_out"]) for k, v in res.values.items()],
    )
    return _finish(res, cfg, out)


def _loglog_slope(x_db, y_db):
    return float(np.polyfit(x_db, y_db, 1)[0])


def run_fig6(cfg: ExperimentConfig, out=None) -> ExperimentResult:
    """Measured target envelope transfer against the theoretical ECF curves.

    For every SNR the table ``fig6_points_<snr>.csv`` holds decimated
    ``(band, in_db, out_db)`` samples of the target and
    ``fig6_ecf_<snr>.csv`` holds ``ecf(v1 | v2)`` with ``v2`` fixed at the
    mean interferer envelope of the band. Levels are absolute (dB re full
    scale power). ``fig6_ecr.csv`` holds the effective compression ratio.
    """
    cache = _SourceCache(cfg)
    src = cfg.sources[1]
    res = ExperimentResult("fig6")
    ecr_rows, ecrs = [], []
    for snr in cfg.snr_sweep_db:
        run = cache.pair(src, snr)
        m = compute_metrics(run, cfg.drc.detector)
        ecrs.append(m.averaged["ecr"])
        ecr_rows.append([snr, m.averaged["ecr"]] + [row["ecr"] for row in m.per_band])
        vin, vout = run.env_in[0].values, run.env_out[0].values
        din, dout = run.env_in[0].db(), run.env_out[0].db()
        pts = [(str(b), din[b, t], dout[b, t]) for t in range(0, din.shape[1], cfg.decimate) for b in range(din.shape[0])]
        res.tables[f"fig6_points_{_key(snr)}.csv"] = (["band", "in_db", "out_db"], pts)
        curves = []
        nominal_res, slopes = [], []
        for b, spec in enumerate(cfg.drc.compressors):
            v2 = float(run.env_in[1].values[b].mean())
            lo, hi = np.percentile(vin[b], [0.5, 99.5])
            grid = np.geomspace(lo, hi, 64)
            curve = ecf(spec, grid, np.full_like(grid, v2))
            curves.extend((str(b), 10 * math.log10(v2), 10 * math.log10(a), 10 * math.log10(c)) for a, c in zip(grid, curve))
            nominal_res.append(np.median(np.abs(dout[b] - 10 * np.log10(np.asarray(compress_level(spec, vin[b]))))))
            slopes.append(_loglog_slope(din[b, :: cfg.decimate], dout[b, :: cfg.decimate]))
        res.tables[f"fig6_ecf_{_key(snr)}.csv"] = (["band", "v2_db", "v1_db", "ecf_db"], curves)
        res.values[_key(snr)] = {
            "snr_db": snr,
            "ecr": m.averaged["ecr"],
            "median_nominal_residual_db": float(np.mean(nominal_res)),
            "loglog_slope": float(np.mean(slopes)),
        }
    nb = cfg.drc.filterbank.num_bands
    res.tables["fig6_ecr.csv"] = (["snr_db", "ecr"] + [f"ecr_band{b}" for b in range(nb)], ecr_rows)
    order = np.argsort(cfg.snr_sweep_db)
    ordered = [ecrs[i] for i in order]
    res.checks["ecr strictly increasing in snr"] = all(b > a for a, b in zip(ordered, ordered[1:]))
    hi, lo = res.values[_key(max(cfg.snr_sweep_db))], res.values[_key(min(cfg.snr_sweep_db))]
    if max(cfg.snr_sweep_db) >= 20:
        res.checks["high snr tracks nominal curve (median |residual| < 2 dB)"] = hi["median_nominal_residual_db"] < 2.0
    if min(cfg.snr_sweep_db) <= -20:
        res.checks["low snr near linear (|slope - 1| < 0.1)"] = abs(lo["loglog_slope"] - 1.0) < 0.1
    fieldmap = gain_field(cfg.drc.compressors[0])
    res.tables["fig4_gain_field.csv"] = (
        ["v1_db", "v2_db", "gain_db"],
        [
            (10 * math.log10(a / (fieldmap.equilibrium or 1.0)), 10 * math.log10(b / (fieldmap.equilibrium or 1.0)), g)
            for a, b, g in fieldmap.rows()
        ],
    )
    return _finish(res, cfg, out)


def snr_sweep(cache: _SourceCache, interferer: SourceSpec, drc: DrcConfig | None = None):
    """Rows ``(snr_nominal, snr_in, snr_out, delta)`` over the configured sweep."""
    cfg = cache.cfg
    rows = []
    for snr in cfg.snr_sweep_db:
        run = cache.pair(interferer, snr, drc)
        a = compute_metrics(run, (drc or cfg.drc).detector).averaged
        rows.append((snr, a["snr_in_db"], a["snr_out_db"], a["snr_out_db"] - a["snr_in_db"]))
    return rows


def _with_cr(spec: CompressorSpec, cr: float) -> CompressorSpec:
    if spec.kind == "knee":
        return CompressorSpec.knee(cr, spec.knee_low_db, spec.g0_db, spec.limit_db if math.isfinite(cr) else None, spec.knee_width_db)
    if spec.kind == "power_law":
        return CompressorSpec.power_law(cr, spec.g0_db)
    raise ValueError(f"cannot vary the compression ratio of a {spec.kind!r} curve")


def run_fig7(cfg: ExperimentConfig, out=None) -> ExperimentResult:
    """Long-term SNR in and out for every compression ratio in ``cr_list``."""
    cache = _SourceCache(cfg)
    src = cfg.sources[1]
    res = ExperimentResult("fig7")
    rows = []
    for cr in cfg.cr_list:
        drc = DrcConfig(cfg.drc.filterbank, cfg.drc.detector, tuple(_with_cr(c, cr) for c in cfg.drc.compressors))
        sweep = snr_sweep(cache, src, drc)
        rows.extend((_fmt(cr),) + r for r in sweep)
        deltas = [r[3] for r in sweep]
        tag = f"cr={_fmt(cr) if math.isinf(cr) else f'{cr:g}'}"
        res.values[tag] = {"delta_db": deltas}
        if cr == 1:
            res.checks[f"{tag}: identity within 0.1 dB"] = max(abs(d) for d in deltas) < 0.1
        elif cr >= 2:
            res.checks[f"{tag}: snr_out <= snr_in + 0.1 dB"] = max(deltas) <= 0.1
            lo_i, hi_i = int(np.argmin(cfg.snr_sweep_db)), int(np.argmax(cfg.snr_sweep_db))
            if cfg.snr_sweep_db[lo_i] <= -30 and cfg.snr_sweep_db[hi_i] >= 30:
                res.checks[f"{tag}: gap grows by >= 2 dB"] = abs(deltas[hi_i]) - abs(deltas[lo_i]) >= 2.0
                res.checks[f"{tag}: |delta| < 0.5 dB at lowest snr"] = abs(deltas[lo_i]) < 0.5
    res.tables["fig7_snr.csv"] = (["cr", "snr_nominal_db", "snr_in_db", "snr_out_db", "delta_db"], rows)
    return _finish(res, cfg, out)


def run_fig8(cfg: ExperimentConfig, out=None) -> ExperimentResult:
    """SNR change against input SNR for every interferer type."""
    cache = _SourceCache(cfg)
    res = ExperimentResult("fig8")
    rows = []
    for src in cfg.sources[1:]:
        sweep = snr_sweep(cache, src)
        rows.extend((src.label,) + r for r in sweep)
        deltas = dict(zip(cfg.snr_sweep_db, (r[3] for r in sweep)))
        res.values[src.label] = {"delta_db": [deltas[s] for s in cfg.snr_sweep_db]}
        if src.generator == "white":
            res.checks[f"{src.label}: max delta <= 0.1 dB"] = max(deltas.values()) <= 0.1
        if src.generator == "speechlike":
            if -10.0 in deltas:
                res.checks[f"{src.label}: delta > 0 at -10 dB"] = deltas[-10.0] > 0
            if 10.0 in deltas:
                res.checks[f"{src.label}: delta < 0 at +10 dB"] = deltas[10.0] < 0
    res.tables["fig8_snr.csv"] = (["noise", "snr_nominal_db", "snr_in_db", "snr_out_db", "delta_db"], rows)
    return _finish(res, cfg, out)


def run_theory_suite(seed=0, instance_count=500, out=None) -> ExperimentResult:
    """All oracle checks; writes ``theory.json`` when ``out`` is given."""
    from .theory import run_theory_suite as _suite

    reports = _suite(seed, instance_count)
    res = ExperimentResult("theory")
    for r in reports:
        res.values[r.theorem] = r.to_dict()
        res.checks[r.theorem] = r.holds
    if out is not None:
        out = Path(out)
        res.files.append(write_json(out / "theory.json", [r.to_dict() for r in reports]))
        res.files.append(write_json(out / "config.json", {"seed": seed, "instance_count": instance_count}))
        res.files.append(write_json(out / "summary.json", res.summary()))
    return res


def run_process(cfg: ExperimentConfig, out=None, wavs=True) -> ExperimentResult:
    """Compress the mix of all sources at their configured levels and dump everything."""
    cache = _SourceCache(cfg)
    bufs = [cache.get(s).with_level(s.level_db) for s in cfg.sources]
    run = process_mixture(bufs, cfg.drc, names=[s.label for s in cfg.sources])
    out = Path(out if out is not None else (cfg.output_dir or f"out/{cfg.name}"))
    res = ExperimentResult("process")
    out.mkdir(parents=True, exist_ok=True)
    if wavs:
        res.files.extend(export_wavs(out, run))
    write_gains_csv(out / "gains.csv", run, cfg.decimate)
    write_component_envelopes_csv(out / "envelopes.csv", run, cfg.decimate)
    res.files.extend([out / "gains.csv", out / "envelopes.csv"])
    report = compute_metrics(run, cfg.drc.detector)
    report.write_csv(out / "metrics.csv")
    res.files.append(out / "metrics.csv")
    res.values = {"metrics": report.averaged, "decomposition_error": run.decomposition_error()}
    res.checks["outputs add up to the mixture output"] = run.decomposition_error() <= 1e-12
    return _finish(res, cfg, out)


RUNNERS = {"fig5": run_fig5, "fig6": run_fig6, "fig7": run_fig7, "fig8": run_fig8, "process": run_process}
