"""Multiband DRC of signal mixtures with exact output components.

The gain sequence is computed from the mixture envelope and applied to
the mixture and to each component separately, so the output components
``r_i = g * s_i`` add up to the mixture output ``y = g * x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .compression import CompressorSpec, compress_level
from .envelope import DetectorParams, EnvelopeTrack, detect
from .filterbank import BandedSignal, FilterbankSpec, analyze, design_filters, synthesize
from .signal import SignalBuffer, mix_all, write_wav


@dataclass(frozen=True)
class DrcConfig:
    filterbank: FilterbankSpec
    detector: DetectorParams
    compressors: tuple

    def __post_init__(self):
        comps = tuple(self.compressors)
        if len(comps) != self.filterbank.num_bands:
            raise ValueError(f"need one compressor per band: {self.filterbank.num_bands} bands, {len(comps)} specs")
        if not all(isinstance(c, CompressorSpec) for c in comps):
            raise TypeError("compressors must be CompressorSpec instances")
        object.__setattr__(self, "compressors", comps)

    @classmethod
    def uniform(cls, compressor: CompressorSpec, filterbank: FilterbankSpec | None = None, detector=None):
        """Same compressor in every band; defaults to the 6-band, 10/50 ms setup."""
        fb = filterbank or FilterbankSpec()
        return cls(fb, detector or DetectorParams(), (compressor,) * fb.num_bands)

    def to_dict(self):
        return {
            "filterbank": self.filterbank.to_dict(),
            "detector": self.detector.to_dict(),
            "compressors": [c.to_dict() for c in self.compressors],
        }

    @classmethod
    def from_dict(cls, d):
        fb = FilterbankSpec.from_dict(d.get("filterbank", {}))
        det = DetectorParams.from_dict(d.get("detector", {}))
        comps = d["compressors"]
        if isinstance(comps, dict):
            comps = [comps] * fb.num_bands
        return cls(fb, det, tuple(CompressorSpec.from_dict(c) for c in comps))


@dataclass
class MixtureRun:
    """Result of processing a list of component signals.

    ``gains`` has shape ``(bands, samples)`` for mixture processing and
    ``(components, bands, samples)`` for independent processing.
    """

    inputs: list
    outputs: list
    mixture_in: SignalBuffer
    mixture_out: SignalBuffer
    gains: np.ndarray
    env_in: list
    env_out: list
    env_mix_in: EnvelopeTrack
    env_mix_out: EnvelopeTrack
    names: list = field(default_factory=list)
    banded_in: list = field(default_factory=list, repr=False)
    banded_out: list = field(default_factory=list, repr=False)
    mode: str = "mixture"

    def decomposition_error(self) -> float:
        """Max absolute difference between ``y`` and the sum of output components."""
        total = np.zeros_like(self.mixture_out.samples)
        for r in self.outputs:
            total = total + r.samples
        return float(np.max(np.abs(self.mixture_out.samples - total)))

    def additivity_error(self) -> np.ndarray:
        """Per-band median of ``|v_x - sum_i v_si| / v_x``."""
        vx = self.env_mix_in.values
        total = sum(e.values for e in self.env_in)
        return np.median(np.abs(vx - total) / vx, axis=1)


def _check_components(components, cfg: DrcConfig):
    components = list(components)
    if not components:
        raise ValueError("need at least one component signal")
    rates = {c.sample_rate for c in components}
    lengths = {len(c) for c in components}
    if len(rates) > 1 or len(lengths) > 1:
        raise ValueError(f"components must share rate and length, got rates {rates} and lengths {lengths}")
    if components[0].sample_rate != cfg.filterbank.sample_rate:
        raise ValueError(
            f"component rate {components[0].sample_rate} Hz does not match filterbank rate {cfg.filterbank.sample_rate} Hz"
        )
    return components


def compute_gains(env: EnvelopeTrack, cfg: DrcConfig) -> np.ndarray:
    """Amplitude gains ``sqrt(C_b(v) / v)`` for a mixture envelope."""
    v = np.maximum(env.values, cfg.detector.floor_power)
    g = np.empty_like(v)
    for b, spec in enumerate(cfg.compressors):
        g[b] = np.sqrt(np.asarray(compress_level(spec, v[b])) / v[b])
    return g


def gain_bounds(cfg: DrcConfig, max_envelope: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-band ``(g_min, g_max)`` over levels in ``[floor_power, max_envelope]``."""
    v = np.geomspace(cfg.detector.floor_power, max(max_envelope, cfg.detector.floor_power * 1.0001), 2048)
    lo, hi = [], []
    for spec in cfg.compressors:
        g = np.sqrt(np.asarray(compress_level(spec, v)) / v)
        lo.append(g.min())
        hi.append(g.max())
    return np.array(lo), np.array(hi)


def process_mixture(components, cfg: DrcConfig, names=None) -> MixtureRun:
    """Compress the sum of ``components`` and track each component through it."""
    components = _check_components(components, cfg)
    fb = cfg.filterbank
    filters = design_filters(fb)
    banded = [analyze(c, fb, filters) for c in components]
    x = mix_all(components)
    bx = analyze(x, fb, filters)
    env_x = detect(bx, cfg.detector)
    g = compute_gains(env_x, cfg)

    by = bx.scaled(g)
    br = [b.scaled(g) for b in banded]
    return MixtureRun(
        inputs=components,
        outputs=[synthesize(b) for b in br],
        mixture_in=x,
        mixture_out=synthesize(by),
        gains=g,
        env_in=[detect(b, cfg.detector) for b in banded],
        env_out=[detect(b, cfg.detector) for b in br],
        env_mix_in=env_x,
        env_mix_out=detect(by, cfg.detector),
        names=list(names) if names else [f"s{i + 1}" for i in range(len(components))],
        banded_in=banded,
        banded_out=br,
        mode="mixture",
    )


def process_independently(components, cfg: DrcConfig, names=None) -> MixtureRun:
    """Compress every component with its own gain track, then sum the outputs."""
    components = _check_components(components, cfg)
    fb = cfg.filterbank
    filters = design_filters(fb)
    banded = [analyze(c, fb, filters) for c in components]
    env_in = [detect(b, cfg.detector) for b in banded]
    gains = np.array([compute_gains(e, cfg) for e in env_in])
    br = [b.scaled(gi) for b, gi in zip(banded, gains)]
    by = BandedSignal(np.sum([b.channels for b in br], axis=0), fb)
    x = mix_all(components)
    return MixtureRun(
        inputs=components,
        outputs=[synthesize(b) for b in br],
        mixture_in=x,
        mixture_out=synthesize(by),
        gains=gains,
        env_in=env_in,
        env_out=[detect(b, cfg.detector) for b in br],
        env_mix_in=detect(analyze(x, fb, filters), cfg.detector),
        env_mix_out=detect(by, cfg.detector),
        names=list(names) if names else [f"s{i + 1}" for i in range(len(components))],
        banded_in=banded,
        banded_out=br,
        mode="independent",
    )


def write_gains_csv(path, run: MixtureRun, stride=1) -> None:
    g = run.gains if run.gains.ndim == 2 else run.gains[0]
    gdb = 20.0 * np.log10(g)
    with open(path, "w", newline="") as fh:
        fh.write("t,band,gain_db\n")
        for t in range(0, gdb.shape[1], stride):
            for b in range(gdb.shape[0]):
                fh.write(f"{t},{b},{gdb[b, t]:.6f}\n")


def write_component_envelopes_csv(path, run: MixtureRun, stride=1) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,band,component,env_in_db,env_out_db\n")
        ins = [e.db() for e in run.env_in]
        outs = [e.db() for e in run.env_out]
        n_bands, n = ins[0].shape
        for t in range(0, n, stride):
            for b in range(n_bands):
                for i, name in enumerate(run.names):
                    fh.write(f"{t},{b},{name},{ins[i][b, t]:.6f},{outs[i][b, t]:.6f}\n")


def export_wavs(directory, run: MixtureRun) -> list:
    """Write ``y.wav`` and one ``r_<name>.wav`` per component; returns the paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = [d / "y.wav"]
    write_wav(paths[0], run.mixture_out)
    for name, r in zip(run.names, run.outputs):
        p = d / f"r_{name}.wav"
        write_wav(p, r)
        paths.append(p)
    return paths


class MultibandCompressor(TransformerMixin, BaseEstimator):
    """Multiband DRC as a transformer over 1-D sample arrays.

    ``compressor`` is a :class:`CompressorSpec` used in every band or a list
    with one spec per band. ``fit`` only builds the configuration.
    """

    def __init__(
        self,
        compressor=None,
        num_bands=6,
        f_low=0.0,
        f_high=8000.0,
        fir_length=255,
        sample_rate=16000,
        beta_attack=0.978,
        beta_release=0.996,
        floor_power=1e-10,
    ):
        self.compressor = compressor
        self.num_bands = num_bands
        self.f_low = f_low
        self.f_high = f_high
        self.fir_length = fir_length
        self.sample_rate = sample_rate
        self.beta_attack = beta_attack
        self.beta_release = beta_release
        self.floor_power = floor_power

    def fit(self, X=None, y=None):
        fb = FilterbankSpec(self.num_bands, self.f_low, self.f_high, self.fir_length, self.sample_rate)
        det = DetectorParams(self.beta_attack, self.beta_release, self.floor_power)
        comp = self.compressor if self.compressor is not None else CompressorSpec.power_law(3.0)
        comps = tuple(comp) if isinstance(comp, (list, tuple)) else (comp,) * fb.num_bands
        self.config_ = DrcConfig(fb, det, comps)
        return self

    def _buffer(self, X):
        if isinstance(X, SignalBuffer):
            return X
        return SignalBuffer(np.asarray(X, dtype=np.float64).ravel(), self.sample_rate)

    def transform(self, X):
        check_is_fitted(self, "config_")
        return process_mixture([self._buffer(X)], self.config_).mixture_out.samples

    def transform_components(self, components) -> MixtureRun:
        check_is_fitted(self, "config_")
        return process_mixture([self._buffer(c) for c in components], self.config_)
