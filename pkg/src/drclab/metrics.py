"""Distortion metrics: envelope correlation, effective compression ratio, long-term SNR."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .envelope import EnvelopeTrack, detect
from .filterbank import BandedSignal


@dataclass
class BandStat:
    """Per-band values plus their unweighted mean over the valid bands."""

    per_band: np.ndarray
    valid: np.ndarray

    @property
    def average(self) -> float:
        vals = self.per_band[self.valid]
        return float(np.mean(vals)) if vals.size else math.nan


def _aligned(a: EnvelopeTrack, b: EnvelopeTrack):
    if a.values.shape != b.values.shape:
        raise ValueError(f"envelope tracks are not aligned: {a.values.shape} vs {b.values.shape}")


def envelope_correlation(e1: EnvelopeTrack, e2: EnvelopeTrack) -> BandStat:
    """Pearson correlation of dB envelopes per band.

    Bands where either track has zero variance (up to dB rounding) are
    flagged invalid (NaN) and left out of the average.
    """
    _aligned(e1, e2)
    a, b = e1.db(), e2.db()
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    sa = np.sqrt(np.sum(a * a, axis=1))
    sb = np.sqrt(np.sum(b * b, axis=1))
    # spreads below ~1e-9 dB per sample are rounding noise of a constant track
    tiny = 1e-9 * np.sqrt(a.shape[1])
    valid = (sa > tiny) & (sb > tiny)
    rho = np.full(e1.num_bands, np.nan)
    rho[valid] = np.sum(a * b, axis=1)[valid] / (sa[valid] * sb[valid])
    return BandStat(np.clip(rho, -1.0, 1.0), valid)


def dynamic_range_db(track: EnvelopeTrack, lo=5.0, hi=95.0) -> np.ndarray:
    """Per-band ``hi``-th minus ``lo``-th percentile of the dB envelope."""
    p = np.percentile(track.db(), [lo, hi], axis=1)
    return p[1] - p[0]


def effective_compression_ratio(env_in: EnvelopeTrack, env_out: EnvelopeTrack) -> BandStat:
    """Input dynamic range over output dynamic range (95th-5th percentile, dB).

    A band with zero output range gets ``inf`` and is flagged invalid.
    """
    _aligned(env_in, env_out)
    dr_in = dynamic_range_db(env_in)
    dr_out = dynamic_range_db(env_out)
    valid = dr_out > 0
    ecr = np.full(env_in.num_bands, np.inf)
    ecr[valid] = dr_in[valid] / dr_out[valid]
    return BandStat(ecr, valid)


def long_term_snr(target_env: EnvelopeTrack, interf_env: EnvelopeTrack) -> BandStat:
    """``10 log10(mean target / mean interferer)`` per band.

    Bands whose interferer (or target) mean sits at the detector floor are
    flagged invalid.
    """
    _aligned(target_env, interf_env)
    mt = target_env.values.mean(axis=1)
    mi = interf_env.values.mean(axis=1)
    floor = max(target_env.floor_power, interf_env.floor_power)
    valid = (mi > floor * (1 + 1e-9)) & (mt > floor * (1 + 1e-9))
    snr = 10.0 * np.log10(mt / mi)
    return BandStat(snr, valid)


@dataclass
class MetricsReport:
    per_band: list
    averaged: dict

    def to_json(self) -> str:
        return json.dumps({"per_band": self.per_band, "averaged": self.averaged}, indent=2, default=_jsonable)

    def write_csv(self, path) -> None:
        fields = ["band", "rho_in", "rho_out", "ecr", "snr_in_db", "snr_out_db", "dr_in_db", "dr_out_db"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for row in self.per_band + [dict(self.averaged, band="mean")]:
                w.writerow([_fmt(row[k]) for k in fields])


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def _fmt(v):
    if isinstance(v, str):
        return v
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{v:.6f}"


def _sum_banded(bs: list) -> BandedSignal:
    return BandedSignal(np.sum([b.channels for b in bs], axis=0), bs[0].spec)


def target_interferer_envelopes(run, detector):
    """``(target_in, interf_in, target_out, interf_out)`` envelopes of a run.

    Component 0 is the target; the remaining components are summed into a
    single interferer before detection.
    """
    if len(run.env_in) < 2:
        raise ValueError("need at least two components to separate target and interferer")
    if len(run.env_in) == 2:
        return run.env_in[0], run.env_in[1], run.env_out[0], run.env_out[1]
    i_in = detect(_sum_banded(run.banded_in[1:]), detector)
    i_out = detect(_sum_banded(run.banded_out[1:]), detector)
    return run.env_in[0], i_in, run.env_out[0], i_out


def compute_metrics(run, detector) -> MetricsReport:
    """All metrics for a :class:`~drclab.engine.MixtureRun` with ≥ 2 components."""
    t_in, i_in, t_out, i_out = target_interferer_envelopes(run, detector)
    rho_in = envelope_correlation(t_in, i_in)
    rho_out = envelope_correlation(t_out, i_out)
    ecr = effective_compression_ratio(t_in, t_out)
    snr_in = long_term_snr(t_in, i_in)
    snr_out = long_term_snr(t_out, i_out)
    dr_in = dynamic_range_db(t_in)
    dr_out = dynamic_range_db(t_out)
    per_band = []
    for b in range(t_in.num_bands):
        per_band.append(
            {
                "band": b,
                "rho_in": float(rho_in.per_band[b]),
                "rho_out": float(rho_out.per_band[b]),
                "ecr": float(ecr.per_band[b]),
                "snr_in_db": float(snr_in.per_band[b]),
                "snr_out_db": float(snr_out.per_band[b]),
                "dr_in_db": float(dr_in[b]),
                "dr_out_db": float(dr_out[b]),
            }
        )
    averaged = {
        "rho_in": rho_in.average,
        "rho_out": rho_out.average,
        "ecr": ecr.average,
        "snr_in_db": snr_in.average,
        "snr_out_db": snr_out.average,
        "dr_in_db": float(np.mean(dr_in)),
        "dr_out_db": float(np.mean(dr_out)),
    }
    return MetricsReport(per_band, averaged)

