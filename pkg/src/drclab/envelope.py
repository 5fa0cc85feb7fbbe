"""Attack/release power envelope detection.

The detector is the two-branch recursive smoother

    v[t] = beta_a * v[t-1] + (1 - beta_a) * |x[t]|**2   if |x[t]|**2 >= v[t-1]
    v[t] = beta_r * v[t-1] + (1 - beta_r) * |x[t]|**2   otherwise

run independently in every band, with the output clamped at a floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_channels
from .filterbank import BandedSignal

DEFAULT_FLOOR_POWER = 1e-10

# Published (time, beta) pairs at 16 kHz; ansi_beta is calibrated to pass through both.
_CAL_RATE = 16000
_CAL_POINTS = ((10.0, 0.978), (50.0, 0.996))


def _fit_calibration():
    (t1, b1), (t2, b2) = _CAL_POINTS
    n1, n2 = t1 * _CAL_RATE / 1000.0, t2 * _CAL_RATE / 1000.0
    k1, k2 = -np.log(b1), -np.log(b2)
    # -ln(beta) = scale * n**(-exponent)
    exponent = np.log(k1 / k2) / np.log(n2 / n1)
    scale = k1 * n1**exponent
    return float(scale), float(exponent)


_CAL_SCALE, _CAL_EXPONENT = _fit_calibration()


def ansi_beta(time_ms: float, sample_rate: int = 16000) -> float:
    """Smoothing coefficient for a nominal attack or release time.

    Generalizes the one-pole map ``beta = exp(-1 / n)`` (``n`` = time in
    samples) to ``beta = exp(-scale * n**-exponent)`` with ``scale`` and
    ``exponent`` fitted so that 10 ms and 50 ms at 16 kHz give the published
    0.978 and 0.996.
    """
    time_ms = float(time_ms)
    if not np.isfinite(time_ms) or time_ms <= 0:
        raise ValueError(f"time_ms must be positive, got {time_ms}")
    if sample_rate <= 0:
        raise ValueError(f"sample_rate must be positive, got {sample_rate}")
    n = time_ms * sample_rate / 1000.0
    for t_cal, b_cal in _CAL_POINTS:
        if np.isclose(n, t_cal * _CAL_RATE / 1000.0, rtol=1e-12, atol=0.0):
            return b_cal
    return float(np.exp(-_CAL_SCALE * n ** (-_CAL_EXPONENT)))


@dataclass(frozen=True)
class DetectorParams:
    beta_attack: float = 0.978
    beta_release: float = 0.996
    floor_power: float = DEFAULT_FLOOR_POWER

    def __post_init__(self):
        if not 0 <= self.beta_attack <= self.beta_release < 1:
            raise ValueError(
                f"need 0 <= beta_attack <= beta_release < 1, got {self.beta_attack}, {self.beta_release}"
            )
        if not self.floor_power > 0:
            raise ValueError(f"floor_power must be positive, got {self.floor_power}")

    @classmethod
    def from_times(cls, attack_ms=10.0, release_ms=50.0, sample_rate=16000, floor_power=DEFAULT_FLOOR_POWER):
        return cls(ansi_beta(attack_ms, sample_rate), ansi_beta(release_ms, sample_rate), floor_power)

    def to_dict(self):
        return {"beta_attack": self.beta_attack, "beta_release": self.beta_release, "floor_power": self.floor_power}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True, eq=False)
class EnvelopeTrack:
    """Per-band power envelope, shape ``(num_bands, num_samples)``."""

    values: np.ndarray
    floor_power: float = DEFAULT_FLOOR_POWER

    def __post_init__(self):
        arr = check_channels(self.values, name="envelope")
        if np.any(arr < 0):
            raise ValueError("envelope values must be nonnegative")
        object.__setattr__(self, "values", arr)

    @property
    def num_bands(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.values.shape[1]

    def db(self) -> np.ndarray:
        return 10.0 * np.log10(np.maximum(self.values, self.floor_power))


@numba.njit(cache=True)
def _detect_kernel(power, beta_a, beta_r, floor, v_init):
    n_bands, n = power.shape
    out = np.empty((n_bands, n))
    attack = np.empty((n_bands, n), dtype=np.bool_)
    for b in range(n_bands):
        v = v_init[b]
        for t in range(n):
            p = power[b, t]
            if p >= v:
                v = beta_a * v + (1.0 - beta_a) * p
                attack[b, t] = True
            else:
                v = beta_r * v + (1.0 - beta_r) * p
                attack[b, t] = False
            if v < floor:
                v = floor
            out[b, t] = v
    return out, attack


def detect_power(power, params: DetectorParams, initial=None, return_branches=False):
    """Run the detector on instantaneous power ``|x|**2`` of shape ``(bands, samples)``.

    ``initial`` is the state before the first sample; by default it is
    ``max(power[:, 0], floor_power)``. With ``return_branches`` the boolean
    array of attack-branch decisions is returned as well.
    """
    power = np.ascontiguousarray(check_channels(power, name="power"))
    if initial is None:
        initial = np.maximum(power[:, 0], params.floor_power)
    initial = np.ascontiguousarray(np.broadcast_to(np.asarray(initial, dtype=np.float64), (power.shape[0],)))
    out, attack = _detect_kernel(
        power, float(params.beta_attack), float(params.beta_release), float(params.floor_power), initial
    )
    if return_branches:
        return out, attack
    return out


def detect(x: BandedSignal, params: DetectorParams, return_branches=False):
    """Envelope of every band of ``x``."""
    res = detect_power(x.channels**2, params, return_branches=return_branches)
    if return_branches:
        return EnvelopeTrack(res[0], params.floor_power), res[1]
    return EnvelopeTrack(res, params.floor_power)


def write_envelope_csv(path, track: EnvelopeTrack) -> None:
    db = track.db()
    with open(path, "w", newline="") as fh:
        fh.write("t,band,envelope_db\n")
        for t in range(len(track)):
            for b in range(track.num_bands):
                fh.write(f"{t},{b},{db[b, t]:.6f}\n")


class EnvelopeDetector(TransformerMixin, BaseEstimator):
    """Estimator wrapper mapping ``(bands, samples)`` amplitudes to power envelopes."""

    def __init__(self, beta_attack=0.978, beta_release=0.996, floor_power=DEFAULT_FLOOR_POWER):
        self.beta_attack = beta_attack
        self.beta_release = beta_release
        self.floor_power = floor_power

    def fit(self, X=None, y=None):
        self.params_ = DetectorParams(self.beta_attack, self.beta_release, self.floor_power)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return detect_power(X**2, self.params_)
