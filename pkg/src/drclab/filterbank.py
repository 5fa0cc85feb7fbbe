"""Mel-spaced linear-phase FIR analysis/synthesis filterbank.

Each band filter is the difference of two windowed-sinc low-pass kernels
sharing one window, ``h_b = lp(f_hi) - lp(f_lo)``. With ``lp(0) = 0`` and
``lp(fs/2) = delta`` the kernels of a bank covering ``[0, fs/2]`` sum to a
centred unit impulse, so synthesis (a plain channel sum) reconstructs the
input up to floating-point rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_channels, check_sample_rate
from .signal import DEFAULT_SAMPLE_RATE, SignalBuffer


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class FilterbankSpec:
    num_bands: int = 6
    f_low: float = 0.0
    f_high: float = 8000.0
    fir_length: int = 255
    sample_rate: int = DEFAULT_SAMPLE_RATE
    window: str = "hamming"

    def __post_init__(self):
        check_sample_rate(self.sample_rate)
        if int(self.num_bands) != self.num_bands or self.num_bands < 1:
            raise ValueError(f"num_bands must be a positive integer, got {self.num_bands}")
        if int(self.fir_length) != self.fir_length or self.fir_length < 1 or self.fir_length % 2 == 0:
            raise ValueError(f"fir_length must be a positive odd integer, got {self.fir_length}")
        if not 0 <= self.f_low < self.f_high <= self.sample_rate / 2:
            raise ValueError(
                f"need 0 <= f_low < f_high <= sample_rate/2, got f_low={self.f_low}, "
                f"f_high={self.f_high}, sample_rate={self.sample_rate}"
            )

    @property
    def delay(self) -> int:
        return (self.fir_length - 1) // 2

    def to_dict(self):
        return {
            "num_bands": self.num_bands,
            "f_low": self.f_low,
            "f_high": self.f_high,
            "fir_length": self.fir_length,
            "sample_rate": self.sample_rate,
            "window": self.window,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True, eq=False)
class BandedSignal:
    """Per-band decomposition of a signal, shape ``(num_bands, num_samples)``."""

    channels: np.ndarray
    spec: FilterbankSpec

    def __post_init__(self):
        arr = check_channels(self.channels)
        if arr.shape[0] != self.spec.num_bands:
            raise ValueError(f"expected {self.spec.num_bands} channels, got {arr.shape[0]}")
        object.__setattr__(self, "channels", arr)

    @property
    def num_bands(self) -> int:
        return self.channels.shape[0]

    def __len__(self):
        return self.channels.shape[1]

    def __add__(self, other: "BandedSignal") -> "BandedSignal":
        if other.spec != self.spec or other.channels.shape != self.channels.shape:
            raise ValueError("banded signals must share spec and shape")
        return BandedSignal(self.channels + other.channels, self.spec)

    def scaled(self, gains) -> "BandedSignal":
        """Multiply by per-(band, sample) or broadcastable gains."""
        return BandedSignal(self.channels * gains, self.spec)


def mel_band_edges(spec: FilterbankSpec) -> list[tuple[float, float]]:
    """Contiguous band edges equally spaced on the Mel scale."""
    mels = np.linspace(hz_to_mel(spec.f_low), hz_to_mel(spec.f_high), spec.num_bands + 1)
    edges = mel_to_hz(mels)
    # pin the outer edges exactly so they are not perturbed by the round trip
    edges[0], edges[-1] = spec.f_low, spec.f_high
    return [(float(edges[i]), float(edges[i + 1])) for i in range(spec.num_bands)]


def _lowpass_kernel(cutoff, spec: FilterbankSpec, window) -> np.ndarray:
    n = np.arange(spec.fir_length) - spec.delay
    nyq = spec.sample_rate / 2
    if cutoff <= 0:
        return np.zeros(spec.fir_length)
    if cutoff >= nyq:
        h = np.zeros(spec.fir_length)
        h[spec.delay] = 1.0
        return h
    wc = cutoff / nyq
    return wc * np.sinc(wc * n) * window


def design_filters(spec: FilterbankSpec) -> np.ndarray:
    """Band kernels, shape ``(num_bands, fir_length)``."""
    window = sps.get_window(spec.window, spec.fir_length, fftbins=False)
    edges = [lo for lo, _ in mel_band_edges(spec)] + [spec.f_high]
    lows = [_lowpass_kernel(f, spec, window) for f in edges]
    return np.array([lows[i + 1] - lows[i] for i in range(spec.num_bands)])


def _filter_aligned(x: np.ndarray, taps: np.ndarray, delay: int) -> np.ndarray:
    # full convolution trimmed by the group delay: output index t aligns with input t
    y = sps.oaconvolve(x, taps, mode="full") if x.size > 4 * taps.size else np.convolve(x, taps)
    return y[delay : delay + x.size]


def analyze(x: SignalBuffer, spec: FilterbankSpec, filters: np.ndarray | None = None) -> BandedSignal:
    """Split ``x`` into delay-compensated band signals."""
    if x.sample_rate != spec.sample_rate:
        raise ValueError(f"signal rate {x.sample_rate} Hz does not match filterbank rate {spec.sample_rate} Hz")
    if filters is None:
        filters = design_filters(spec)
    chans = np.array([_filter_aligned(x.samples, h, spec.delay) for h in filters])
    return BandedSignal(chans, spec)


def synthesize(b: BandedSignal) -> SignalBuffer:
    """Recombine bands by summation."""
    return SignalBuffer(b.channels.sum(axis=0), b.spec.sample_rate)


def frequency_response(spec: FilterbankSpec, n_freqs=2048):
    """Frequencies (Hz) and complex band responses, shape ``(num_bands, n_freqs)``."""
    filters = design_filters(spec)
    resp = []
    freqs = None
    for h in filters:
        freqs, r = sps.freqz(h, worN=n_freqs, fs=spec.sample_rate)
        resp.append(r)
    return freqs, np.array(resp)


def write_band_edges_csv(path, spec: FilterbankSpec) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("band,f_low_hz,f_high_hz\n")
        for b, (lo, hi) in enumerate(mel_band_edges(spec)):
            fh.write(f"{b},{lo:.6f},{hi:.6f}\n")


def write_banded_csv(path, banded: BandedSignal) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,band,amplitude\n")
        for t in range(len(banded)):
            for b in range(banded.num_bands):
                fh.write(f"{t},{b},{banded.channels[b, t]:.10g}\n")


class Filterbank(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``transform`` maps samples to a ``(bands, samples)`` array.

    ``fit`` only designs the kernels; no data is learned. Input may be a
    1-D array or a :class:`SignalBuffer`.
    """

    def __init__(self, num_bands=6, f_low=0.0, f_high=8000.0, fir_length=255, sample_rate=DEFAULT_SAMPLE_RATE):
        self.num_bands = num_bands
        self.f_low = f_low
        self.f_high = f_high
        self.fir_length = fir_length
        self.sample_rate = sample_rate

    def fit(self, X=None, y=None):
        self.spec_ = FilterbankSpec(self.num_bands, self.f_low, self.f_high, self.fir_length, self.sample_rate)
        self.filters_ = design_filters(self.spec_)
        self.band_edges_ = mel_band_edges(self.spec_)
        return self

    def _as_buffer(self, X):
        if isinstance(X, SignalBuffer):
            return X
        return SignalBuffer(np.asarray(X, dtype=np.float64).ravel(), self.spec_.sample_rate)

    def transform(self, X):
        check_is_fitted(self, "filters_")
        return analyze(self._as_buffer(X), self.spec_, self.filters_).channels

    def inverse_transform(self, Xt):
        check_is_fitted(self, "filters_")
        return synthesize(BandedSignal(Xt, self.spec_)).samples
