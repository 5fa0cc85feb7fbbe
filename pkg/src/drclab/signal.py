"""Signal containers, seeded test-signal generators and WAV/CSV I/O.

Amplitudes are full-scale (``±1.0``) and levels are dB relative to
full-scale power, so a 0 dB signal has mean ``x**2`` equal to one.

Random numbers come from numpy's ``PCG64`` bit generator seeded with an
explicit unsigned 64-bit integer. Gaussian samples use numpy's ziggurat
sampler, so identical seeds give bit-identical buffers on every platform
numpy supports.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from ._validation import check_positive, check_sample_rate, check_samples, check_seed

DEFAULT_SAMPLE_RATE = 16000


class WavFormatError(ValueError):
    """Raised when a WAV file is not 16-bit PCM mono at the expected rate."""


@dataclass(frozen=True, eq=False)
class SignalBuffer:
    """Mono sampled waveform.

    Parameters
    ----------
    samples : array_like
        Real amplitudes, full scale ``±1.0``. Must be finite and non-empty.
    sample_rate : int
        Sampling rate in Hz.
    """

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        arr = check_samples(self.samples)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", check_sample_rate(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SignalBuffer):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    __hash__ = None

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def power(self) -> float:
        """Mean power ``mean(x**2)``."""
        return float(np.mean(self.samples**2))

    def level_db(self) -> float:
        p = self.power()
        return float(10.0 * np.log10(p)) if p > 0 else -np.inf

    def scaled(self, factor: float) -> "SignalBuffer":
        return SignalBuffer(self.samples * factor, self.sample_rate)

    def with_level(self, level_db: float) -> "SignalBuffer":
        """Return a copy rescaled so its mean power is ``10**(level_db/10)``."""
        p = self.power()
        if p <= 0:
            raise ValueError("cannot set the level of an all-zero signal")
        return self.scaled(np.sqrt(10.0 ** (level_db / 10.0) / p))

    @classmethod
    def zeros(cls, length: int, sample_rate: int = DEFAULT_SAMPLE_RATE) -> "SignalBuffer":
        return cls(np.zeros(_check_length(length)), sample_rate)


def _check_length(length) -> int:
    if int(length) != length or length < 1:
        raise ValueError(f"length must be a positive integer, got {length!r}")
    return int(length)


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an unsigned 64-bit seed."""
    return np.random.Generator(np.random.PCG64(check_seed(seed)))


def _set_power(x: np.ndarray, level_db: float) -> np.ndarray:
    p = np.mean(x**2)
    if p <= 0:
        return x
    return x * np.sqrt(10.0 ** (level_db / 10.0) / p)


def generate_white_noise(length, level_db=0.0, seed=0, sample_rate=DEFAULT_SAMPLE_RATE) -> SignalBuffer:
    """Zero-mean white Gaussian noise with mean power ``10**(level_db/10)``.

    The samples are rescaled to hit the requested power exactly, so the
    measured level equals ``level_db`` up to rounding.
    """
    n = _check_length(length)
    rng = make_rng(seed)
    x = rng.standard_normal(n)
    if n > 1:
        x -= x.mean()
    return SignalBuffer(_set_power(x, level_db), sample_rate)


@dataclass(frozen=True)
class SpeechLikeConfig:
    """Shape parameters of the speech-like generator.

    The level envelope is a low-pass Gaussian process in dB with standard
    deviation ``mod_depth_db`` and bandwidth ``mod_rate_hz``. On top of it,
    pauses (alternating renewal process with exponential durations) drop
    the level by ``pause_depth_db``. Each burst also gets a random spectral
    tilt of up to ``±tilt_db`` between 0 Hz and Nyquist, which gives the
    bands partly independent envelopes as in running speech.

    Setting ``mod_depth_db=0``, ``pause_fraction=0`` and ``tilt_db=0``
    gives a constant modulator, i.e. plain white noise.
    """

    mod_rate_hz: float = 4.0
    mod_depth_db: float = 8.0
    pause_fraction: float = 0.25
    mean_burst_s: float = 0.35
    pause_depth_db: float = 40.0
    tilt_db: float = 12.0
    control_rate_hz: float = 200.0

    def __post_init__(self):
        check_positive(self.mod_rate_hz, "mod_rate_hz")
        check_positive(self.mean_burst_s, "mean_burst_s")
        check_positive(self.control_rate_hz, "control_rate_hz")
        if self.mod_depth_db < 0 or self.pause_depth_db < 0 or self.tilt_db < 0:
            raise ValueError("depths and tilt must be nonnegative")
        if not 0 <= self.pause_fraction < 1:
            raise ValueError(f"pause_fraction must lie in [0, 1), got {self.pause_fraction}")

    @property
    def is_constant(self) -> bool:
        return self.mod_depth_db == 0 and (self.pause_fraction == 0 or self.pause_depth_db == 0) and self.tilt_db == 0


def _lowpass_gaussian(rng, n_ctrl, cutoff, control_rate):
    """Unit-variance Gaussian sequence band-limited to ``cutoff`` Hz."""
    pad = int(np.ceil(4 * control_rate / cutoff))
    w = rng.standard_normal(n_ctrl + 2 * pad)
    sos = sps.butter(2, cutoff, fs=control_rate, output="sos")
    y = sps.sosfiltfilt(sos, w)[pad : pad + n_ctrl]
    sd = y.std()
    return (y - y.mean()) / sd if sd > 0 else np.zeros(n_ctrl)


def _pause_mask(rng, n_ctrl, cfg, control_rate):
    """Boolean mask (control rate) that is True during pauses."""
    mask = np.zeros(n_ctrl, dtype=bool)
    if cfg.pause_fraction == 0:
        return mask
    mean_burst = cfg.mean_burst_s * control_rate
    mean_pause = mean_burst * cfg.pause_fraction / (1.0 - cfg.pause_fraction)
    pos = 0
    in_pause = rng.random() < cfg.pause_fraction
    while pos < n_ctrl:
        dur = max(1, int(round(rng.exponential(mean_pause if in_pause else mean_burst))))
        if in_pause:
            mask[pos : pos + dur] = True
        pos += dur
        in_pause = not in_pause
    return mask


def _segment_values(rng, n_ctrl, mean_len):
    """Piecewise-constant uniform(-1, 1) sequence with exponential segment lengths."""
    out = np.empty(n_ctrl)
    pos = 0
    while pos < n_ctrl:
        dur = max(1, int(round(rng.exponential(mean_len))))
        out[pos : pos + dur] = rng.uniform(-1.0, 1.0)
        pos += dur
    return out


def _tilted_carrier(rng, n, tilt_ctrl, sample_rate, control_rate):
    """White Gaussian carrier split into low/high halves reweighted by ``tilt_ctrl`` dB."""
    w = rng.standard_normal(n)
    if not np.any(tilt_ctrl):
        return w
    # complementary linear-phase split so that zero tilt returns ``w`` exactly
    taps = sps.firwin(63, sample_rate / 4, fs=sample_rate)
    low = np.convolve(w, taps, mode="same")
    high = w - low
    t_ctrl = np.arange(tilt_ctrl.size) / control_rate
    tilt = np.interp(np.arange(n) / sample_rate, t_ctrl, tilt_ctrl)
    g = 10.0 ** (tilt / 40.0)
    return low / g + high * g


def generate_speechlike(
    length,
    level_db=0.0,
    seed=0,
    mod_rate_hz=4.0,
    sample_rate=DEFAULT_SAMPLE_RATE,
    config: SpeechLikeConfig | None = None,
) -> SignalBuffer:
    """Noise carrier modulated by a slow random envelope with pauses.

    Synthetic stand-in for running speech: the level distribution spans a
    wide dynamic range and envelopes of different seeds are independent.
    ``mod_rate_hz`` overrides ``config.mod_rate_hz``.
    """
    n = _check_length(length)
    sample_rate = check_sample_rate(sample_rate)
    mod_rate_hz = float(mod_rate_hz)
    if not 0 < mod_rate_hz < sample_rate / 2:
        raise ValueError(f"mod_rate_hz must lie in (0, {sample_rate / 2}), got {mod_rate_hz}")
    cfg = config or SpeechLikeConfig()
    control_rate = min(cfg.control_rate_hz, sample_rate)
    if mod_rate_hz >= control_rate / 2:
        control_rate = 4.0 * mod_rate_hz
    rng = make_rng(seed)

    n_ctrl = int(np.ceil(n * control_rate / sample_rate)) + 2
    env_db = np.zeros(n_ctrl)
    if cfg.mod_depth_db > 0:
        env_db += cfg.mod_depth_db * _lowpass_gaussian(rng, n_ctrl, mod_rate_hz, control_rate)
    pauses = _pause_mask(rng, n_ctrl, cfg, control_rate)
    env_db[pauses] -= cfg.pause_depth_db
    tilt_ctrl = np.zeros(n_ctrl)
    if cfg.tilt_db > 0:
        tilt_ctrl = cfg.tilt_db * _segment_values(rng, n_ctrl, cfg.mean_burst_s * control_rate / 2)

    carrier = _tilted_carrier(rng, n, tilt_ctrl, sample_rate, control_rate)
    t_ctrl = np.arange(n_ctrl) / control_rate
    amp = 10.0 ** (np.interp(np.arange(n) / sample_rate, t_ctrl, env_db) / 20.0)
    x = carrier * amp
    if n > 1:
        x -= x.mean()
    return SignalBuffer(_set_power(x, level_db), sample_rate)


def generate_tone(length, freq_hz, level_db=0.0, sample_rate=DEFAULT_SAMPLE_RATE) -> SignalBuffer:
    n = _check_length(length)
    t = np.arange(n) / sample_rate
    x = np.sqrt(2.0) * np.sin(2 * np.pi * freq_hz * t)
    return SignalBuffer(_set_power(x, level_db), sample_rate)


def mix(a: SignalBuffer, b: SignalBuffer) -> SignalBuffer:
    """Elementwise sum of two equal-length, equal-rate buffers."""
    if a.sample_rate != b.sample_rate:
        raise ValueError(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    if len(a) != len(b):
        raise ValueError(f"lengths differ: {len(a)} vs {len(b)}")
    return SignalBuffer(a.samples + b.samples, a.sample_rate)


def mix_all(buffers) -> SignalBuffer:
    buffers = list(buffers)
    if not buffers:
        raise ValueError("need at least one buffer")
    out = buffers[0]
    for b in buffers[1:]:
        out = mix(out, b)
    return out


def write_wav(path, buf: SignalBuffer) -> None:
    """Write ``buf`` as 16-bit little-endian PCM mono."""
    q = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(buf.sample_rate)
        w.writeframes(q.tobytes())


def read_wav(path, sample_rate: int | None = DEFAULT_SAMPLE_RATE) -> SignalBuffer:
    """Read a 16-bit PCM mono WAV file.

    ``sample_rate`` is the configured rate; files at any other rate are
    rejected rather than resampled. Pass ``None`` to accept any rate.
    """
    path = Path(path)
    try:
        w = wave.open(str(path), "rb")
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: not a PCM WAV file ({exc})") from exc
    with w:
        channels, width, rate, nframes = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
        if channels != 1:
            raise WavFormatError(f"{path}: expected mono, got {channels} channels")
        if width != 2:
            raise WavFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit samples")
        if sample_rate is not None and rate != sample_rate:
            raise WavFormatError(f"{path}: sample rate {rate} Hz does not match configured {sample_rate} Hz")
        data = w.readframes(nframes)
    x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    if x.size == 0:
        raise WavFormatError(f"{path}: file contains no samples")
    return SignalBuffer(x, rate)


def write_signal_csv(path, buf: SignalBuffer) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,amplitude\n")
        for t, v in enumerate(buf.samples):
            fh.write(f"{t},{v:.10g}\n")
