"""Multiband dynamic range compression of signal mixtures."""

from .compression import CompressorSpec
from .engine import DrcConfig, MultibandCompressor, process_independently, process_mixture
from .envelope import DetectorParams, EnvelopeDetector
from .filterbank import Filterbank, FilterbankSpec
from .metrics import compute_metrics
from .signal import SignalBuffer

__all__ = [
    "CompressorSpec",
    "DetectorParams",
    "DrcConfig",
    "EnvelopeDetector",
    "Filterbank",
    "FilterbankSpec",
    "MultibandCompressor",
    "SignalBuffer",
    "compute_metrics",
    "process_independently",
    "process_mixture",
]

__version__ = "0.1.0"
