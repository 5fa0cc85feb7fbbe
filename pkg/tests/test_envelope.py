import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.exceptions import NotFittedError

from drclab.envelope import (
    DetectorParams,
    EnvelopeDetector,
    EnvelopeTrack,
    ansi_beta,
    detect,
    detect_power,
    write_envelope_csv,
)
from drclab.filterbank import FilterbankSpec, analyze
from drclab.signal import generate_speechlike

P = DetectorParams()


def reference_detector(power, ba, br, floor):
    """Plain-Python replay of the attack/release recursion."""
    out, branch = [], []
    v = max(power[0], floor)
    for p in power:
        if p >= v:
            v = ba * v + (1 - ba) * p
            branch.append(True)
        else:
            v = br * v + (1 - br) * p
            branch.append(False)
        v = max(v, floor)
        out.append(v)
    return np.array(out), np.array(branch)


powers = arrays(np.float64, st.integers(1, 300), elements=st.floats(0, 10, allow_nan=False))


class TestParams:
    def test_defaults(self):
        assert (P.beta_attack, P.beta_release, P.floor_power) == (0.978, 0.996, 1e-10)

    @pytest.mark.parametrize("ba,br", [(0.99, 0.98), (-0.1, 0.5), (0.5, 1.0)])
    def test_invalid(self, ba, br):
        with pytest.raises(ValueError):
            DetectorParams(ba, br)

    def test_floor_positive(self):
        with pytest.raises(ValueError):
            DetectorParams(floor_power=0.0)

    def test_from_times(self):
        assert DetectorParams.from_times(10, 50) == P

    def test_dict(self):
        assert DetectorParams.from_dict(P.to_dict()) == P


class TestAnsiBeta:
    def test_calibration_points(self):
        assert ansi_beta(10.0, 16000) == 0.978
        assert ansi_beta(50.0, 16000) == 0.996

    def test_same_time_in_samples(self):
        # 20 ms at 8 kHz is 160 samples, as is 10 ms at 16 kHz
        assert ansi_beta(20.0, 8000) == 0.978

    @given(st.floats(0.1, 1000), st.floats(0.1, 1000))
    def test_monotone(self, a, b):
        if a < b:
            assert ansi_beta(a) <= ansi_beta(b)
        assert 0 < ansi_beta(a) < 1

    @pytest.mark.parametrize("t", [0.0, -5.0, float("nan")])
    def test_invalid(self, t):
        with pytest.raises(ValueError):
            ansi_beta(t)


class TestDetect:
    def test_constant(self):
        c = 0.25
        out = detect_power(np.full((1, 500), c), P)
        assert np.all(out == c)

    def test_step_down_closed_form(self):
        v0, c = 1.0, 0.01
        power = np.concatenate([[v0], np.full(400, c)])[None, :]
        out = detect_power(power, P)[0]
        n = np.arange(1, 401)
        expected = P.beta_release**n * (v0 - c) + c
        assert np.allclose(out[1:], expected, rtol=1e-12, atol=0)

    def test_step_up_closed_form(self):
        v0, c = 0.01, 1.0
        power = np.concatenate([[v0], np.full(100, c)])[None, :]
        out = detect_power(power, P)[0]
        n = np.arange(1, 101)
        assert np.allclose(out[1:], P.beta_attack**n * (v0 - c) + c, rtol=1e-12)

    def test_zeros_floor(self):
        out = detect_power(np.zeros((3, 100)), P)
        assert np.all(out == P.floor_power)

    @given(powers)
    def test_matches_reference_and_branches(self, p):
        out, branch = detect_power(p[None, :], P, return_branches=True)
        ref, ref_branch = reference_detector(p, P.beta_attack, P.beta_release, P.floor_power)
        assert np.allclose(out[0], ref, rtol=1e-13, atol=0)
        assert np.array_equal(branch[0], ref_branch)

    @given(powers)
    def test_branch_consistency(self, p):
        out, branch = detect_power(p[None, :], P, return_branches=True)
        prev = np.concatenate([[max(p[0], P.floor_power)], out[0, :-1]])
        assert np.array_equal(branch[0], p >= prev)

    @given(powers)
    def test_peak_tracking(self, p):
        fast = detect_power(p[None, :], P)
        sym = detect_power(p[None, :], DetectorParams(P.beta_release, P.beta_release))
        assert np.all(fast >= sym * (1 - 1e-12))

    @given(powers)
    def test_bounds(self, p):
        out = detect_power(p[None, :], P)[0]
        running = np.maximum.accumulate(np.maximum(p, max(p[0], P.floor_power)))
        assert np.all(out >= P.floor_power)
        assert np.all(out <= running * (1 + 1e-12))

    @given(arrays(np.float64, st.integers(1, 200), elements=st.floats(1e-3, 10)), st.floats(0.1, 10))
    def test_homogeneous(self, p, alpha):
        a = detect_power((alpha**2 * p)[None, :], P)
        b = alpha**2 * detect_power(p[None, :], P)
        assert np.allclose(a, b, rtol=1e-10)

    def test_banded(self):
        x = analyze(generate_speechlike(8000, -20, 3), FilterbankSpec())
        track, branch = detect(x, P, return_branches=True)
        assert track.values.shape == (6, 8000) and branch.shape == (6, 8000)
        assert np.all(track.values >= P.floor_power)

    def test_explicit_initial(self):
        out = detect_power(np.zeros((1, 3)), P, initial=1.0)[0]
        assert out[0] == pytest.approx(P.beta_release)


def test_track_validation():
    with pytest.raises(ValueError):
        EnvelopeTrack(np.array([[-1.0, 1.0]]))
    t = EnvelopeTrack(np.array([[1.0, 0.1]]))
    assert np.allclose(t.db(), [[0.0, -10.0]])


def test_csv(tmp_path):
    write_envelope_csv(tmp_path / "e.csv", EnvelopeTrack(np.array([[1.0, 0.1], [0.01, 1.0]])))
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "t,band,envelope_db"
    assert lines[1] == "0,0,0.000000"
    assert len(lines) == 5


def test_estimator():
    det = EnvelopeDetector()
    with pytest.raises(NotFittedError):
        det.transform(np.ones(4))
    out = det.fit().transform(np.full(10, 0.5))
    assert np.allclose(out, 0.25)
    assert det.get_params()["beta_attack"] == 0.978
