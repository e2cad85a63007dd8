"""FxLMS and THF-FxLMS controllers."""

import math

import numpy as np
import pytest

from ancbench.errors import ConfigurationError
from ancbench.loudspeaker import LoudspeakerModel
from ancbench.signal import ImpulseResponse, Signal
from ancbench.synth import tone, white_noise
from ancbench.system import AcousticScene
from ancbench.adaptive import (
    FxLmsConfig,
    mismatched_estimate,
    run_fxlms,
    run_thf_fxlms,
)

RATE = 16000


def delay_ir(k, n=None):
    taps = np.zeros(n or k + 1)
    taps[k] = 1.0
    return ImpulseResponse(taps, RATE)


def reference_controller(x, P, S, s_hat, L, mu, clip, ls, thf_g=None):
    """Naive per-sample loop written straight from the update rule."""
    n = len(x)
    w = np.zeros(L)  # w[j] multiplies x(i - j)
    y = np.zeros(n)
    e = np.zeros(n)
    d = np.array([sum(P[k] * x[i - k] for k in range(len(P)) if i - k >= 0) for i in range(n)])
    for i in range(n):
        y[i] = sum(w[j] * x[i - j] for j in range(L) if i - j >= 0)
        a = sum(S[k] * ls(y[i - k]) for k in range(len(S)) if i - k >= 0)
        e[i] = d[i] - a
        z = np.zeros(L)
        for j in range(L):
            for k in range(len(s_hat)):
                if i - k - j < 0:
                    continue
                slope = 1.0 if thf_g is None else 1.0 - math.tanh(y[i - k] / thf_g) ** 2
                z[j] += s_hat[k] * slope * x[i - k - j]
        w = w + np.clip(mu * e[i] * z, -clip, clip)
    return y, e, w


class TestOracle:
    @pytest.mark.parametrize("seed", range(4))
    def test_fxlms_matches_reference_loop(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(120)
        P = rng.standard_normal(7)
        S = rng.standard_normal(4)
        s_hat = S + 0.1 * rng.standard_normal(4)
        scene = AcousticScene(ImpulseResponse(P, RATE), ImpulseResponse(S, RATE))
        cfg = FxLmsConfig(0.02, ImpulseResponse(s_hat, RATE), filter_len=6, grad_clip=0.05)
        tr = run_fxlms(Signal(x, RATE), scene, cfg)
        y, e, w = reference_controller(x, P, S, s_hat, 6, 0.02, 0.05, lambda v: v)
        np.testing.assert_allclose(tr.y.samples, y, atol=1e-12)
        np.testing.assert_allclose(tr.e.samples, e, atol=1e-12)
        np.testing.assert_allclose(tr.final_weights, w, atol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_thf_matches_reference_loop(self, seed):
        rng = np.random.default_rng(seed + 10)
        x = rng.standard_normal(100)
        P = rng.standard_normal(6)
        S = rng.standard_normal(3)
        ls = LoudspeakerModel(0.5)
        scene = AcousticScene(ImpulseResponse(P, RATE), ImpulseResponse(S, RATE), ls)
        cfg = FxLmsConfig(0.05, ImpulseResponse(S, RATE), filter_len=5, grad_clip=0.1, thf_eta_sq=0.5)
        tr = run_thf_fxlms(Signal(x, RATE), scene, cfg)
        g = math.sqrt(0.5) * math.sqrt(math.pi / 2)
        y, e, w = reference_controller(x, P, S, S, 5, 0.05, 0.1,
                                       lambda v: float(ls.apply_array(np.array([v]))[0]), thf_g=g)
        np.testing.assert_allclose(tr.y.samples, y, atol=1e-10)
        np.testing.assert_allclose(tr.e.samples, e, atol=1e-10)


class TestConvergence:
    def test_tone_scenario(self):
        scene = AcousticScene(delay_ir(32), ImpulseResponse.unit(RATE))
        cfg = FxLmsConfig(0.05, ImpulseResponse.unit(RATE), filter_len=64)
        tr = run_fxlms(tone(500.0, 3.0), scene, cfg)
        assert tr.final_nmse_db(1.0) <= -20.0

    def test_zero_step_is_exactly_zero_db(self):
        scene = AcousticScene(delay_ir(32), ImpulseResponse.unit(RATE))
        cfg = FxLmsConfig(0.0, ImpulseResponse.unit(RATE), filter_len=64)
        tr = run_fxlms(tone(500.0, 1.0), scene, cfg)
        assert tr.nmse_db() == 0.0
        assert tr.final_nmse_db() == 0.0
        assert not np.any(tr.final_weights)

    def test_wiener_solution(self):
        """With S = S_hat = delta and L >= len(P), LMS converges to the primary path."""
        rng = np.random.default_rng(5)
        P = 0.5 * rng.standard_normal(8)
        scene = AcousticScene(ImpulseResponse(P, RATE), ImpulseResponse.unit(RATE))
        cfg = FxLmsConfig(0.01, ImpulseResponse.unit(RATE), filter_len=12, grad_clip=1.0)
        tr = run_fxlms(white_noise(1.0, std=1.0, seed=2), scene, cfg)
        np.testing.assert_allclose(tr.final_weights[:8], P, atol=1e-3)
        np.testing.assert_allclose(tr.final_weights[8:], 0.0, atol=1e-3)

    def test_thf_linear_limit(self):
        """For a huge eta the tanh model is the identity and THF reduces to FxLMS."""
        rng = np.random.default_rng(3)
        x = Signal(0.1 * rng.standard_normal(800), RATE)
        P = ImpulseResponse(rng.standard_normal(10), RATE)
        S = ImpulseResponse(rng.standard_normal(5), RATE)
        scene = AcousticScene(P, S)
        base = FxLmsConfig(0.01, S, filter_len=16, grad_clip=1.0)
        big = FxLmsConfig(0.01, S, filter_len=16, grad_clip=1.0, thf_eta_sq=1e12)
        a, b = run_fxlms(x, scene, base), run_thf_fxlms(x, scene, big)
        np.testing.assert_allclose(b.y.samples, a.y.samples, atol=1e-9)

    def test_thf_not_worse_under_saturation(self):
        """Drive close to the speaker ceiling: the tanh-aware update cancels at least as well."""
        scene = AcousticScene(delay_ir(8), ImpulseResponse.unit(RATE), LoudspeakerModel(0.1))
        x = tone(300.0, 2.0, amplitude=0.4)
        kw = dict(filter_len=32, grad_clip=1e-3)
        plain = run_fxlms(x, scene, FxLmsConfig(0.05, ImpulseResponse.unit(RATE), **kw)).final_nmse_db()
        thf = run_thf_fxlms(x, scene, FxLmsConfig(0.05, ImpulseResponse.unit(RATE), thf_eta_sq=0.1, **kw)).final_nmse_db()
        assert plain < -10.0
        assert thf <= plain


class TestBehaviour:
    def test_divergence_flagged(self):
        scene = AcousticScene(delay_ir(2), ImpulseResponse([-1.0], RATE))
        cfg = FxLmsConfig(1.0, ImpulseResponse([1.0], RATE), filter_len=4, grad_clip=10.0, divergence_norm=1e3)
        tr = run_fxlms(white_noise(0.5, std=1.0), scene, cfg)
        assert tr.diverged
        assert tr.samples_processed < 8000
        assert np.all(np.isfinite(tr.e.samples))
        assert np.all(tr.y.samples[tr.samples_processed :] == 0.0)

    def test_clip_bounds_each_update(self):
        rng = np.random.default_rng(0)
        scene = AcousticScene(ImpulseResponse(rng.standard_normal(5), RATE), ImpulseResponse.unit(RATE))
        cfg = FxLmsConfig(10.0, ImpulseResponse.unit(RATE), filter_len=8, grad_clip=1e-4, snapshot_every=1)
        tr = run_fxlms(white_noise(0.01, std=1.0), scene, cfg)
        steps = np.diff(np.array(tr.weight_snapshots), axis=0)
        assert np.max(np.abs(steps)) <= 1e-4 + 1e-15

    def test_norm_clip(self):
        rng = np.random.default_rng(0)
        scene = AcousticScene(ImpulseResponse(rng.standard_normal(5), RATE), ImpulseResponse.unit(RATE))
        cfg = FxLmsConfig(10.0, ImpulseResponse.unit(RATE), filter_len=8, grad_clip=1e-3,
                          clip_mode="norm", snapshot_every=1)
        tr = run_fxlms(white_noise(0.01, std=1.0), scene, cfg)
        steps = np.diff(np.array(tr.weight_snapshots), axis=0)
        assert np.max(np.linalg.norm(steps, axis=1)) <= 1e-3 + 1e-12

    def test_snapshots_count(self):
        scene = AcousticScene(delay_ir(3), ImpulseResponse.unit(RATE))
        cfg = FxLmsConfig(0.01, ImpulseResponse.unit(RATE), filter_len=8, snapshot_every=100)
        tr = run_fxlms(white_noise(0.1), scene, cfg)
        assert len(tr.weight_snapshots) == 16
        np.testing.assert_array_equal(tr.weight_snapshots[-1], tr.final_weights)

    def test_export_csv(self, tmp_path):
        scene = AcousticScene(delay_ir(3), ImpulseResponse.unit(RATE))
        tr = run_fxlms(white_noise(0.01), scene, FxLmsConfig(0.01, ImpulseResponse.unit(RATE), filter_len=4))
        lines = tr.export_csv(tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "n,e_sq,running_nmse_db"
        assert len(lines) == 161
        running = tr.running_nmse_db()
        assert running.shape == (160,) and np.all(running >= -120.0)

    def test_thf_requires_eta(self):
        scene = AcousticScene(delay_ir(3), ImpulseResponse.unit(RATE))
        with pytest.raises(ConfigurationError):
            run_thf_fxlms(white_noise(0.01), scene, FxLmsConfig(0.01, ImpulseResponse.unit(RATE)))

    def test_rate_mismatch(self):
        scene = AcousticScene(delay_ir(3), ImpulseResponse.unit(RATE))
        with pytest.raises(ConfigurationError):
            run_fxlms(white_noise(0.01, sample_rate_hz=8000), scene,
                      FxLmsConfig(0.01, ImpulseResponse.unit(RATE)))

    @pytest.mark.parametrize("kw", [dict(filter_len=0), dict(step_size=-1.0), dict(grad_clip=0.0),
                                    dict(clip_mode="x"), dict(thf_eta_sq=-1.0)])
    def test_config_validation(self, kw):
        args = dict(step_size=0.1, secondary_estimate=ImpulseResponse.unit(RATE))
        args.update(kw)
        with pytest.raises(ConfigurationError):
            FxLmsConfig(**args)

    def test_mismatched_estimate(self, reference_paths):
        _, S = reference_paths
        est = mismatched_estimate(S, 0.1, seed=1)
        rms = np.sqrt(np.mean(S.taps**2))
        dev = np.std(est.taps - S.taps)
        assert 0.08 * rms < dev < 0.12 * rms
        np.testing.assert_array_equal(mismatched_estimate(S, 0.1, seed=1).taps, est.taps)
