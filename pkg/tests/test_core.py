import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfil.core import (
    Demonstration,
    NormalizationConfig,
    build_training_set,
    decimate_phases,
    linear_resample,
    normalize_demonstration,
    scale_velocities,
    seed_stream,
    velocity_column_mask,
)

from conftest import synthetic_demo


class TestLinearResample:
    def test_downsample_length_and_duration(self):
        series = np.random.default_rng(0).normal(size=(20000, 3))
        out = linear_resample(series, 500.0, 1000.0 / 3.0)
        assert len(out) == 13333
        in_dur = (len(series) - 1) / 500.0
        out_dur = (len(out) - 1) / (1000.0 / 3.0)
        assert abs(out_dur - in_dur) <= 3.0 / 1000.0

    def test_identity_rate_is_exact(self):
        series = np.random.default_rng(1).normal(size=(257, 4))
        out = linear_resample(series, 500.0, 500.0)
        assert out.shape == series.shape
        assert (out == series).all()

    def test_sine_against_analytic_oracle(self):
        rate, dur, f = 500.0, 10.0, 0.4
        t = np.arange(int(rate * dur)) / rate
        x = np.sin(2 * np.pi * f * t)
        out = linear_resample(x, rate, 1000.0 / 3.0)
        t_out = np.arange(len(out)) * 3.0 / 1000.0
        assert np.abs(out - np.sin(2 * np.pi * f * t_out)).max() < 1e-4

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            linear_resample(np.zeros((1, 2)), 10.0, 5.0)

    @given(n=st.integers(4, 200), ratio=st.floats(0.2, 5.0))
    @settings(max_examples=50, deadline=None)
    def test_duration_preserved_within_one_sample(self, n, ratio):
        series = np.linspace(0.0, 1.0, n)
        r_src = 100.0
        r_dst = r_src * ratio
        out = linear_resample(series, r_src, r_dst)
        in_dur = (n - 1) / r_src
        out_dur = (len(out) - 1) / r_dst
        assert abs(out_dur - in_dur) <= 1.0 / r_dst + 1e-12


class TestScaleVelocities:
    def test_scales_only_omega_columns(self):
        demo = synthetic_demo(frequency=0.4, duration=2.0)
        out = scale_velocities(demo.samples, 1.5, demo.dof)
        mask = velocity_column_mask(demo.dof)
        assert np.allclose(out[:, mask], 1.5 * demo.samples[:, mask])
        assert (out[:, ~mask] == demo.samples[:, ~mask]).all()

    def test_identity_factor(self):
        demo = synthetic_demo(duration=1.0)
        assert (scale_velocities(demo.samples, 1.0) == demo.samples).all()

    def test_inverse_pair(self):
        demo = synthetic_demo(duration=1.0)
        out = scale_velocities(scale_velocities(demo.samples, 1.5), 2.0 / 3.0)
        assert np.allclose(out, demo.samples, rtol=1e-15, atol=1e-15)

    def test_bad_factor_rejected(self):
        demo = synthetic_demo(duration=1.0)
        for bad in (float("nan"), float("inf"), 0.0, -1.0):
            with pytest.raises(ValueError):
                scale_velocities(demo.samples, bad)


def _cycle_lengths_in_samples(x: np.ndarray) -> np.ndarray:
    """Spacing of rising zero crossings of a centered signal, in samples."""
    x = x - x.mean()
    rising = np.nonzero((x[:-1] < 0) & (x[1:] >= 0))[0]
    return np.diff(rising)


class TestNormalizeDemonstration:
    def test_paper_rates_for_08(self, norm_cfg):
        demo = synthetic_demo(frequency=0.8)
        out = normalize_demonstration(demo, norm_cfg)
        assert out.sample_rate == pytest.approx(2000.0 / 3.0)
        mask = velocity_column_mask(demo.dof)
        resampled = linear_resample(demo.samples, 500.0, out.sample_rate)
        assert np.allclose(out.samples[:, mask], 0.75 * resampled[:, mask])

    def test_base_frequency_is_identity(self, norm_cfg):
        demo = synthetic_demo(frequency=0.6)
        out = normalize_demonstration(demo, norm_cfg)
        assert out.sample_rate == demo.sample_rate
        assert (out.samples == demo.samples).all()
        assert (out.phase == demo.phase).all()

    @pytest.mark.parametrize("freq", [0.4, 0.6, 0.8])
    def test_samples_per_cycle_constant(self, freq, norm_cfg):
        demo = synthetic_demo(frequency=freq)
        out = normalize_demonstration(demo, norm_cfg)
        wipe = out.samples[out.phase == 1]
        cycles = _cycle_lengths_in_samples(wipe[:, 0])
        expected = norm_cfg.control_rate / norm_cfg.base_frequency
        assert len(cycles) >= 3
        assert abs(cycles.mean() - expected) <= 1.0

    @pytest.mark.parametrize("freq", [0.4, 0.8])
    def test_velocity_consistent_with_position_differences(self, freq, norm_cfg):
        # after normalization the velocity channels match finite differences
        # of the positions taken at the control rate (the normalized clock)
        demo = synthetic_demo(frequency=freq, duration=20.0)
        out = normalize_demonstration(demo, norm_cfg)
        wipe = out.phase == 1
        theta = out.samples[wipe, 0]
        omega = out.samples[wipe, demo.dof]
        fd = np.diff(theta) * norm_cfg.control_rate
        amp, w = 0.2, 2 * np.pi * freq
        theta_dd_max = amp * w * w
        tol = 2.0 * theta_dd_max / out.sample_rate
        err = np.abs(omega[:-1] - fd)
        assert err[5:-5].max() < tol + 1e-9

    def test_round_trip_recovers_original(self, norm_cfg):
        demo = synthetic_demo(frequency=0.4, duration=20.0)
        normed = normalize_demonstration(demo, norm_cfg)
        back_rate = demo.sample_rate
        samples = linear_resample(normed.samples, normed.sample_rate, back_rate)
        samples = scale_velocities(samples, demo.motion_frequency / norm_cfg.base_frequency)
        n = min(len(samples), len(demo.samples))
        lo = int(6.0 * demo.sample_rate)  # the press/wipe corner is not band-limited
        err = np.abs(samples[lo:n] - demo.samples[lo:n]).max()
        assert err < 5e-5  # linear-interpolation error bound on this signal

    def test_nonpositive_frequency_rejected(self, norm_cfg):
        demo = synthetic_demo(frequency=0.4, duration=2.0)
        demo.motion_frequency = -1.0
        with pytest.raises(ValueError):
            normalize_demonstration(demo, norm_cfg)


class TestDecimatePhases:
    def test_counts(self):
        subs = decimate_phases(np.arange(100), 20)
        assert len(subs) == 20
        assert all(len(s) == 5 for s in subs)

    def test_identity(self):
        x = np.arange(17)
        subs = decimate_phases(x, 1)
        assert len(subs) == 1
        assert (subs[0] == x).all()

    def test_per_subsequence_rate(self, norm_cfg):
        demo = synthetic_demo(frequency=0.8)
        out = normalize_demonstration(demo, norm_cfg)
        subs = decimate_phases(out.samples, 20)
        sub_rate = out.sample_rate / 20
        assert sub_rate == pytest.approx(0.8 * 25.0 / 0.6)

    def test_factor_longer_than_series_rejected(self):
        with pytest.raises(ValueError):
            decimate_phases(np.arange(5), 6)

    @given(n=st.integers(1, 300), factor=st.integers(1, 40))
    @settings(max_examples=80, deadline=None)
    def test_exact_partition(self, n, factor):
        if factor > n:
            with pytest.raises(ValueError):
                decimate_phases(np.arange(n), factor)
            return
        subs = decimate_phases(np.arange(n), factor)
        recombined = np.sort(np.concatenate(subs))
        assert (recombined == np.arange(n)).all()


class TestBuildTrainingSet:
    def _grid(self):
        demos = []
        for f in (0.4, 0.6, 0.8):
            for h in (0.10, 0.15):
                for _ in range(3):
                    demos.append(synthetic_demo(frequency=f, height=h))
        return demos

    def test_full_grid_sequence_count(self, norm_cfg):
        sequences, _, manifest = build_training_set(self._grid(), norm_cfg, True)
        assert len(sequences) == 360
        assert manifest["num_sequences"] == 360

    def test_base_frequency_demo_identical_between_pipelines(self, norm_cfg):
        demo = synthetic_demo(frequency=0.6)
        a, _, _ = build_training_set([demo], norm_cfg, True)
        b, _, _ = build_training_set([demo], norm_cfg, False)
        assert len(a) == len(b)
        for sa, sb in zip(a, b):
            assert (sa.inputs == sb.inputs).all()
            assert (sa.targets == sb.targets).all()

    def test_sequence_lengths_for_slow_demo(self, norm_cfg):
        demo = synthetic_demo(frequency=0.4, duration=40.0)
        sequences, _, _ = build_training_set([demo], norm_cfg, True)
        # 40 s at 333.3 Hz is about 13333 samples, about 666 per episode
        assert len(sequences) == 20
        assert abs(len(sequences[0].inputs) - 666) <= 2

    def test_step_period_and_label(self, norm_cfg):
        demo = synthetic_demo(frequency=0.4, duration=10.0)
        sequences, _, _ = build_training_set([demo], norm_cfg, True)
        assert sequences[0].step_period_original == pytest.approx(0.6 / (0.4 * 25.0))
        assert (sequences[0].inputs[:, -1] == 0.4).all()

    def test_targets_are_next_step_follower_plus_leader(self, norm_cfg):
        demo = synthetic_demo(frequency=0.6, duration=4.0)
        sequences, _, _ = build_training_set([demo], norm_cfg, True)
        seq = sequences[0]
        dof = demo.dof
        sub = demo.samples[0::20]
        assert np.allclose(seq.inputs[0, :3 * dof], sub[0, 3 * dof:])
        assert np.allclose(seq.targets[0, :3 * dof], sub[1, 3 * dof:])
        assert np.allclose(seq.targets[0, 3 * dof:], sub[1, :3 * dof])

    def test_empty_rejected(self, norm_cfg):
        with pytest.raises(ValueError):
            build_training_set([], norm_cfg, True)

    def test_standardization_round_trip(self, norm_cfg):
        sequences, stats, _ = build_training_set(
            [synthetic_demo(frequency=0.4, duration=10.0)], norm_cfg, True)
        x = sequences[0].inputs
        z = (x - stats.input_mean) / stats.input_std
        back = z * stats.input_std + stats.input_mean
        assert np.abs(back - x).max() < 1e-12


class TestNormalizationConfig:
    def test_inconsistent_decimation_rejected(self):
        with pytest.raises(ValueError):
            NormalizationConfig(control_rate=500.0, model_rate=25.0, decimation=10)

    def test_defaults_consistent(self):
        cfg = NormalizationConfig()
        assert cfg.control_rate / cfg.model_rate == cfg.decimation


def test_seed_stream_determinism():
    a = seed_stream(7, "teach", 3).integers(0, 2**31, size=5)
    b = seed_stream(7, "teach", 3).integers(0, 2**31, size=5)
    c = seed_stream(7, "train", 3).integers(0, 2**31, size=5)
    assert (a == b).all()
    assert (a != c).any()
