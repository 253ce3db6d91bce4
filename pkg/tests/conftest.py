import numpy as np
import pytest

from vfil.core import Demonstration, NormalizationConfig, PHASE_PRESS, PHASE_WIPE


def synthetic_demo(frequency=0.6, duration=40.0, rate=500.0, dof=2,
                   amplitude=0.2, press_duration=5.0, height=0.15):
    """Band-limited stand-in for a recorded wipe: joint 0 oscillates at the
    motion frequency, velocities are the exact analytic derivative."""
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    w = 2.0 * np.pi * frequency
    samples = np.zeros((n, 6 * dof))
    theta = amplitude * np.sin(w * np.clip(t - press_duration, 0.0, None))
    omega = amplitude * w * np.cos(w * (t - press_duration)) * (t >= press_duration)
    for base in (0, 3 * dof):  # leader and follower move identically
        samples[:, base + 0] = theta
        samples[:, base + 1] = 0.3 + 0.1 * theta
        samples[:, base + dof + 0] = omega
        samples[:, base + dof + 1] = 0.1 * omega
        samples[:, base + 2 * dof + 0] = 0.5
        samples[:, base + 2 * dof + 1] = -0.25
    phase = np.where(t < press_duration, PHASE_PRESS, PHASE_WIPE).astype(np.uint8)
    return Demonstration(motion_frequency=frequency, surface_height=height,
                         sample_rate=rate, samples=samples, phase=phase, dof=dof)


@pytest.fixture
def norm_cfg():
    return NormalizationConfig()
