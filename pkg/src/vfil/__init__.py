"""Variable-frequency imitation learning laboratory.

A desk-scale pipeline around a simulated wiping task: demonstrations are
recorded from four-channel bilateral teleoperation of a 2-link arm,
time-normalized to one base motion frequency, used to train a small
recurrent policy, and replayed through a variable-frequency scheduler
interleaved with the fixed-rate control loop.
"""

from .control import ControllerGains, ObserverState, Robot, bilateral_refs, default_gains
from .core import (
    Demonstration,
    NormalizationConfig,
    RobotCommand,
    RobotResponse,
    Standardization,
    TrainingSequence,
    build_training_set,
    decimate_phases,
    linear_resample,
    normalize_demonstration,
    scale_velocities,
)
from .evaluate import Report, detect_success, estimate_frequency, run_benchmark
from .infer import (
    RolloutConfig,
    SchedulerState,
    TrajectoryLog,
    denormalize_model_output,
    normalize_model_input,
    rollout,
    scheduler_init,
    scheduler_tick,
)
from .plant import PlantParams, PlantState, forward_kinematics, plant_step
from .policy import PolicyArch, PolicyParams, policy_forward, policy_init, train
from .teach import HandParams, TaskScript, TeachSetup, collect_dataset, record_demonstration

__version__ = "0.1.0"
