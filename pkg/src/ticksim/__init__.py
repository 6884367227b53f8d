"""Simulation and verification toolkit for autonomous quantum ticking clocks."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("ticksim")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from . import axioms, clockmodel, evolve, qcore, tickstats
from ._backend import default_name as sampler_backend
from .clockmodel import (
    ClockSpec,
    GeneratorBundle,
    RegisterMode,
    build_generators,
    build_register_shift,
    canonicalize_jumps,
    ladder_clock,
    quasi_ideal_clock,
    thermodynamic_clock,
)
from .errors import *  # noqa: F401,F403
from .evolve import TimeGrid, cascade, channel_at, euler_channel, propagate
from .report import VerificationReport
from .tickstats import (
    AccuracySummary,
    DelayFunction,
    EmpiricalAccuracy,
    TickRecord,
    accuracy,
    atg_referee,
    delay_function,
    empirical_accuracy,
    sample_trajectories,
)

__all__ = [
    "__version__", "axioms", "clockmodel", "evolve", "qcore", "tickstats", "sampler_backend",
    "ClockSpec", "GeneratorBundle", "RegisterMode", "build_generators", "build_register_shift",
    "canonicalize_jumps", "ladder_clock", "quasi_ideal_clock", "thermodynamic_clock",
    "TimeGrid", "cascade", "channel_at", "euler_channel", "propagate", "VerificationReport",
    "AccuracySummary", "DelayFunction", "EmpiricalAccuracy", "TickRecord", "accuracy",
    "atg_referee", "delay_function", "empirical_accuracy", "sample_trajectories",
]
