"""Calibration measures, forecasters and adversarial natures for sequential
binary prediction, with a seeded simulation harness."""

from .measures import (
    CapabilityError,
    MeasureValue,
    SubsetSampler,
    step_ce,
    step_ce_sub,
    step_ce_sub_exact,
    vcal,
    vcal_sub,
    ucal_bounds,
    sign_ce,
    ece,
    smce,
    ssce,
    gamma,
    MEASURES,
)
from .environments import NatureSpec, make_nature, sample_outcome
from .forecasters import ForecasterSpec, make_forecaster
from .harness import (
    Transcript,
    MeasureReport,
    GapReport,
    ScalingReport,
    run_episode,
    estimate_error,
    truthfulness_gap,
    scaling_fit,
    opt_floor,
)

__version__ = "0.1.0"
