"""Markup-gap dynamics with jumps: simulation, closed-form control, estimation and checks."""
from .control import (ControlSetup, LambdaMode, LambdaSpec, MStarForm, PartialsForm, PathDerivatives, control_curve,
                      evaluate, feedback_policy, objective_mc)
from .errors import *  # noqa: F401,F403
from .estimation import (EstimateReport, SeriesObservation, detect_jumps, estimate_all, estimate_jump_moments,
                         estimate_theta_sigma, estimate_u_hat)
from .params import (NO_JUMPS, JumpSpec, ModelParams, NegativityScheme, PolicySpec, RunConfig, SimConfig, SizeDist,
                     load_run_config)
from .sde import Trajectory, picard_iterates, simulate_arrays, simulate_ensemble, simulate_path

__version__ = "0.1.0"
