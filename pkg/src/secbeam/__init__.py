"""Worst-case-eavesdropper secrecy allocation across mmWave beams using a channel-knowledge map."""

from importlib import resources

from .ckm import (
    Ckm,
    Scenario,
    SteeringVector,
    beam_snr,
    build_scenario,
    read_ckm,
    steering_vector,
    worst_case_beta,
)
from .errors import CkmDataError, FormatError, InvalidInputError, SecbeamError
from .oracle import GridSpec, grid_search, verify_report
from .secrecy import Allocation, eval_f, evaluate, is_feasible, secure_sets
from .solver import (
    DualState,
    SolveReport,
    SolverConfig,
    baseline_los_only,
    baseline_uniform,
    certify_kkt,
    kkt_residuals,
    solve_joint,
    solve_power_only,
    solve_time_only,
)

__version__ = "0.1.0"


def data_path(name: str):
    """Path of a bundled scenario, CKM or experiment file."""
    return resources.files(__name__).joinpath("data", name)
