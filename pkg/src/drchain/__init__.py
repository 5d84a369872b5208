"""Delayed-resonator vibration absorption on serial chains of flexibly linked masses."""

from .errors import (
    DrChainError,
    NumericalError,
    SimulationError,
    SingularSubsystemError,
    SpectrumError,
    TuningError,
    ValidationError,
    ZeroDivisorError,
)
from .model import AbsorberModel, ChainModel, HarmonicExcitation, assemble_matrices, partition
from .optimize import DesignProblem, DesignResult, grid_search, objective, constraints, solve
from .phasor import active_report, passive_steady_state, target_stage
from .simulation import SimulationConfig, Trajectory, simulate, steady_metrics
from .stability import SpectrumOptions, build_ddae, spectral_abscissa, spectrum
from .tuning import Branch, BranchPolicy, DrFeedback, tune

__version__ = "0.1.0"
