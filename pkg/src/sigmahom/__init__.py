"""Numerical homogenization of nonlinear stochastic PDEs with oscillating coefficients.

Modules: ``coefficients`` (media and structure checks), ``cell`` (correctors),
``effective`` (homogenized coefficients), ``noise`` (shared Wiener increments),
``solver`` (fine and homogenized time stepping), ``harness`` (experiments),
``config``/``cli`` (orchestration).
"""

from .cell import CellGrid, CellSolution, OracleFailure, corrector_1d_oracle, solve_cell
from .coefficients import (
    AlgebraSpec,
    CoefficientModel,
    Profile,
    StructureReport,
    example_family,
    mean_value,
    power_law_model,
    sine_profile,
    verify_structure,
)
from .config import ConfigError, ExperimentConfig, parse_config, serialize
from .discretization import SolverFailure, SolverOptions
from .effective import EffectiveTable, build_effective_table, effective_flux, effective_lower_order
from .kernels import BACKEND as KERNEL_BACKEND
from .noise import NoisePath, refine_noise_path, sample_noise_path
from .solver import (
    CorrectorCache,
    FieldTrajectory,
    FineProvider,
    HomogenizedProvider,
    SpaceTimeGrid,
    advance_step,
    field_norm,
    reconstruct_first_order,
    solve_trajectory,
)

__version__ = "0.1.0"
