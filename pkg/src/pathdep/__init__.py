"""Simulation, regression BSDE solving and verification for path-dependent jump diffusions."""

from .bsde import (
    BsdeGridSolution,
    PicardDivergence,
    PicardSettings,
    RegressionBasis,
    RegressionError,
    RegressionField,
    default_panel,
    evaluate_Y_field,
    solve_bsde,
)
from .calculus import (
    DerivativeParams,
    apply_A,
    gamma_product_rule,
    gamma_with_X,
    horizontal_derivative,
    vertical_derivative,
    vertical_hessian,
)
from .functionals import FunctionalSpec, evaluate_functional, parse_functional
from .montecarlo import Estimate, estimate_Ps, estimate_time_integral, mild_residuals, nested_estimate
from .paths import CadlagPath, PointedPath, constant_path
from .scenario import ScenarioError, ScenarioSpec, load_scenario, load_scenario_file, validate_scenario
from .simulator import Ensemble, TimeGrid, simulate
from .verify import (
    VerificationReport,
    bracket_gamma_check,
    classical_to_mild_check,
    run_suite,
    verify_identification,
    z_identification_check,
)

__version__ = "0.1.0"
