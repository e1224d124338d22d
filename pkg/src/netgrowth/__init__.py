"""Stochastic model of interdependent firm growth.

Net-worths evolve under linear trade/expenditure drift with square-root
noise; the package provides the drift/diffusion coefficients, closed-form
and RK4 moment dynamics, Euler-Maruyama Monte Carlo verification, Gaussian
VaR/CVaR/relative-risk metrics, snapshot-likelihood inference, and
calibration from input-output tables.
"""

from .calibration import (
    CalibrationConfig,
    IoTable,
    calibrate,
    calibrate_lambda,
    calibrate_phi,
    leontief_coefficients,
    read_growth_csv,
    read_io_table_csv,
    representative_firm_initials,
)
from .errors import NumericError
from .inference import (
    FitResult,
    FitSpec,
    ObservationSet,
    fit_mle,
    log_likelihood,
    read_observations_csv,
    write_observations_csv,
)
from .model import (
    ModelParams,
    NetWorthVector,
    ParamsDocument,
    build_diffusion_tensor,
    build_drift_matrix,
    load_params,
    save_params,
    validate_params,
)
from .moments import (
    MomentState,
    MomentSystem,
    build_moment_system,
    closed_form_moment_trajectory,
    matrix_exponential,
    read_moments_csv,
    solve_higher_moments,
    solve_moments_closed_form,
    solve_moments_ode,
    write_moments_csv,
)
from .risk import (
    QuantileSpec,
    RiskCurve,
    RiskPoint,
    conditional_value_at_risk,
    psi_quantile,
    relative_risk,
    risk_curve,
    value_at_risk,
    write_risk_csv,
)
from .simulate import (
    PathEnsemble,
    SimConfig,
    em_step,
    empirical_moments,
    empirical_quantile,
    read_ensemble_binary,
    run_monte_carlo,
    write_ensemble_binary,
    write_ensemble_csv,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "CalibrationConfig",
    "FitResult",
    "FitSpec",
    "IoTable",
    "ModelParams",
    "MomentState",
    "MomentSystem",
    "NetWorthVector",
    "NumericError",
    "ObservationSet",
    "ParamsDocument",
    "PathEnsemble",
    "QuantileSpec",
    "RiskCurve",
    "RiskPoint",
    "SimConfig",
    "build_diffusion_tensor",
    "build_drift_matrix",
    "build_moment_system",
    "calibrate",
    "calibrate_lambda",
    "calibrate_phi",
    "closed_form_moment_trajectory",
    "conditional_value_at_risk",
    "em_step",
    "empirical_moments",
    "empirical_quantile",
    "fit_mle",
    "leontief_coefficients",
    "load_params",
    "log_likelihood",
    "matrix_exponential",
    "psi_quantile",
    "read_ensemble_binary",
    "read_growth_csv",
    "read_io_table_csv",
    "read_moments_csv",
    "read_observations_csv",
    "relative_risk",
    "representative_firm_initials",
    "risk_curve",
    "run_monte_carlo",
    "save_params",
    "solve_higher_moments",
    "solve_moments_closed_form",
    "solve_moments_ode",
    "validate_params",
    "value_at_risk",
    "write_ensemble_binary",
    "write_ensemble_csv",
    "write_moments_csv",
    "write_observations_csv",
    "write_risk_csv",
]
