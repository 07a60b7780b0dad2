"""Spectral laboratory for SPDEs with scalar gradient noise on the torus."""
from .core import (
    ConditionedState,
    ConvergenceError,
    ModelParams,
    SpectralField,
    SpectralSymbols,
    blow_up_time,
    classical_condition,
    conditional_field,
    fourth_order_symbols,
    heat_kernel_datum,
    lp_condition,
    mode_solution,
    second_order_symbols,
    single_mode,
    split_conditions,
)
from .spaces import NormSpec, besov_norm, bessel_norm, interp_da_norm, square_fn_norm
from .moments import MomentEstimate, divergence_time, expected_norm_p, time_integrated_moment
from .multipliers import (
    MarcinkiewiczReport,
    MultiplierSeq,
    apply_multiplier,
    empirical_mq_norm,
    marcinkiewicz_constant,
    theorem51_multipliers,
)
from .paths import (
    BrownianPath,
    SchemeKind,
    ito_isometry_check,
    monte_carlo_moment,
    simulate_path,
    strong_solution_residual,
)

__version__ = "0.1.0"
