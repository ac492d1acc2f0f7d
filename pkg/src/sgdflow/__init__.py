"""SDE models of single-sample SGD on least squares.

Simulators for the discrete recursion and its diffusion limits (empirical and
population, noisy and noiseless), the matching state-dependent noise factors,
every convergence bound as an explicit function, and the estimators used to
check them: sliced Wasserstein distances, Hill tail indices, and the
quartic-form constant behind the heavy-tail story.
"""

import os as _os

# Cap BLAS threading before numpy loads; after import these knobs are inert.
# Best effort: respects an explicit SGDFLOW_THREADS, never overrides knobs
# the user already set.
_threads = _os.environ.get("SGDFLOW_THREADS")
if _threads:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        _os.environ.setdefault(_var, _threads)
del _os, _threads

from .analysis import (
    BoundReport,
    MeanSqDistTo,
    MeanSqSigmaDist,
    QuarticFormReport,
    SlicedW2Vs,
    TailReport,
    TailVerdict,
    bound_ergodic_average,
    bound_invariant_second_moment,
    bound_nonparametric_noiseless,
    bound_parametric_noiseless,
    bound_parametric_noiseless_loose,
    bound_stepsize_decay,
    bound_w2_noisy,
    build_bound_report,
    hill_sweep,
    hill_tail_index,
    moment_prefix_counts,
    nonparametric_envelope,
    quartic_form_constant,
    tail_report,
    violations_from_columns,
    w2_1d,
    w2_sliced,
    w2_sliced_detail,
)
from .datagen import (
    GeneratorSpec,
    NoiseKind,
    NoiseModel,
    Spectrum,
    SpectrumKind,
    generate_empirical,
    generate_population,
    spectrum_eigenvalues,
)
from .dynamics import (
    DynamicsKind,
    ScheduleKind,
    SimulationPlan,
    StepSchedule,
    TrajectoryEnsemble,
    em_step,
    generator_apply_quadratic,
    sgd_step,
    simulate_ensemble,
)
from .exports import (
    format_float,
    read_csv_columns,
    read_ensemble_binary,
    write_curve_csv,
    write_ensemble_binary,
    write_report_csv,
)
from .noise import (
    DiffusionModel,
    DiffusionVariant,
    NoiseCovarianceReport,
    ResidualOperator,
    diffusion_factor,
    empirical_diffusion,
    lipschitz_probe,
    lipschitz_scale_bound,
    noise_covariance_report,
    population_diffusion_sq,
    psd_sqrt,
    residual_operator,
)
from .problems import (
    ALPHA_GRID,
    InputLaw,
    PopulationModel,
    ProblemInstance,
    Regime,
    RegimeReport,
    SpectralSummary,
    classify_regime,
    empirical_instance,
    from_json,
    interpolator,
    loss,
    population_instance,
    population_k_surrogate,
    spectral_summary,
    to_json,
)

__all__ = [
    "ALPHA_GRID",
    "BoundReport",
    "DiffusionModel",
    "DiffusionVariant",
    "DynamicsKind",
    "GeneratorSpec",
    "InputLaw",
    "MeanSqDistTo",
    "MeanSqSigmaDist",
    "NoiseCovarianceReport",
    "NoiseKind",
    "NoiseModel",
    "PopulationModel",
    "ProblemInstance",
    "QuarticFormReport",
    "Regime",
    "RegimeReport",
    "ResidualOperator",
    "ScheduleKind",
    "SimulationPlan",
    "SlicedW2Vs",
    "SpectralSummary",
    "Spectrum",
    "SpectrumKind",
    "StepSchedule",
    "TailReport",
    "TailVerdict",
    "TrajectoryEnsemble",
    "bound_ergodic_average",
    "bound_invariant_second_moment",
    "bound_nonparametric_noiseless",
    "bound_parametric_noiseless",
    "bound_parametric_noiseless_loose",
    "bound_stepsize_decay",
    "bound_w2_noisy",
    "build_bound_report",
    "classify_regime",
    "diffusion_factor",
    "em_step",
    "empirical_diffusion",
    "empirical_instance",
    "format_float",
    "from_json",
    "generate_empirical",
    "generate_population",
    "generator_apply_quadratic",
    "hill_sweep",
    "hill_tail_index",
    "interpolator",
    "lipschitz_probe",
    "lipschitz_scale_bound",
    "loss",
    "moment_prefix_counts",
    "noise_covariance_report",
    "nonparametric_envelope",
    "population_diffusion_sq",
    "population_instance",
    "population_k_surrogate",
    "psd_sqrt",
    "quartic_form_constant",
    "read_csv_columns",
    "read_ensemble_binary",
    "residual_operator",
    "sgd_step",
    "simulate_ensemble",
    "spectral_summary",
    "spectrum_eigenvalues",
    "tail_report",
    "to_json",
    "violations_from_columns",
    "w2_1d",
    "w2_sliced",
    "w2_sliced_detail",
    "write_curve_csv",
    "write_ensemble_binary",
    "write_report_csv",
]
