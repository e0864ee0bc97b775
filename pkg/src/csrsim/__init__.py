"""Collective-emission master equations with delay and fluctuation observables.

Two models, one timescale convention (dimensionless time in units of the
single upper-transition decay):

* a two-level ensemble emitting one superradiant pulse, and
* a three-level cascade emitting two coupled pulses whose rate ratio
  ``alpha`` sets the second mode's slower clock.

The package integrates the master equations exactly (adaptive embedded
Runge-Kutta on the packed state space), extracts intensity, pulse-area,
time-dependent delay and fluctuation observables, and cross-checks the whole
chain against an independent Gillespie sampler.
"""

from .errors import HorizonError, IntegrationError, QuadratureError, TruncationWarning
from .evolve import (
    CASCADE_LOWER,
    CASCADE_UPPER,
    TWO_LEVEL,
    CascadeTrajectory,
    TwoLevelTrajectory,
    evolve_cascade,
    evolve_two_level,
    output_grid,
)
from .experiments import (
    SWEEP_N,
    SnapshotSet,
    SweepSpec,
    run_fig2,
    run_fig3,
    run_fig4,
    run_figures,
)
from .gillespie import (
    TrialEnsemble,
    empirical_delay,
    empirical_marginals,
    sample_cascade,
    sample_two_level,
    total_variation,
)
from .model import (
    EULER_GAMMA,
    ModelParams,
    analytic_delay,
    analytic_delay_spread,
    cascade_rates,
    default_t_cap,
    triangular_index,
    triangular_size,
    triangular_unindex,
    two_level_rate,
)
from .observables import (
    DelayReport,
    LinearFit,
    ObservableSeries,
    ProbeResult,
    average_delay_series,
    delay_argmax,
    delay_report,
    find_local_minima,
    fluctuation_series,
    intensity_series,
    linear_fit,
    partial_delay_harmonic,
    partial_delay_numeric,
    pulse_area,
    quadrature_check,
    single_photon_probe,
)

__version__ = "0.1.0"

__all__ = [
    "CASCADE_LOWER",
    "CASCADE_UPPER",
    "CascadeTrajectory",
    "DelayReport",
    "EULER_GAMMA",
    "HorizonError",
    "IntegrationError",
    "LinearFit",
    "ModelParams",
    "ObservableSeries",
    "ProbeResult",
    "QuadratureError",
    "SWEEP_N",
    "SnapshotSet",
    "SweepSpec",
    "TWO_LEVEL",
    "TrialEnsemble",
    "TruncationWarning",
    "TwoLevelTrajectory",
    "analytic_delay",
    "analytic_delay_spread",
    "average_delay_series",
    "cascade_rates",
    "default_t_cap",
    "delay_argmax",
    "delay_report",
    "empirical_delay",
    "empirical_marginals",
    "evolve_cascade",
    "evolve_two_level",
    "find_local_minima",
    "fluctuation_series",
    "intensity_series",
    "linear_fit",
    "output_grid",
    "partial_delay_harmonic",
    "partial_delay_numeric",
    "pulse_area",
    "quadrature_check",
    "run_fig2",
    "run_fig3",
    "run_fig4",
    "run_figures",
    "sample_cascade",
    "sample_two_level",
    "single_photon_probe",
    "total_variation",
    "triangular_index",
    "triangular_size",
    "triangular_unindex",
    "two_level_rate",
    "__version__",
]
