"""Distributed stochastic-perturbation optimization: simulation and analysis.

Multi-node zeroth-order optimization where each node perturbs its own action,
observes only scalar utility values, and all nodes climb the expected global
utility together — including an incomplete-information mode in which nodes
receive random subsets of each other's utilities.  The analysis layer checks
the convergence-rate bounds numerically, and the CLI reproduces the reference
experiments.
"""

from .analysis import (
    DivergenceSeries,
    Envelopes,
    MEstimate,
    RateConstants,
    SummaryRecord,
    bias_bound,
    bias_bound_value,
    divergence,
    divergence_samples,
    empirical_bias,
    estimate_M,
    fit_theorem5_omega,
    lemma4_residuals,
    lemma5_floor,
    lemma7_check,
    monte_carlo_divergence,
    rate_constants,
    reference_optimum,
    theorem4_envelopes,
    theorem5_envelope,
)
from .dosp import (
    AlgoConfig,
    IterationRecord,
    RunState,
    RunTrace,
    SineParams,
    StreamBundle,
    default_record_ks,
    project,
    run,
    step_dosp,
    step_dosp_incomplete,
    step_exact_gradient_baseline,
    step_sine_baseline,
    streams,
)
from .exchange import (
    ExchangeModel,
    incomplete_estimate,
    lemma3_enumeration_oracle,
    q_nonempty,
    sample_masks,
    sample_subsets,
)
from .objectives import (
    ObjectiveModel,
    PowerControlPF,
    PowerControlSumRate,
    QuadraticToy,
    make_objective,
)
from .perturbation import PerturbationModel, moments, sample_array, sample_vector
from .schedules import (
    A4Report,
    PowerLawSchedule,
    RateDiagnostics,
    chi,
    rate_diagnostics,
    theorem5_condition,
    validate_a4,
    varpi,
)

__version__ = "0.1.0"
