"""Threshold regularisation for discrete linear inverse problems with
non-monotonic binary filters, exact oracle risks and Monte Carlo
certification of the accompanying oracle inequalities."""

from .errors import (CertificateViolated, ConfigError, DegenerateSignal, DimensionMismatch,
                     RankDeficient, SpecFilterError, UnknownEstimator, UnknownFamily,
                     ZeroObservedEigenvalue)
from .filters import (FilterVector, ModelSet, ThresholdParams, apply_filter, penalized_criterion,
                      spectral_cutoff, threshold_params, threshold_select, tikhonov, ure_select)
from .montecarlo import (ExperimentConfig, NoiseSpec, RiskEstimate, draw_noise, estimate_risk,
                         run_experiment, verify_tail_certificate)
from .noisy_operator import (ConditionalContext, NoisySpectrum, TailCertificate2, conditional_noise_power,
                             conditional_oracle, conditional_risk, lemma3_bounds, lemma4_truncation,
                             m_set, noisy_sequence, noisy_threshold_select, theorem2_bound)
from .oracles import (BoundReport, RiskDecomposition, exact_filter_risk, exact_model_risk,
                      factor_two_check, lemma1_bounds, oracle_filter, oracle_model, theorem1_bound)
from .sequence_model import (ProblemInstance, SequenceObservation, SingularSystem,
                             build_singular_system, noise_variances, synthesize, to_sequence)

__version__ = "0.1.0"
