"""walklab: return-probability decay of low-moment random walks on groups.

Measures with heavy tails (no second moment) on finitely generated groups,
their convolution-power decay computed exactly and by Monte Carlo, and
desk-scale spectral verification of the comparison machinery that links
moment conditions to decay exponents.
"""

__version__ = "0.1.0"

from .asymptotics import FitResult, GroupProfile, fit_decay, group_profile, predicted_exponent
from .convolution import (ReturnRecord, ReturnSeries, convolve, mixture_sup_bound,
                          rational_return_values, return_series)
from .errors import (FitRefusalError, KindMismatchError, NumericError,
                     OutOfRangeError, ResourceLimitError, UnsupportedError,
                     UsageError, WalklabError)
from .groups import FiniteQuotient, Group, lamp_element, parse_group_spec
from .measures import (FiniteMeasure, MixtureSpec, ball_mixture, check_symmetric,
                       dirac, from_atoms, lamplighter_switch, mixture_from_levels,
                       parse_measure_spec, stable_like, subordinate, uniform_ball)
from .montecarlo import (AliasTable, CollisionEstimate, RangeSample, RngStream,
                         collision_return_estimate, range_functional,
                         sample_step_product)
from .scales import (MomentScale, Symbol, WeightKernel, admissibility_constant,
                     custom_kernel, custom_scale, de_bruijn_conjugate, gamma_alpha,
                     identity_symbol, make_moment_scale, moment, parse_scale_spec,
                     pi_psi, power_symbol, psi_from_omega, stable_kernel,
                     weak_moment, xi_zeta)
from .spectral import (QuotientOperator, SpectralProfile, comparison_check,
                       dirichlet_form, functional_calculus, interpolation_check,
                       push_forward, quotient_operator, sandwich_check,
                       spectral_profile, variation_constant)
