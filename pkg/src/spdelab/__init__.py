"""spdelab: spectral Monte Carlo laboratory for reaction-diffusion SPDEs
driven by colored noise.

Simulates mild solutions on [0, pi]^d with an exponential-Euler scheme and
exact per-mode convolution noise, evaluates the transition semigroup, its
probabilistic gradients, the resolvent and evolution mild solutions, and
measures Hoelder/Zygmund regularity exponents across dyadic scales.
"""

__version__ = "0.1.0"

from .domain import (DIRICHLET, NEUMANN, DomainError, DomainSpec, SpectralField,
                     analyze, color_multiplier, eigenvalue, heat_multiplier,
                     sup_norm, synthesize)
from .functions import (TestFunction, bounded_rough, constant, cylindrical_cosine,
                        cylindrical_holder, cylindrical_lipschitz, tent)
from .noise import (ConvolutionState, NoiseStream, convolution_step,
                    convolution_variance, ou_step_factors, wiener_increments)
from .reaction import (CoefficientFn, DissipativityCertificate, ReactionError,
                       ReactionSpec, eval_b, identity_minus_cube,
                       nemytskii_apply, sup_b_prime, validate_dissipativity)
from .regularity import (RegularityReport, holder_profile, schauder_predictions,
                         verify_schauder, zygmund_profile)
from .semigroup import (QuadratureBudget, ResolventEstimate, SemigroupEstimate,
                        bel_gradient, bel_second_difference, estimate_Pt,
                        evolution_mild, gradient_decay_probe, resolvent,
                        resolvent_gradient)
from .solver import (BlowUpError, SolverConfig, TrajectoryState,
                     dissipative_bound_probe, initial_state, run_pair,
                     run_recorded, step)
