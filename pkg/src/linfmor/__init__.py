"""Locally optimal L-infinity model order reduction for descriptor systems."""

from .errors import (BracketInvalid, DecompositionFailure, DefectiveEigenstructure,
                     DimensionMismatch, Infeasible, InitFailure, LineSearchFailure,
                     LinfMorError, NoFinite, NonFiniteObjective, NumericalError,
                     ParseError, SingularE, SingularPencil, Unbounded, UnstableSystem,
                     UsageError)
from .framework import (FrameworkOptions, IterationRow, ReductionReport,
                        StabilityOptions, local_optimality_probe, reduce)
from .initialization import (DominantPole, balanced_truncation, dominant_poles,
                             initial_subspaces, to_canonical)
from .linf import LinfOptions, LinfResult, linf_norm, local_max_refine
from .objective import ObjectiveEval, error_curve, full_error, reduced_objective
from .optimize import (BfgsOptions, BfgsTrace, ConstraintEval, barrier_objective,
                       bfgs_minimize, spectral_abscissa, weak_wolfe_linesearch)
from .projection import (ProjectionBasis, RefineResult, expansion_directions,
                         orthonormalize_append, petrov_galerkin, refine)
from .system import (DescriptorSystem, ReducedSystem, SingularTriplet, as_response,
                     error_sigma, frequency_response, pack, param_length, poles,
                     reduced_response, reduced_transfer_eval, shifted_solve,
                     transfer_eval, unpack)

__version__ = "0.1.0"
