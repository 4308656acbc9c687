"""Least-energy solutions of block-coupled elliptic systems via block-wise Nehari scaling."""
from .discretize import (BlockFunction, DiscreteDomain, DomainDescriptor, assemble, energy, energy_gradient,
                         mixed_integral, norm_sq, smallest_eigenvalue)
from .model import (BlockPartition, ConditionConstants, ConditionReport, CouplingMatrix, InstanceError,
                    ProblemSpec, check_b2, check_coercivity, estimate_constants, load_instance, make_spec,
                    spec_from_dict, validate_b1)
from .nehari import (NehariCoefficients, NehariScales, OutsideDomainError, ScaleSolveError, coefficients,
                     project_to_nehari, psi, psi_gradient, solve_scales)

__version__ = "0.1.0"
