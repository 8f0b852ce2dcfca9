"""Warm-started Hamiltonian Monte Carlo.

Integrators (leapfrog, OBABO, OBABCO, idealised OHO), Metropolised and
unadjusted samplers, a two-phase warm-start pipeline, a proximal wrapper for
weakly convex targets, exact Gaussian law propagation and numerical checks
of the underlying contraction and concentration estimates.
"""

__version__ = "0.1.0"

from .core import (INFINITE_DIVERGENCE, PhasePoint, RegularityMeta, RngStream, chi_squared_gaussian,
                   hamiltonian, initialization_renyi_bound, is_infinite_divergence, renyi_gaussian)
from .estimators import MetropolisHMC, ProximalSampler, TwoPhaseSampler, UnadjustedLangevin
from .gaussian_exact import GaussianPhaseLaw, affine_of_scheme, propagate, warmstart_iterations
from .integrators import (FrictionParams, LeapfrogParams, exact_hamiltonian_flow, leapfrog_flow, o_step,
                          obabco_step, obabo_step, oho_step, reference_hamiltonian_flow, shooting_momentum)
from .potentials import (PotentialOracle, make_gaussian, make_logcosh_perturbed, proximal_oracle,
                         proximal_shift)
from .samplers import (ChainRecord, MhmcParams, ScheduleConstants, TwoPhasePlan, mhmc_step, plan_two_phase,
                       proximal_sampler, run_unadjusted, two_phase_sample)

__all__ = [
    "INFINITE_DIVERGENCE", "PhasePoint", "RegularityMeta", "RngStream", "chi_squared_gaussian", "hamiltonian",
    "initialization_renyi_bound", "is_infinite_divergence", "renyi_gaussian",
    "MetropolisHMC", "ProximalSampler", "TwoPhaseSampler", "UnadjustedLangevin",
    "GaussianPhaseLaw", "affine_of_scheme", "propagate", "warmstart_iterations",
    "FrictionParams", "LeapfrogParams", "exact_hamiltonian_flow", "leapfrog_flow", "o_step", "obabco_step",
    "obabo_step", "oho_step", "reference_hamiltonian_flow", "shooting_momentum",
    "PotentialOracle", "make_gaussian", "make_logcosh_perturbed", "proximal_oracle", "proximal_shift",
    "ChainRecord", "MhmcParams", "ScheduleConstants", "TwoPhasePlan", "mhmc_step", "plan_two_phase",
    "proximal_sampler", "run_unadjusted", "two_phase_sample",
]
