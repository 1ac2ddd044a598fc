"""Port-based thermodynamic systems on the symplectized phase space.

Build state manifolds from generating functions, lift them homogeneously,
validate Hamiltonian dynamics against the energy-conservation and
entropy-production constraints, compose systems through power and
entropy-flow ports, construct Lyapunov candidates from conserved quantities
and availability functions, and simulate the reduced dynamics with
invariant monitoring.
"""

from .calculus import (DNum, ScalarField, euler_residual, gradient,
                       homogeneity_scale_check, poisson_bracket, scalar_value)
from .core import (ENERGY, ENTROPY, CoextensivePoint, ExtensivePoint,
                   PhaseChart, PhasePoint, StateManifold, intensives, lift,
                   liouville_defect, membership_residual, rescale, sample_base)
from .dynamics import (InputSignal, InvariantReport, Trajectory, integrate,
                       monitor, reduced_vector_field)
from .errors import (CompositionError, ConfigError, ConservationError,
                     DomainError, DomainExit, EvalError, GaugeError,
                     ParseError, PortThermoError, StepSizeUnderflow,
                     ValidationError)
from .exprlang import as_field, evaluate, free_variables, parse, pretty
from .interconnect import (ComposedSystem, FeedbackLaw, compose_entropy,
                           compose_power, make_damper)
from .rng import Xoshiro256
from .scenarios import (SCENARIOS, ClosedLoopBundle, ScenarioBundle,
                        build_controller, build_crn, build_heat_compartment,
                        build_heat_exchanger, build_ideal_gas,
                        build_mass_spring, build_scenario,
                        closed_loop_mass_spring, conduction_law,
                        crn_total_species)
from .stability import (ConservationCheck, ConservedQuantity, LyapunovReport,
                        PointTransformation, apply_transform, availability,
                        availability_field, check_conserved,
                        lyapunov_certificate, point_transformation,
                        transform_system, verify_canonical)
from .system import (CheckResult, ControlHamiltonian, PortThermoSystem,
                     Tolerances, ValidationReport, entropy_output,
                     equilibrium_residual, power_output, require_valid,
                     validate)

__version__ = "0.1.0"
