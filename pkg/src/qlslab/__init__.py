"""qlslab: a numerical laboratory for the quasilinear Schrödinger equation

    i phi_t + lap phi + phi lap(|phi|^2) + |phi|^(p-1) phi = 0.

The library computes standing-wave ground states, solves mass-constrained
energy minimization, time-evolves initial data with conservation and virial
diagnostics, and measures the variational identities (dilation, Nehari,
virial) that organize the stability and blow-up theory of the model.
"""

from .fields import (Grid, Field, ModelParams, DomainTruncationError,
                     line_grid, radial_grid, sphere_area,
                     laplacian, gradient, integrate, h1_inner, h1_norm,
                     save_field, load_field)
from .functionals import (FunctionalReport, BoundaryLeakWarning,
                          mass, kinetic, quasilinear, quasilinear_pointwise,
                          potential, energy, action, virial_q, pohozaev,
                          nehari, variance, variance_rate, gn_decomposition,
                          report)
from .dual import (amplitude_to_dual, amplitude_to_dual_prime,
                   dual_to_amplitude, dual_to_amplitude_prime,
                   semilinear_rhs, semilinear_rhs_prime, semilinear_potential,
                   dual_action, dual_pohozaev, DualPair)
from .groundstate import (GroundState, CertificateError,
                          solve_ground_state_1d, solve_ground_state_radial,
                          fit_decay_rate, rescale, find_sigma0,
                          peak_amplitude_1d)
from .massmin import (MassMinimizer, minimize_at_mass, discrete_energy,
                      discrete_energy_gradient, critical_mass,
                      subadditivity_check, scaling_energy_curve,
                      plateau_negativity_probe)
from .evolution import (EvolutionConfig, TrajectoryRecord, StepFailureError,
                        evolve, rk4_step, scheme_energy, orbit_distance,
                        instability_run, stability_run, gaussian_data)
from .verify import run_battery, format_matrix

__version__ = "0.1.0"
