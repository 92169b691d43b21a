"""Filtered point-vortex dynamics: smoothing kernels, discretization, integration,
diagnostics and eps-family convergence experiments."""
from .bessel import bessel_k0, bessel_k1
from .convergence import (ConvergenceConfig, ConvergenceReport, GriddedField, SampleGrid,
                          l2_local_diff, run_family, write_report)
from .diagnostics import (BumpTestFunction, DecayReport, DiagnosticsRecord, QuadraticTestFunction,
                          WeakResidualReport, conserved_quantities, decay_bound_check, hamiltonian,
                          vorticity_maximal, weak_residual)
from .discretization import (InitialVorticity, VortexSystem, builtin_initial_data, discretize,
                             discretize_density, discretize_sheet)
from .dynamics import IntegratorConfig, NumericalAbort, Trajectory, integrate, rhs, velocity_field
from .kernels import (AdmissibilityReport, SmoothingKernel, check_admissibility, eval_G_eps,
                      eval_K_eps, load_kernel, make_alpha_kernel, make_blob_kernel,
                      make_custom_kernel, make_unfiltered_kernel, radial_mass)

__version__ = "0.1.0"
