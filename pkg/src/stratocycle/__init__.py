"""Monte Carlo engine for Stratonovich diffusions on the sphere and the
flat torus: path simulation, line integrals of 1-forms, asymptotic
cycle estimation, occupation-measure diagnostics, and Lyapunov 1-form
verification."""

__version__ = "0.1.0"

from .catalog import (sphere_height_diffusion, torus_brownian,
                      torus_drift_only, torus_gradient_diffusion,
                      torus_shear_diffusion)
from .cycles import (CycleEstimate, FluctuationReport, estimate_J,
                     estimate_cycle, fluctuation_experiment)
from .forms import (OneForm, PathIntegral, basis_forms, combine,
                    decompose_integral, exact_form, line_integral, torus_dx,
                    torus_dy, user_form)
from .generator import (GeneratorReport, MartingaleTestReport,
                        apply_generator, generator_function,
                        generator_report, martingale_residual_test,
                        stratonovich_symbol, symbol_function)
from .geometry import (ManifoldPoint, ScalarField, Sphere, TangentVector,
                       Torus2, VectorFieldSpec, eval_field, gradient_of,
                       project_sphere, scalar_field, sphere_height_gradient,
                       torus_sin_cos, torus_unit, user_field, user_scalar,
                       wrap_torus)
from .lyapunov import (DecreaseEstimate, LyapunovCheckReport, TailBoundReport,
                       check_lyapunov, estimate_f, tail_bound_experiment,
                       tail_bound_sweep, wilson_interval)
from .measures import (CoherenceReport, InvariantResidual, MeasureEstimate,
                       SphereBands, TorusGrid, coherence_check,
                       default_binning, occupation_from_ensemble,
                       occupation_measure, point_mass, uniform_measure,
                       validate_invariant)
from .regions import RegionSpec, sphere_poles, torus_circles, user_region
from .sde import (DiffusionSpec, EnsembleSpec, SamplePath,
                  coarsen_increments, derive_path_seed, simulate_ensemble,
                  simulate_path, step_stratonovich)
