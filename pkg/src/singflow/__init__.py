"""Homogeneous singular ODEs, their regularizations and post-blowup statistics."""
from .analysis import (GsyncConfig, SRBPrimePoint, SRBPrimeSet, blowup_estimate,
                       blowup_time, explicit_w, gradient_bound, gsync_gradient,
                       gsync_value, predict_post_blowup, scale_map, srb_average,
                       srb_prime_ensemble, sync_error, trapping_bounds)
from .ensemble import (EnsembleResult, Histogram2D, SampleSet, bootstrap_self_distance,
                       histogram2d, l1_distance, pullback_samples, run_ensemble)
from .fields import (ExtendedState, HomogeneousField, LorenzParams, Perturbation,
                     decompose, extended_rhs, lorenz4d_example, lorenz_rhs,
                     make_field, master_slave_rhs, planar_example, singular_rhs,
                     smoothstep, sphere_rhs, stereo_forward, stereo_inverse)
from .integrate import (StepPolicy, Trajectory, detect_crossing, integrate_singular,
                        integrate_sphere, rk4_step)
from .regularize import (EntryEvent, EscapeSample, InnerField, RegularizationSpec,
                         SamplerSpec, continue_from_escape, escape_via_flow, find_entry,
                         random_inner_field, regularized_rhs, sample_escape)

__version__ = "0.1.0"
