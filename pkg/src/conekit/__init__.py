"""conekit: projections, boundary measures, and distances for convex cones.

Everything user-facing is re-exported flat: cone constructors and parsing,
metric projection with face-degree accounting, Gaussian Monte Carlo
estimators of boundary measures, the deterministic coefficient quadrature
they are checked against, and the two distances (angular Hausdorff between
cones, bounded-Lipschitz between empirical measures).
"""
from .cones import (ANGLE_SLACK, MEMBERSHIP_RTOL, BiconicError, BiconicSet,
                    CircularCone, Cone, ConeError, ConeParseError, DualCone,
                    PolyhedralCone, SubspaceCone, ambient_dim, biconic_all,
                    cap_product, circular, cone_hash, custom_biconic,
                    describe, dual, is_full_space, make_cone, orthant,
                    parse_cone_file, parse_cone_spec, parse_cone_text,
                    positive_dimension, rays, rotated, subspace)
from .measures import (BLOCK, STREAM_A, STREAM_B, STREAM_MAIN,
                       EmpiricalConicMeasure, EstimationError,
                       IntrinsicVolumeEstimate, InversionEstimate,
                       empirical_support_measure, gaussian_sample,
                       gaussian_stream, intrinsic_volumes_mc, local_rhs_mc,
                       local_parallel_mass, omega_extremes, phi_f_mc,
                       steiner_rhs_mc, support_measure_via_inversion)
from .metrics import (AngularHausdorffOptions, MetricError, angular_hausdorff,
                      dbl_distance, dbl_metric_axioms_check, holder_experiment,
                      polarity_isometry_check)
from .projection import (ProjectionError, ProjectionResult, angular_distance,
                         angular_distance_batch, contains, contains_batch,
                         face_dimension, face_dims_batch,
                         in_angular_parallel_set, lemma_projection_stability,
                         project, project_batch, projection_homogeneity_check,
                         stability_scan)
from .reporting import CheckReport, DistanceReport, MCEstimate, fmt12
from .steiner import (InversionCoeffs, SteinerError, SteinerTable,
                      TaggedFunction, I_coeff, I_vector, build_steiner_table,
                      default_lambda_grid, f_moment, f_norm_sq_cone,
                      f_norm_sq_polar, f_one, f_steiner_indicator, g_coeff,
                      inversion_coeffs, local_steiner_check,
                      master_steiner_check, omega_const, parse_f_tag)

__version__ = "0.1.0"
