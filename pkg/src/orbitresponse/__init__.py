"""Linear response of chaotic maps, sampled along a single orbit.

The pipeline pushes an orthonormal frame of the expanding subspace along an
orbit, pulls the dual co-frame backward, contracts the map's second
derivative into an equivariant divergence covector, shadows it (and the
observable gradient) with the adjoint shadowing operator, and averages the
resulting shadowing + unstable contributions.  Independent oracles (finite
differences, ensemble series, bin transfer operators, brute-force wedge
algebra, and a forward second-order recursion) verify every piece at desk
scale.
"""

from .systems import (SystemDef, make_builtin, validate_system, registry_manifest,
                      with_perturbation, with_observable, zero_perturbation,
                      fd_hessian, UnknownSystemError, ParameterRangeError)
from .orbit import (OrbitData, generate_orbit, empirical_average, dump_orbit,
                    load_orbit, OrbitDivergedError)
from .frames import (TangentFrame, AdjointFrame, FramePair, push_unstable,
                     pull_adjoint, compute_frames, project, lyapunov_exponents,
                     RankCollapseError, TangencyError)
from .divergence import (ScalarSeries, CovectorSeries, VectorSeries,
                         div_v_x, div_v_x_series, div_v_fstar,
                         div_v_fstar_series, wedge_oracle, wedge_oracle_covector)
from .shadowing import (adjoint_shadow, forward_shadow, adjoint_residual,
                        forward_residual)
from .response import (RunConfig, ResponseReport, ResponsePipeline,
                       linear_response, linear_response_multi,
                       shadowing_contribution, unstable_contribution,
                       unstable_density_ratio, unstable_density_ratio_series,
                       tangent_unstable_contribution, equivalence_check,
                       phi_w_series, uc_sweep, dphi_series, CubeDerivative)
from . import oracles

__version__ = "0.1.0"
