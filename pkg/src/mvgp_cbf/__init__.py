"""Safe control of control-affine systems with matrix variate GP dynamics models."""
from ._core import BACKEND_NAME, HAVE_EXT
from .cogp import CoGPModel, cogp_condition, cogp_predict
from .config import ConfigError, ScenarioConfig, load_config, parse_config, preset
from .controller import (ControllerParams, ControlSpecs, PolicyResult, build_socp_rd1, build_socp_rdr,
                         cantelli_coeff, gaussian_coeff, pole_placement_gains, policy_step)
from .kernels import MatrixKernelParams, RbfKernel
from .lie import (AffineQuadMoments, BarrierSpec, LyapunovSpec, cbc1_moments, cbc2_moments,
                  cbc_moments, clc_moments, eta)
from .moments import (GaussianScalar, GaussianVector, IndefiniteMatrix, JointGaussianTriple,
                      gaussian_dot_moments, quad_form_moments)
from .mvgp import Dataset, DatasetFormatError, MVGPModel, condition, predict_F, predict_Fu, variance_weighted_error
from .socp import Cone, SOCProblem, SOCSolution, Status, solve
from .systems import run_closed_loop
from .trigger import RegionBox, lipschitz_analytic, lipschitz_numeric, tau_rd1, tau_rdr

__version__ = "0.1.0"
