"""Device-free localization from mmWave beam-sweep SNR frames.

Sector responses are modeled as ``y = A h`` over an angular grid; ``A`` is
refined by EM calibration, ``h`` is recovered per frame by sparse solvers,
and the bearings of two devices are triangulated into positions.
"""

from .aoa import AoAEstimate, MSLConfig, detect_peak, frames_to_aoa, ms_lasso, scale_weights
from .beam import (
    AngularGrid,
    BeamFrame,
    DevicePose,
    MeasurementMatrix,
    Session,
    Trajectory,
    angular_profile,
    bearing,
    make_grid,
    preprocess_session,
)
from .calibration import CalibrationSet, EMConfig, EMState, run_em
from .errors import (
    BehindDevice,
    ConvergenceWarning,
    DegenerateGeometry,
    FormatError,
    InvalidArgument,
    MMWiLocError,
    NoDetection,
    NoIntersection,
    NumericalFailure,
)
from .locate import PairingConfig, PositionFix, build_trajectory, pair_streams, triangulate
from .metrics import EvalConfig, SessionMetrics, error_cdf, session_metrics
from .solvers import SolverConfig, elastic_net_cd, kkt_violation, lasso_cd, omp
from .synth import ScenarioConfig, gen_session, gen_trajectory, truth_dictionary

__version__ = "0.1.0"
