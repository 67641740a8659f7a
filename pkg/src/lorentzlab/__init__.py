"""lorentzlab: forced Sinai billiards (periodic Lorentz gas) at desk scale.

Simulates the collision map T_P = twist o flight-with-force o reflection on
the two-torus with disk scatterers and estimates its steady-state transport
statistics: currents, Kawasaki linear response, Green-Kubo diffusion,
central-limit behavior, Lyapunov spectrum, entropy production, and the
Young fractal dimension of the nonequilibrium steady state.
"""

from .errors import (
    AbortError,
    EmptyTableError,
    EnergyError,
    GrazingError,
    InsufficientDataError,
    LorentzLabError,
    MaxTimeError,
    NotOnBoundaryError,
    OverlapError,
    ParseError,
    RangeError,
    StencilSingularityError,
    StiffnessError,
    TruncationWarning,
    TunnelError,
    ValidationError,
    WindowError,
)
from .geometry import (
    BoundaryPoint,
    GeometryTable,
    HorizonReport,
    Scatterer,
    boundary_point,
    build_table,
    check_finite_horizon,
    locate_r,
    min_gap,
)
from .forces import (
    CurvatureData,
    ForceModel,
    TwistModel,
    curvature,
    flow_reversibility,
    force_vector,
    jacobian_G,
    speed,
    twist_apply,
    twist_reversibility,
)
from .flight import (
    FlightResult,
    FlowState,
    IntegratorConfig,
    elastic_reflect,
    from_collision_coords,
    integrate_flight,
    to_collision_coords,
)
from .pmap import (
    CollisionRecord,
    H_value,
    JacobianCheck,
    jacobian_TF,
    jacobian_TP,
    reversibility_identity,
    step,
)
from .stats import (
    CltReport,
    CurrentEstimate,
    DiffusionEstimate,
    OrbitSummary,
    ResponseEstimate,
    SpectrumEstimate,
    Sigma2HEstimate,
    SweepResult,
    clt_test,
    dimension,
    equidistribution_test,
    estimate_current_flow,
    estimate_current_map,
    green_kubo_D,
    kawasaki_sigma,
    linear_response_sweep,
    lyapunov_spectrum,
    reversal_pairing,
    run_orbit,
    sample_mu0,
    sigma2_H,
    slip_corrected_flow_current,
)
from .cli import ExperimentConfig, parse_config, run_subcommand

__version__ = "0.1.0"
