"""Between-collision flight: event-located ODE integration and reflection.

The flight ODE on the invariant level set is

    x' = p cos(theta),  y' = p sin(theta),  theta' = p h,

with h the signed trajectory curvature of the force model; the quadrature
of integral_phtheta = int p * dh/dtheta dt rides along as a fourth state
component so the final partial step carries full integrator accuracy.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K
from .errors import GrazingError, MaxTimeError, StiffnessError, TunnelError
from .forces import F_ZERO
from .geometry import BoundaryPoint, boundary_point, locate_r


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    event_tol: float = 1e-11
    max_time: float = 10.0
    grazing_tol: float = 1e-9
    tangential_tol: float = 1e-6  # |s| > 1 - tol flags a near-tangential hit


@dataclass(frozen=True)
class FlowState:
    x: float
    y: float
    theta: float
    cell: tuple = (0, 0)

    @property
    def frac(self):
        """Position reduced to the unit cell."""
        return (self.x % 1.0, self.y % 1.0)

    @property
    def direction(self):
        return (math.cos(self.theta), math.sin(self.theta))


@dataclass(frozen=True)
class FlightResult:
    tau: float
    end_state: FlowState
    hit: BoundaryPoint
    displacement: tuple
    integral_phtheta: float
    incidence_s: float
    tangential: bool


_STATUS_ERRORS = {
    K.MAXTIME: MaxTimeError,
    K.STIFF: StiffnessError,
    K.TUNNEL: TunnelError,
}


def _raise_status(status, context):
    exc = _STATUS_ERRORS.get(status)
    if exc is not None:
        raise exc(context)
    if status == K.GRAZING:
        raise GrazingError(context)


def integrate_flight(start, force, table, cfg=IntegratorConfig(),
                     force_integrator=False):
    """Fly from `start` to the first collision.

    Zero-force flights take the closed-form ray path unless
    `force_integrator` is set (used to cross-check the adaptive stepper
    against exact lines).
    """
    centers, radii, offs, L, mgap = K.table_args(table)
    fk, fp, pmax = K.force_args(force)
    x0, y0, th0 = start.x, start.y, start.theta

    # identify a launch image to exclude from event detection until armed
    dmin, bi, bmx, bmy, _ = K._min_dist(centers, radii, x0, y0, -1, 0, 0, True)
    if dmin < -cfg.event_tol * 10:
        raise TunnelError(f"start point penetrates scatterer {bi} by {-dmin:.3g}")
    li, lmx, lmy = (bi, bmx, bmy) if dmin < 1e-9 else (-1, 0, 0)

    if fk == F_ZERO and not force_integrator:
        vx, vy = math.cos(th0), math.sin(th0)
        t, hi, hmx, hmy = K._ray_first_hit(centers, radii, x0, y0, vx, vy,
                                           cfg.max_time)
        if hi < 0:
            raise MaxTimeError(f"no collision within {cfg.max_time} from {start}")
        xe, ye, the, integral = x0 + vx * t, y0 + vy * t, th0, 0.0
        tau = t
    else:
        sched = np.empty(K.MAX_SCHED)
        status, tau, xe, ye, the, integral, hi, hmx, hmy, _, _ = K._flight(
            fk, fp, centers, radii, mgap, pmax, x0, y0, th0, li, lmx, lmy,
            cfg.rel_tol, cfg.abs_tol, cfg.event_tol, cfg.max_time, sched, -1
        )
        _raise_status(status, f"flight from {start}")

    hit_pos = (xe - hmx, ye - hmy)  # reduce the hit to the unit-cell image
    r = locate_r(table, hi, hit_pos, tol=1e-6)
    hit = boundary_point(table, r)
    # incidence angle of the incoming direction against the wall normal
    nx, ny = hit.inward_normal
    s_in = math.cos(the) * ny - math.sin(the) * nx
    tangential = abs(s_in) > 1.0 - cfg.tangential_tol
    end = FlowState(xe, ye, the, (int(math.floor(xe)), int(math.floor(ye))))
    return FlightResult(
        tau=float(tau),
        end_state=end,
        hit=hit,
        displacement=(xe - x0, ye - y0),
        integral_phtheta=float(integral),
        incidence_s=float(s_in),
        tangential=tangential,
    )


def elastic_reflect(incidence, hit, grazing_tol=1e-9):
    """Specular reflection v -> v - 2(n.v)n at the hit point."""
    nx, ny = hit.inward_normal
    vx, vy = incidence.direction
    ndotv = nx * vx + ny * vy
    if abs(ndotv) < grazing_tol:
        raise GrazingError(f"|n.v| = {abs(ndotv):.3g} at r = {hit.r}")
    if ndotv > 0:
        raise ValueError("elastic_reflect expects an incoming direction (n.v < 0)")
    wx = vx - 2.0 * ndotv * nx
    wy = vy - 2.0 * ndotv * ny
    return replace(incidence, theta=math.atan2(wy, wx) % (2.0 * math.pi))


def to_collision_coords(state, hit):
    """(r, s) of an outgoing state: s = v . t_cw, the sine of the exit angle."""
    nx, ny = hit.inward_normal
    vx, vy = state.direction
    if nx * vx + ny * vy < 0:
        raise ValueError("to_collision_coords expects an outgoing direction")
    s = vx * ny - vy * nx
    return (hit.r, float(min(1.0, max(-1.0, s))))


def from_collision_coords(table, force, r, s):
    """Outgoing FlowState at (r, s); inverse of to_collision_coords."""
    centers, radii, offs, L, _ = K.table_args(table)
    _, x, y, th = K._from_coords(centers, radii, offs, float(r), float(s))
    return FlowState(x, y, th % (2.0 * math.pi),
                     (int(math.floor(x)), int(math.floor(y))))
