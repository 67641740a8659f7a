"""Periodic billiard table: disk scatterers on the unit 2-torus.

The table is Q = T^2 minus a union of open disks with mutually disjoint
closures (checked over lattice translations). The boundary of Q is
parameterized by a single global arclength r in [0, L): each circle is
traversed clockwise starting from its easternmost point, and the circles are
concatenated in list order. The inward normal of Q points radially out of
each disk.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTableError, NotOnBoundaryError, OverlapError, RangeError

_LATTICE_OFFSETS = [(ox, oy) for ox in (-1, 0, 1) for oy in (-1, 0, 1)]

# corridor-critical directions on the square lattice (see check_finite_horizon)
_CORRIDOR_DIRECTIONS = ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0))

HORIZON_SEARCH_LENGTH = 4.0


@dataclass(frozen=True)
class Scatterer:
    """One circular scatterer: center in the unit cell, radius in (0, 0.5)."""

    center: tuple
    radius: float

    @property
    def curvature(self):
        return 1.0 / self.radius

    @property
    def circumference(self):
        return 2.0 * np.pi * self.radius


@dataclass(frozen=True)
class BoundaryPoint:
    scatterer_index: int
    r: float
    position: tuple
    inward_normal: tuple
    curvature: float


@dataclass(frozen=True)
class HorizonReport:
    finite: bool
    tau_max_bound: float
    violating_direction: tuple | None
    n_rays: int


@dataclass(frozen=True)
class GeometryTable:
    """Validated immutable table; all queries on it are pure."""

    scatterers: tuple
    centers: np.ndarray = field(repr=False)   # (n, 2)
    radii: np.ndarray = field(repr=False)     # (n,)
    r_offsets: np.ndarray = field(repr=False)  # (n+1,) cumulative arclength
    total_length: float
    min_gap: float

    @property
    def n_scatterers(self):
        return len(self.scatterers)

    def scatterer_of_r(self, r):
        """Index of the scatterer whose arclength segment contains r."""
        if not (0.0 <= r < self.total_length):
            raise RangeError(f"r = {r!r} outside [0, {self.total_length})")
        i = int(np.searchsorted(self.r_offsets, r, side="right") - 1)
        return min(i, self.n_scatterers - 1)


def _pair_gap(ci, ri, cj, rj, offset):
    d = np.hypot(ci[0] - cj[0] - offset[0], ci[1] - cj[1] - offset[1])
    return d - (ri + rj)


def build_table(scatterer_specs):
    """Build and validate a GeometryTable from (center, radius) pairs.

    Disjointness of closures is checked over lattice offsets {-1,0,1}^2,
    which suffices because radii are < 0.5.
    """
    if not scatterer_specs:
        raise EmptyTableError("at least one scatterer is required")
    scatterers = []
    for center, radius in scatterer_specs:
        radius = float(radius)
        if radius <= 0.0:
            raise RangeError(f"radius must be positive, got {radius}")
        if radius >= 0.5:
            # self-overlap with the nearest lattice image
            i = len(scatterers)
            raise OverlapError(i, i, (1, 0), 1.0 - 2.0 * radius)
        cx, cy = float(center[0]) % 1.0, float(center[1]) % 1.0
        scatterers.append(Scatterer((cx, cy), radius))

    n = len(scatterers)
    centers = np.array([s.center for s in scatterers], dtype=np.float64)
    radii = np.array([s.radius for s in scatterers], dtype=np.float64)

    min_gap = np.inf
    for i in range(n):
        for j in range(n):
            for off in _LATTICE_OFFSETS:
                if i == j and off == (0, 0):
                    continue
                gap = _pair_gap(centers[i], radii[i], centers[j], radii[j], off)
                if gap <= 0.0:
                    raise OverlapError(i, j, off, gap)
                min_gap = min(min_gap, gap)

    r_offsets = np.zeros(n + 1)
    r_offsets[1:] = np.cumsum([s.circumference for s in scatterers])
    return GeometryTable(
        scatterers=tuple(scatterers),
        centers=centers,
        radii=radii,
        r_offsets=r_offsets,
        total_length=float(r_offsets[-1]),
        min_gap=float(min_gap),
    )


def boundary_point(table, r):
    """Boundary data at global arclength r (clockwise, origin at east point)."""
    i = table.scatterer_of_r(r)  # raises RangeError outside [0, L)
    sc = table.scatterers[i]
    alpha = -(r - table.r_offsets[i]) / sc.radius
    nx, ny = np.cos(alpha), np.sin(alpha)
    pos = (sc.center[0] + sc.radius * nx, sc.center[1] + sc.radius * ny)
    return BoundaryPoint(
        scatterer_index=i,
        r=float(r),
        position=pos,
        inward_normal=(nx, ny),
        curvature=sc.curvature,
    )


def locate_r(table, scatterer_index, position, tol=1e-8):
    """Global arclength of a point on the indexed circle (inverse of boundary_point)."""
    sc = table.scatterers[scatterer_index]
    dx = position[0] - sc.center[0]
    dy = position[1] - sc.center[1]
    d = np.hypot(dx, dy)
    if abs(d - sc.radius) > tol:
        raise NotOnBoundaryError(
            f"point {position} is {d:.3g} from center of scatterer "
            f"{scatterer_index} (radius {sc.radius})"
        )
    alpha = np.arctan2(dy, dx)
    r_local = (-alpha) % (2.0 * np.pi) * sc.radius
    if r_local >= sc.circumference:  # guard the wrap at alpha == 0-
        r_local = 0.0
    return float(table.r_offsets[scatterer_index] + r_local)


def min_gap(table):
    """Smallest center distance minus radius sum over pairs and lattice images."""
    return table.min_gap


def _first_ray_hit(table, origin, direction, search_length):
    """Distance to the first scatterer image hit by a straight ray, or inf."""
    ox, oy = origin
    vx, vy = direction
    norm = np.hypot(vx, vy)
    vx, vy = vx / norm, vy / norm
    best = np.inf
    # image window large enough for the search length
    reach = int(np.ceil(search_length)) + 1
    for i in range(table.n_scatterers):
        cx0, cy0 = table.centers[i]
        rad = table.radii[i]
        for mx in range(int(np.floor(ox)) - reach, int(np.floor(ox)) + reach + 1):
            for my in range(int(np.floor(oy)) - reach, int(np.floor(oy)) + reach + 1):
                cx, cy = cx0 + mx, cy0 + my
                qx, qy = ox - cx, oy - cy
                b = qx * vx + qy * vy
                c = qx * qx + qy * qy - rad * rad
                disc = b * b - c
                if disc <= 0.0 or b >= 0.0:
                    continue
                t = -b - np.sqrt(disc)
                if 1e-12 < t < best:
                    best = t
    return best if best <= search_length else np.inf


def check_finite_horizon(table, n_offsets=128, seed=0):
    """Empirical finite-horizon verdict by ray casting.

    Casts rays in the four corridor-critical rational directions at n_offsets
    evenly spaced transversal offsets each, plus n_offsets random
    (direction, offset) pairs. Finite iff every ray hits a scatterer within
    search length 4 (cell units). Not a proof, but for the admitted radii the
    axis and diagonal corridors are the only unbounded-free-path candidates.
    """
    rng = np.random.default_rng(seed)
    tau_max = 0.0
    n_rays = 0
    for dx, dy in _CORRIDOR_DIRECTIONS:
        norm = np.hypot(dx, dy)
        px, py = -dy / norm, dx / norm  # transversal unit vector
        for k in range(n_offsets):
            u = (k + 0.5) / n_offsets  # offsets across one period of the corridor
            origin = (px * u * norm, py * u * norm)
            t = _first_ray_hit(table, origin, (dx, dy), HORIZON_SEARCH_LENGTH)
            n_rays += 1
            if not np.isfinite(t):
                return HorizonReport(False, np.inf, (dx, dy), n_rays)
            tau_max = max(tau_max, t)
    for _ in range(n_offsets):
        theta = rng.uniform(0.0, 2.0 * np.pi)
        origin = rng.uniform(0.0, 1.0, size=2)
        # skip origins inside a scatterer image
        inside = False
        for i in range(table.n_scatterers):
            for off in _LATTICE_OFFSETS:
                if (
                    np.hypot(
                        origin[0] - table.centers[i, 0] - off[0],
                        origin[1] - table.centers[i, 1] - off[1],
                    )
                    < table.radii[i]
                ):
                    inside = True
        if inside:
            continue
        t = _first_ray_hit(
            table, tuple(origin), (np.cos(theta), np.sin(theta)), HORIZON_SEARCH_LENGTH
        )
        n_rays += 1
        if not np.isfinite(t):
            return HorizonReport(False, np.inf, (np.cos(theta), np.sin(theta)), n_rays)
        tau_max = max(tau_max, t)
    return HorizonReport(True, float(tau_max), None, n_rays)
