"""Flight-force and collision-twist families.

Flight forces are a closed enumeration; each variant carries its own
conserved quantity so the speed is an explicit function p(x, y, theta):

* ``zero``                 -- free flight, p = 1.
* ``conservative``         -- F = -grad U for the built-in potential
                              U = A (cos 2πx + cos 2πy), restricted to the
                              energy level E = p^2/2 + U = 1/2, so
                              p = sqrt(1 - 2U).
* ``isokinetic_const``     -- F = eps * v_perp (magnetic-like; p = 1,
                              not time-reversible).
* ``isokinetic_odd``       -- F = eps cosθ * v_perp (odd under θ -> θ+π,
                              time-reversible; p = 1).
* ``thermostatted_const``  -- constant field E0 = eps(e1, e2) with Gaussian
                              thermostat: F = E0 - (E0.v)v on p = 1.
* ``thermostatted_shear``  -- field eps(cos(2πy)/2π, 0) with thermostat
                              (scaled so the C1 norm stays within c*eps).

The twist acts right after the elastic reflection in collision coordinates
(r, s): G(r, s) = (r + g1, s + g2), fixing tangential collisions s = ±1.

* ``identity``
* ``slip_odd``   -- g1 = δ s(1-s^2), g2 = 0 (odd slip; reversible)
* ``slip_even``  -- g1 = δ (1-s^2),  g2 = 0 (even slip; not reversible)
* ``general``    -- g1 = δ1 s(1-s^2) cos(2πr/L), g2 = δ2 s(1-s^2)

All fields are closed-form with analytic partials; finite differences are
used only as cross-checks.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EnergyError, RangeError

TWO_PI = 2.0 * np.pi

# force kind codes (shared with the numba kernels)
F_ZERO = 0
F_CONSERVATIVE = 1
F_ISO_CONST = 2
F_ISO_ODD = 3
F_THERMO_CONST = 4
F_THERMO_SHEAR = 5

_FORCE_NAMES = {
    F_ZERO: "zero",
    F_CONSERVATIVE: "conservative",
    F_ISO_CONST: "isokinetic_const",
    F_ISO_ODD: "isokinetic_odd",
    F_THERMO_CONST: "thermostatted_const",
    F_THERMO_SHEAR: "thermostatted_shear",
}

# twist kind codes
T_IDENTITY = 0
T_SLIP_ODD = 1
T_SLIP_EVEN = 2
T_GENERAL = 3

# documented validator constant for the C1 smallness bound |.| <= c * eps
C1_BOUND_CONSTANT = 2.0

# floor for p_min^2 on the conservative level set
P_MIN_SQ = 1e-2


@dataclass(frozen=True)
class CurvatureData:
    h: float
    dh_dtheta: float


@dataclass(frozen=True)
class ReversibilityReport:
    reversible: bool
    worst_violation: float


@dataclass(frozen=True)
class ForceModel:
    kind: int
    params: np.ndarray  # kind-specific, see factories
    epsilon: float

    @property
    def name(self):
        return _FORCE_NAMES[self.kind]

    # -- factories ---------------------------------------------------------
    @staticmethod
    def zero():
        return ForceModel(F_ZERO, np.zeros(1), 0.0)

    @staticmethod
    def conservative_cosine(amplitude, epsilon, validate=True):
        """Potential U = amplitude * (cos 2πx + cos 2πy) on the level E = 1/2."""
        m = ForceModel(F_CONSERVATIVE, np.array([float(amplitude)]), float(epsilon))
        if validate:
            _validate_force(m)
        return m

    @staticmethod
    def isokinetic_const(epsilon, validate=True):
        m = ForceModel(F_ISO_CONST, np.array([float(epsilon)]), float(epsilon))
        if validate:
            _validate_force(m)
        return m

    @staticmethod
    def isokinetic_odd(epsilon, validate=True):
        m = ForceModel(F_ISO_ODD, np.array([float(epsilon)]), float(epsilon))
        if validate:
            _validate_force(m)
        return m

    @staticmethod
    def thermostatted_const(e1, e2, epsilon, validate=True):
        m = ForceModel(
            F_THERMO_CONST,
            np.array([float(epsilon), float(e1), float(e2)]),
            float(epsilon),
        )
        if validate:
            _validate_force(m)
        return m

    @staticmethod
    def thermostatted_shear(epsilon, validate=True):
        m = ForceModel(F_THERMO_SHEAR, np.array([float(epsilon)]), float(epsilon))
        if validate:
            _validate_force(m)
        return m

    def with_epsilon(self, epsilon, validate=False):
        """Same family rescaled to strength `epsilon` (for response sweeps)."""
        if self.kind == F_ZERO:
            return self
        if self.kind == F_CONSERVATIVE:
            scale = epsilon / self.epsilon if self.epsilon > 0 else 0.0
            return ForceModel.conservative_cosine(
                self.params[0] * scale, epsilon, validate=validate
            )
        params = self.params.copy()
        params[0] = epsilon
        return ForceModel(self.kind, params, float(epsilon))


def speed(model, x, y, theta=0.0):
    """Speed p(x, y, theta) on the invariant level set."""
    if model.kind == F_CONSERVATIVE:
        u = model.params[0] * (np.cos(TWO_PI * x) + np.cos(TWO_PI * y))
        radicand = 1.0 - 2.0 * u
        if radicand < P_MIN_SQ:
            raise EnergyError(
                f"1 - 2U = {radicand:.4g} below p_min^2 = {P_MIN_SQ} at ({x}, {y})"
            )
        return float(np.sqrt(radicand))
    return 1.0


def force_vector(model, x, y, theta):
    """The flight force F = (F1, F2) at a phase point."""
    k = model.kind
    if k == F_ZERO:
        return (0.0, 0.0)
    if k == F_CONSERVATIVE:
        a = model.params[0]
        return (
            TWO_PI * a * np.sin(TWO_PI * x),
            TWO_PI * a * np.sin(TWO_PI * y),
        )
    if k == F_ISO_CONST:
        f = model.params[0]
        return (-f * np.sin(theta), f * np.cos(theta))
    if k == F_ISO_ODD:
        f = model.params[0] * np.cos(theta)
        return (-f * np.sin(theta), f * np.cos(theta))
    if k == F_THERMO_CONST:
        eps, e1, e2 = model.params
        ex, ey = eps * e1, eps * e2
    elif k == F_THERMO_SHEAR:
        ex, ey = model.params[0] * np.cos(TWO_PI * y) / TWO_PI, 0.0
    else:
        raise ValueError(f"unknown force kind {k}")
    vx, vy = np.cos(theta), np.sin(theta)
    alpha = ex * vx + ey * vy  # thermostat multiplier on p = 1
    return (ex - alpha * vx, ey - alpha * vy)


def curvature(model, x, y, theta):
    """Signed trajectory curvature h and its θ-derivative at fixed (x, y).

    h = (-F1 sinθ + F2 cosθ) / p^2; for the p = 1 families this reduces to
    the perpendicular force component.
    """
    k = model.kind
    if k == F_ZERO:
        return CurvatureData(0.0, 0.0)
    if k == F_CONSERVATIVE:
        f1, f2 = force_vector(model, x, y, theta)
        p2 = speed(model, x, y, theta) ** 2
        return CurvatureData(
            (-f1 * np.sin(theta) + f2 * np.cos(theta)) / p2,
            (-f1 * np.cos(theta) - f2 * np.sin(theta)) / p2,
        )
    if k == F_ISO_CONST:
        return CurvatureData(float(model.params[0]), 0.0)
    if k == F_ISO_ODD:
        eps = model.params[0]
        return CurvatureData(eps * np.cos(theta), -eps * np.sin(theta))
    if k == F_THERMO_CONST:
        eps, e1, e2 = model.params
        ex, ey = eps * e1, eps * e2
    elif k == F_THERMO_SHEAR:
        ex, ey = model.params[0] * np.cos(TWO_PI * y) / TWO_PI, 0.0
    else:
        raise ValueError(f"unknown force kind {k}")
    return CurvatureData(
        -ex * np.sin(theta) + ey * np.cos(theta),
        -(ex * np.cos(theta) + ey * np.sin(theta)),
    )


def _validate_force(model, n_samples=512, seed=12345):
    """Sample the A1/A3 bounds: speed in (0, inf), |F| and first derivatives <= c*eps."""
    rng = np.random.default_rng(seed)
    bound = C1_BOUND_CONSTANT * model.epsilon
    d = 1e-6
    for _ in range(n_samples):
        x, y = rng.uniform(0.0, 1.0, size=2)
        th = rng.uniform(0.0, TWO_PI)
        p = speed(model, x, y, th)  # raises EnergyError if A1 fails
        if not (0.0 < p < np.inf):
            raise EnergyError(f"speed {p} out of range at ({x}, {y}, {th})")
        f1, f2 = force_vector(model, x, y, th)
        if np.hypot(f1, f2) > bound + 1e-12:
            raise RangeError(
                f"|F| = {np.hypot(f1, f2):.4g} exceeds c*eps = {bound:.4g} (A3)"
            )
        for (dx, dy, dth) in ((d, 0, 0), (0, d, 0), (0, 0, d)):
            g1p, g2p = force_vector(model, x + dx, y + dy, th + dth)
            g1m, g2m = force_vector(model, x - dx, y - dy, th - dth)
            deriv = np.hypot(g1p - g1m, g2p - g2m) / (2 * d)
            if deriv > bound + 1e-6:
                raise RangeError(
                    f"|dF| = {deriv:.4g} exceeds c*eps = {bound:.4g} (A3)"
                )


@dataclass(frozen=True)
class TwistModel:
    kind: int
    params: np.ndarray
    epsilon: float
    boundary_length: float  # L of the bound table (0 for identity)

    # -- factories ---------------------------------------------------------
    @staticmethod
    def identity():
        return TwistModel(T_IDENTITY, np.zeros(1), 0.0, 0.0)

    @staticmethod
    def slip_odd(delta, table, validate=True):
        m = TwistModel(T_SLIP_ODD, np.array([float(delta)]), abs(float(delta)),
                       table.total_length)
        if validate:
            _validate_twist(m, table)
        return m

    @staticmethod
    def slip_even(delta, table, validate=True):
        m = TwistModel(T_SLIP_EVEN, np.array([float(delta)]), abs(float(delta)),
                       table.total_length)
        if validate:
            _validate_twist(m, table)
        return m

    @staticmethod
    def general(delta1, delta2, table, validate=True):
        m = TwistModel(
            T_GENERAL,
            np.array([float(delta1), float(delta2)]),
            max(abs(float(delta1)), abs(float(delta2))),
            table.total_length,
        )
        if validate:
            _validate_twist(m, table)
        return m


def twist_fields(model, r, s):
    """(g1, g2) at (r, s)."""
    k = model.kind
    if k == T_IDENTITY:
        return (0.0, 0.0)
    if k == T_SLIP_ODD:
        return (model.params[0] * s * (1.0 - s * s), 0.0)
    if k == T_SLIP_EVEN:
        return (model.params[0] * (1.0 - s * s), 0.0)
    if k == T_GENERAL:
        d1, d2 = model.params
        base = s * (1.0 - s * s)
        return (
            d1 * base * np.cos(TWO_PI * r / model.boundary_length),
            d2 * base,
        )
    raise ValueError(f"unknown twist kind {k}")


def twist_partials(model, r, s):
    """(g1_r, g1_s, g2_r, g2_s) at (r, s), analytic."""
    k = model.kind
    if k == T_IDENTITY:
        return (0.0, 0.0, 0.0, 0.0)
    if k == T_SLIP_ODD:
        return (0.0, model.params[0] * (1.0 - 3.0 * s * s), 0.0, 0.0)
    if k == T_SLIP_EVEN:
        return (0.0, -2.0 * model.params[0] * s, 0.0, 0.0)
    if k == T_GENERAL:
        d1, d2 = model.params
        w = TWO_PI / model.boundary_length
        return (
            -d1 * s * (1.0 - s * s) * w * np.sin(w * r),
            d1 * (1.0 - 3.0 * s * s) * np.cos(w * r),
            0.0,
            d2 * (1.0 - 3.0 * s * s),
        )
    raise ValueError(f"unknown twist kind {k}")


def twist_apply(model, r, s):
    """G(r, s) = (r + g1 mod L, s + g2); fixes s = ±1 pointwise."""
    g1, g2 = twist_fields(model, r, s)
    s_out = s + g2
    if not (-1.0 <= s_out <= 1.0):
        raise RangeError(f"twist output s = {s_out} outside [-1, 1]")
    r_out = r + g1
    if model.boundary_length > 0.0:
        r_out %= model.boundary_length
    return (r_out, s_out)


def jacobian_G(model, r, s):
    """(J_G, ghat) with J_G = (1+g1_r)(1+g2_s) - g1_s g2_r, ghat = J_G - 1."""
    g1r, g1s, g2r, g2s = twist_partials(model, r, s)
    ghat = g1r + g2s + g1r * g2s - g1s * g2r
    return (1.0 + ghat, ghat)


def _validate_twist(model, table, n_samples=512, seed=6789):
    """A3 sampling: tangential fixed points, C1 bound, slip smaller than L_i/4."""
    for r in np.linspace(0.0, model.boundary_length, 8, endpoint=False):
        for s in (-1.0, 1.0):
            g1, g2 = twist_fields(model, r, s)
            if abs(g1) > 1e-14 or abs(g2) > 1e-14:
                raise RangeError("twist does not fix tangential collisions (A3)")
    bound = C1_BOUND_CONSTANT * model.epsilon
    max_slip = 0.25 * min(s.circumference for s in table.scatterers)
    rng = np.random.default_rng(seed)
    for _ in range(n_samples):
        r = rng.uniform(0.0, model.boundary_length)
        s = rng.uniform(-1.0, 1.0)
        g1, g2 = twist_fields(model, r, s)
        if abs(g1) >= max_slip:
            raise RangeError(f"slip |g1| = {abs(g1):.4g} exceeds L_i/4 = {max_slip:.4g}")
        if not (-1.0 <= s + g2 <= 1.0):
            raise RangeError("twist pushes s outside [-1, 1]")
        if max(abs(g1), abs(g2)) > bound + 1e-12:
            raise RangeError(f"|g| exceeds c*eps = {bound:.4g} (A3)")
        for pd in twist_partials(model, r, s):
            if abs(pd) > bound + 1e-12:
                raise RangeError(f"|dg| = {abs(pd):.4g} exceeds c*eps = {bound:.4g} (A3)")


def flow_reversibility(model, n_samples=4096, tol=1e-10, seed=1):
    """Check p(x,y,π+θ) = p(x,y,θ) and h(x,y,π+θ) = -h(x,y,θ) on samples."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_samples):
        x, y = rng.uniform(0.0, 1.0, size=2)
        th = rng.uniform(0.0, TWO_PI)
        try:
            dp = abs(speed(model, x, y, np.pi + th) - speed(model, x, y, th))
        except EnergyError:
            continue
        dh = abs(
            curvature(model, x, y, np.pi + th).h + curvature(model, x, y, th).h
        )
        worst = max(worst, dp, dh)
    return ReversibilityReport(worst <= tol, worst)


def twist_reversibility(model, n_samples=4096, tol=1e-10, seed=2):
    """Graph condition of the twist: G(rbar, -sbar) = (r, -s) on samples."""
    rng = np.random.default_rng(seed)
    L = model.boundary_length
    worst = 0.0
    for _ in range(n_samples):
        r = rng.uniform(0.0, L) if L > 0 else 0.0
        s = rng.uniform(-1.0, 1.0)
        rb, sb = twist_apply(model, r, s)
        r2, s2 = twist_apply(model, rb, -sb)
        dr = abs(r2 - r)
        if L > 0:
            dr = min(dr, L - dr)  # compare r modulo L
        worst = max(worst, dr, abs(s2 + s))
    return ReversibilityReport(worst <= tol, worst)
