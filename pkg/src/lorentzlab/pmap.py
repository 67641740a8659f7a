"""The forced collision map T_P = G o T_F on M = [0, L) x [-1, 1].

One step is: lift (r, s) to an outgoing state, fly under the force to the
next collision, reflect specularly, read off (r1, s1), then apply the twist
to get (rbar, sbar). The per-step displacement includes the twist's slip
chord along the scatterer circle. Jacobians come in two routes: an analytic
one, det DT_P = J_G(r1, s1) * exp(integral of p h_theta dt), and a
finite-difference one used to verify it.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import (
    GrazingError,
    MaxTimeError,
    StencilSingularityError,
    StiffnessError,
    TunnelError,
)
from .flight import IntegratorConfig
from .forces import TwistModel

FD_STEP = 1e-6


@dataclass(frozen=True)
class CollisionRecord:
    pre: tuple
    post_elastic: tuple
    post: tuple
    tau: float
    delta: tuple
    delta_F: tuple
    integral_phtheta: float
    log_jac_TF: float
    jac_G: float
    log_jac_TP: float
    H: float
    tangential: bool


@dataclass(frozen=True)
class JacobianCheck:
    analytic: float
    numeric: float
    tau: float

    @property
    def relative_error(self):
        return abs(self.numeric - self.analytic) / abs(self.analytic)


def _pair_epsilon(force, twist):
    return max(force.epsilon, twist.epsilon)


def _raise_step_status(status, r, s):
    if status == K.GRAZING:
        raise GrazingError(f"tangential collision from (r={r}, s={s})")
    if status == K.MAXTIME:
        raise MaxTimeError(f"no collision from (r={r}, s={s})")
    if status == K.STIFF:
        raise StiffnessError(f"step size underflow from (r={r}, s={s})")
    if status == K.TUNNEL:
        raise TunnelError(f"penetration detected from (r={r}, s={s})")


def step(r, s, force, twist, table, cfg=IntegratorConfig()):
    """One collision step of T_P; returns the full CollisionRecord."""
    centers, radii, offs, L, mgap = K.table_args(table)
    fk, fp, pmax = K.force_args(force)
    tk, tp = K.twist_args(twist)
    sched = np.empty(K.MAX_SCHED)
    out = K._step(fk, fp, tk, tp, centers, radii, offs, L, mgap, pmax,
                  float(r), float(s), cfg.rel_tol, cfg.abs_tol, cfg.event_tol,
                  cfg.max_time, cfg.grazing_tol, sched, -1)
    _raise_step_status(out[0], r, s)
    (_, r1, s1, rb, sb, tau, dx, dy, dxF, dyF, integ, ghat, _, _) = out
    eps = _pair_epsilon(force, twist)
    H = (1.0 - math.exp(integ) - ghat) / eps if eps > 0 else 0.0
    return CollisionRecord(
        pre=(float(r), float(s)),
        post_elastic=(r1, s1),
        post=(rb, sb),
        tau=tau,
        delta=(dx, dy),
        delta_F=(dxF, dyF),
        integral_phtheta=integ,
        log_jac_TF=integ,
        jac_G=1.0 + ghat,
        log_jac_TP=integ + math.log1p(ghat),
        H=H,
        tangential=abs(s1) > 1.0 - cfg.tangential_tol,
    )


def jacobian_TF(r, s, force, table, cfg=IntegratorConfig(), fd_step=FD_STEP):
    """Analytic vs finite-difference det DT_F at (r, s).

    The analytic value is exp(integral of p h_theta dt); the numeric one is
    the determinant of a central-difference 2x2 matrix whose stencil legs
    replay the base flight's step schedule.
    """
    centers, radii, offs, L, mgap = K.table_args(table)
    fk, fp, pmax = K.force_args(force)
    tk, tp = K.twist_args(TwistModel.identity())
    sched = np.empty(K.MAX_SCHED)
    st, m11, m12, m21, m22, _, _, tau, integ, _ = K._tangent_step(
        fk, fp, tk, tp, centers, radii, offs, L, mgap, pmax,
        float(r), float(s), fd_step, False,
        cfg.rel_tol, cfg.abs_tol, cfg.event_tol, cfg.max_time, cfg.grazing_tol,
        sched,
    )
    if st == 1:
        raise GrazingError(f"base step failed at (r={r}, s={s})")
    if st == 2:
        raise StencilSingularityError(
            f"stencil at (r={r}, s={s}) straddles a singularity"
        )
    return JacobianCheck(
        analytic=math.exp(integ), numeric=m11 * m22 - m12 * m21, tau=tau
    )


def jacobian_TP(r, s, force, twist, table, cfg=IntegratorConfig()):
    """J_P = J_G(r1, s1) * exp(integral of p h_theta dt)."""
    rec = step(r, s, force, twist, table, cfg)
    return rec.jac_G * math.exp(rec.integral_phtheta)


def H_value(r, s, force, twist, table, cfg=IntegratorConfig(), linearized=False):
    """The response kernel H(r, s) = (1 - exp(int p h_th dt) - ghat(r1, s1)) / eps.

    `linearized` returns -(int p h_th dt)/eps instead, the Gaussian-thermostat
    form used by the isokinetic/constant-field propositions.
    """
    eps = _pair_epsilon(force, twist)
    if eps <= 0:
        raise ValueError("H requires a forced pair (eps > 0)")
    rec = step(r, s, force, twist, table, cfg)
    if linearized:
        return -rec.integral_phtheta / eps
    return rec.H


def reversibility_identity(r, s, force, twist, table, cfg=IntegratorConfig(),
                           naive=False):
    """Pointwise residual of the composed map's time reversibility.

    The physical reversal of T_P = G o T_F is I o G^-1 o T_F^-1 o I, so a
    reversible pair satisfies T_P(I(T_F(G(x)))) = I(x); that residual is
    returned (0 up to integration error for reversible pairs, bounded away
    from 0 for e.g. even slips). `naive` instead evaluates the formal
    reversal residual |T_P(I(T_P(x))) - I(x)|, which coincides with the
    physical one only when the twist commutes with the flight map (e.g. the
    identity twist).
    """
    L = table.total_length
    if naive:
        rec = step(r, s, force, twist, table, cfg)
        rb, sb = rec.post
        rec2 = step(rb, -sb, force, twist, table, cfg)
        r2, s2 = rec2.post
    else:
        from .forces import twist_apply

        ru, su = twist_apply(twist, r, s)
        pre = step(ru, su, force, TwistModel.identity(), table, cfg)  # T_F only
        r1, s1 = pre.post_elastic
        rec2 = step(r1, -s1, force, twist, table, cfg)
        r2, s2 = rec2.post
    dr = abs(r2 - r) % L
    dr = min(dr, L - dr)
    return math.hypot(dr, s2 + s)
