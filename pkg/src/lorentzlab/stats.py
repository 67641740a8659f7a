"""Ensemble and time-series estimators for the forced Lorentz gas.

Steady-state averages are taken along long orbits after a burn-in
(equidistribution is exponential, so 1e3 collisions dominate the observed
relaxation); response-type quantities are Monte Carlo averages over the
invariant measure mu0 of the unforced map, which in (r, s) coordinates is
plain Lebesgue on [0, L) x [-1, 1]. Confidence intervals use
non-overlapping batch means throughout.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import (
    AbortError,
    GrazingError,
    InsufficientDataError,
    MaxTimeError,
    StiffnessError,
    TruncationWarning,
    TunnelError,
    WindowError,
)
from .flight import IntegratorConfig
from .forces import ForceModel, TwistModel

BURN_IN_DEFAULT = 1000
MAX_LAGS = 200
REC_COLUMNS = ("r", "s", "tau", "dx", "dy", "dxF", "dyF", "H", "logJ")


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class OrbitSummary:
    n: int
    q_n: np.ndarray            # cumulative displacement (2,)
    total_time: float
    rec: np.ndarray            # (n_rec, 9) columns REC_COLUMNS (thinned)
    thin: int
    burn_in: int
    discarded_tangential: int
    epsilon: float
    end: tuple = (0.0, 0.0)    # (r, s) after the last collision

    def col(self, name):
        return self.rec[:, REC_COLUMNS.index(name)]

    @property
    def tau_bar(self):
        return self.total_time / self.n


@dataclass
class CurrentEstimate:
    J: np.ndarray              # (2,)
    stderr: np.ndarray         # (2,)
    n_batches: int
    batch_len: int
    per_time: bool
    tau_bar: float


@dataclass
class ResponseEstimate:
    sigma: np.ndarray          # (2,)
    stderr: np.ndarray         # (2,)
    K: int
    n_mc: int
    terms: np.ndarray          # (K+1, 2) per-k contributions (k=0 half-weighted)
    term_stderr: np.ndarray    # (K+1, 2)
    tail_bound: float
    kernel: str


@dataclass
class DiffusionEstimate:
    D: np.ndarray              # (2, 2)
    stderr: np.ndarray         # (2, 2)
    window: int
    autocov: np.ndarray        # (window+1, 2, 2)
    per_time: bool = False


@dataclass
class SpectrumEstimate:
    lambda_u: float
    lambda_s: float
    se_lambda_u: float
    se_lambda_s: float
    xi_qr: float               # -(lambda_u + lambda_s)
    xi_jac: float              # -<log J_P> along the same orbit
    se_xi: float
    h_pesin: float             # = lambda_u
    n_eff: int
    n_skipped: int
    running: np.ndarray        # (checkpoints, 4): n, sum_log_u, sum_log_s, sum_logJ
    hd: float = float("nan")
    hd_predicted: float = float("nan")
    sigma2_H: float = float("nan")
    h0: float = float("nan")


@dataclass
class CltReport:
    skewness: np.ndarray       # (2,)
    excess_kurtosis: np.ndarray
    covariance: np.ndarray     # (2, 2) of (q - nJ)/sqrt(n)
    m: int
    n: int
    n_failed: int


@dataclass
class Sigma2HEstimate:
    value: float
    stderr: float
    K: int
    terms: np.ndarray          # (K+1,) lag contributions (lag 0 once)
    tail_bound: float


@dataclass
class SweepResult:
    eps: np.ndarray
    J: np.ndarray              # (n_eps, 2)
    stderr: np.ndarray         # (n_eps, 2)
    slope: np.ndarray          # (2,)
    fit_r2: float
    tau_bar: np.ndarray        # (n_eps,)


@dataclass
class EquidistributionCurve:
    observables: tuple
    means: np.ndarray          # (n_push, n_obs)
    stderr: np.ndarray
    reference: np.ndarray      # long-orbit averages (n_obs,)
    rates: np.ndarray          # fitted exponential approach rate per observable


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _pair_epsilon(force, twist):
    return max(force.epsilon, twist.epsilon)


def _raise_orbit_status(status):
    if status == K.MAXTIME:
        raise MaxTimeError("orbit aborted: no collision within the time budget")
    if status == K.STIFF:
        raise StiffnessError("orbit aborted: step size underflow")
    if status == K.TUNNEL:
        raise TunnelError("orbit aborted: penetration detected")
    if status == K.GRAZING:
        raise GrazingError("orbit aborted: tangential retries exhausted")


def _batch_means(series, min_batches=30, min_batch_len=1000):
    """(mean, stderr, n_batches, batch_len) by non-overlapping batch means."""
    n = series.shape[0]
    nb = min(max(n // min_batch_len, 2), 100)
    if nb < min_batches:
        raise InsufficientDataError(
            f"{n} points give {nb} batches of >= {min_batch_len}; need {min_batches}"
        )
    bl = n // nb
    trimmed = series[: nb * bl]
    means = trimmed.reshape(nb, bl, *series.shape[1:]).mean(axis=1)
    se = means.std(axis=0, ddof=1) / math.sqrt(nb)
    return trimmed.mean(axis=0), se, nb, bl


def sample_mu0(table, n=1, rng=None, seed=0):
    """n samples of mu0 = uniform on [0, L) x [-1, 1]."""
    if rng is None:
        rng = np.random.default_rng(seed)
    out = np.empty((n, 2))
    out[:, 0] = rng.uniform(0.0, table.total_length, size=n)
    out[:, 1] = rng.uniform(-1.0, 1.0, size=n)
    return out


def _kernel_args(force, twist, table, cfg):
    fk, fp, pmax = K.force_args(force)
    tk, tp = K.twist_args(twist)
    centers, radii, offs, L, mgap = K.table_args(table)
    cfgv = K.cfg_args(cfg)
    return (fk, fp, tk, tp, centers, radii, offs, L, mgap, pmax), cfgv


# ---------------------------------------------------------------------------
# orbits and currents
# ---------------------------------------------------------------------------

def run_orbit(x0, n, force, twist, table, cfg=IntegratorConfig(),
              burn_in=0, thin=1, abort_frac=1e-3):
    """Iterate the collision map n times past burn_in, recording series.

    Tangential collisions are handled by a counted 1e-7 perturbation of s;
    the orbit aborts if the count exceeds `abort_frac` of n.
    """
    args, cfgv = _kernel_args(force, twist, table, cfg)
    epsH = _pair_epsilon(force, twist)
    n_rec = (n + thin - 1) // thin
    rec = np.empty((n_rec, 9))
    out = K._orbit(*args, epsH, float(x0[0]), float(x0[1]), n, burn_in, thin,
                   *cfgv, rec)
    status, qx, qy, T, nper, mind, r_end, s_end, got = out
    _raise_orbit_status(status)
    if nper > abort_frac * n:
        raise AbortError(f"{nper} tangential perturbations over {n} collisions")
    return OrbitSummary(
        n=n, q_n=np.array([qx, qy]), total_time=T, rec=rec[: int(got)],
        thin=thin, burn_in=burn_in, discarded_tangential=int(nper),
        epsilon=epsH, end=(float(r_end), float(s_end)),
    )


def estimate_current_map(orbit, min_batches=30):
    """J = q_n / n with batch-means errors (per collision)."""
    if orbit.n < 3 * 10**4:
        raise InsufficientDataError("need >= 3e4 collisions for a current estimate")
    steps = orbit.rec[:, 3:5]
    _, se, nb, bl = _batch_means(steps, min_batches=min_batches)
    return CurrentEstimate(
        J=orbit.q_n / orbit.n, stderr=se, n_batches=nb, batch_len=bl,
        per_time=False, tau_bar=orbit.tau_bar,
    )


def estimate_current_flow(orbit, min_batches=30):
    """Jhat = q(t)/t (per unit time); Jhat * tau_bar equals the map current."""
    if orbit.n < 3 * 10**4:
        raise InsufficientDataError("need >= 3e4 collisions for a current estimate")
    steps = orbit.rec[:, 3:5]
    taus = orbit.rec[:, 2]
    # batch-means on the time-normalized batches
    n = steps.shape[0]
    nb = min(max(n // 1000, 2), 100)
    if nb < min_batches:
        raise InsufficientDataError("too few batches")
    bl = n // nb
    bq = steps[: nb * bl].reshape(nb, bl, 2).sum(axis=1)
    bt = taus[: nb * bl].reshape(nb, bl).sum(axis=1)
    ratios = bq / bt[:, None]
    se = ratios.std(axis=0, ddof=1) / math.sqrt(nb)
    return CurrentEstimate(
        J=orbit.q_n / orbit.total_time, stderr=se, n_batches=nb, batch_len=bl,
        per_time=True, tau_bar=orbit.tau_bar,
    )


def slip_corrected_flow_current(orbit, twist):
    """Flow current regrouped as (sum Delta_F + sum slip)/T; equals q(t)/t.

    For the identity twist the slip term is exactly zero. Needs an
    unthinned orbit so the regrouping is an algebraic identity.
    """
    if orbit.thin != 1:
        raise InsufficientDataError("slip regrouping needs an unthinned orbit")
    flight_sum = orbit.rec[:, 5:7].sum(axis=0)
    slip_sum = (orbit.rec[:, 3:5] - orbit.rec[:, 5:7]).sum(axis=0)
    base = estimate_current_flow(orbit)
    J = (flight_sum + slip_sum) / orbit.total_time
    return CurrentEstimate(
        J=J, stderr=base.stderr, n_batches=base.n_batches,
        batch_len=base.batch_len, per_time=True, tau_bar=orbit.tau_bar,
    ), slip_sum


# ---------------------------------------------------------------------------
# Kawasaki response and variance sums
# ---------------------------------------------------------------------------

def _kawasaki_arrays(force, twist, table, cfg, Kmax, n_mc, seed, chunk=20000):
    """Per-sample (H, Dx, Dy, I) at the unforced iterates T_0^k x, k=0..Kmax."""
    args, cfgv = _kernel_args(force, twist, table, cfg)
    epsH = _pair_epsilon(force, twist)
    if epsH <= 0:
        raise ValueError("kawasaki estimators need a forced pair (eps > 0)")
    rng = np.random.default_rng(seed)
    H = np.empty((n_mc, Kmax + 1))
    Dx = np.empty((n_mc, Kmax + 1))
    Dy = np.empty((n_mc, Kmax + 1))
    I = np.empty((n_mc, Kmax + 1))
    bad = np.zeros(n_mc, dtype=np.int64)
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        samples = sample_mu0(table, m, rng=rng)
        stat = np.zeros(m, dtype=np.int64)
        K._kawasaki_chunk(*args, epsH, samples, Kmax, *cfgv,
                          H[done:done + m], Dx[done:done + m],
                          Dy[done:done + m], I[done:done + m], stat)
        bad[done:done + m] = stat
        done += m
    good = bad == 0
    if good.sum() < 0.999 * n_mc:
        raise AbortError(f"{n_mc - good.sum()} of {n_mc} response samples failed")
    return H[good], Dx[good], Dy[good], I[good], epsH


def _choose_K(term_mag, term_se, Kmax, consecutive=3):
    """Smallest k with `consecutive` successive |terms| under 2 stderr."""
    run = 0
    for k in range(1, Kmax + 1):
        if term_mag[k] < 2.0 * term_se[k]:
            run += 1
            if run >= consecutive:
                return k
        else:
            run = 0
    return Kmax


def kawasaki_sigma(force, twist, table, cfg=IntegratorConfig(), K_max=48,
                   n_mc=50000, n_burn=0, seed=0, kernel="nonlinear",
                   arrays=None):
    """Kawasaki linear-response coefficient sigma.

    sigma_a = 1/2 mu0(Delta_aP * H) + sum_{k>=1} mu0[(Delta_aP o T0^k) * H],
    truncated adaptively (2-stderr decay over 3 consecutive lags, hard cap
    K_max <= 200). `kernel` selects the H used: the exact nonlinear one,
    the linearized -(int p h_th dt)/eps, or the constant-field thermostat
    form (e1, e2) . Delta.
    """
    K_max = min(K_max, MAX_LAGS)
    if arrays is None:
        arrays = _kawasaki_arrays(force, twist, table, cfg, K_max, n_mc, seed)
    H, Dx, Dy, I, epsH = arrays
    if kernel == "nonlinear":
        H0 = H[:, 0]
    elif kernel == "linearized":
        H0 = -I[:, 0] / epsH
    elif kernel == "thermo":
        from .forces import F_THERMO_CONST

        if force.kind != F_THERMO_CONST:
            raise ValueError("thermo kernel needs a constant thermostatted field")
        H0 = force.params[1] * Dx[:, 0] + force.params[2] * Dy[:, 0]
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    m = H0.shape[0]
    prod_x = Dx * H0[:, None]
    prod_y = Dy * H0[:, None]
    terms = np.stack([prod_x.mean(axis=0), prod_y.mean(axis=0)], axis=1)
    term_se = np.stack(
        [prod_x.std(axis=0, ddof=1), prod_y.std(axis=0, ddof=1)], axis=1
    ) / math.sqrt(m)
    terms[0] *= 0.5
    term_se[0] *= 0.5
    mag = np.hypot(terms[:, 0], terms[:, 1])
    mag_se = np.hypot(term_se[:, 0], term_se[:, 1])
    Kstar = _choose_K(mag, mag_se, H.shape[1] - 1)
    sigma = terms[: Kstar + 1].sum(axis=0)
    se = np.sqrt((term_se[: Kstar + 1] ** 2).sum(axis=0))
    tail = float(mag[Kstar])
    if tail > 0.05 * max(np.hypot(*sigma), 1e-300):
        warnings.warn(
            f"kawasaki tail {tail:.3g} above 5% of |sigma|", TruncationWarning
        )
    return ResponseEstimate(
        sigma=sigma, stderr=se, K=Kstar, n_mc=m, terms=terms,
        term_stderr=term_se, tail_bound=tail, kernel=kernel,
    )


def sigma2_H(force, twist, table, cfg=IntegratorConfig(), K_max=48,
             n_mc=30000, seed=0, arrays=None):
    """Variance sum sigma^2_H = sum_k mu0[H o T0^k . H] (symmetric in k)."""
    K_max = min(K_max, MAX_LAGS)
    if arrays is None:
        arrays = _kawasaki_arrays(force, twist, table, cfg, K_max, n_mc, seed)
    H = arrays[0]
    m = H.shape[0]
    prods = H * H[:, 0][:, None]
    terms = prods.mean(axis=0)
    term_se = prods.std(axis=0, ddof=1) / math.sqrt(m)
    Kstar = _choose_K(np.abs(terms), term_se, H.shape[1] - 1)
    value = terms[0] + 2.0 * terms[1: Kstar + 1].sum()
    se = math.sqrt(term_se[0] ** 2 + 4.0 * (term_se[1: Kstar + 1] ** 2).sum())
    tail = abs(float(terms[Kstar]))
    if tail > 0.05 * abs(value):
        warnings.warn(
            f"sigma2_H tail {tail:.3g} above 5% of the sum", TruncationWarning
        )
    return Sigma2HEstimate(
        value=float(value), stderr=se, K=Kstar, terms=terms[: Kstar + 1],
        tail_bound=tail,
    )


def linear_response_sweep(force_factory, twist, eps_list, n, table,
                          cfg=IntegratorConfig(), seed=0,
                          burn_in=BURN_IN_DEFAULT):
    """Currents J(eps) over a sweep plus a weighted through-origin fit."""
    eps_list = np.asarray(list(eps_list), dtype=float)
    if eps_list.size < 4 or np.any(eps_list <= 0) or np.any(eps_list > 0.1):
        raise ValueError("need >= 4 epsilon values in (0, 0.1]")
    rng = np.random.default_rng(seed)
    Js = np.empty((eps_list.size, 2))
    ses = np.empty((eps_list.size, 2))
    taus = np.empty(eps_list.size)
    for i, eps in enumerate(eps_list):
        x0 = sample_mu0(table, 1, rng=rng)[0]
        orbit = run_orbit(x0, n, force_factory(eps), twist, table, cfg,
                          burn_in=burn_in)
        est = estimate_current_map(orbit)
        Js[i] = est.J
        ses[i] = est.stderr
        taus[i] = orbit.tau_bar
    slope = np.empty(2)
    r2 = 1.0
    for a in range(2):
        w = 1.0 / np.maximum(ses[:, a], 1e-300) ** 2
        slope[a] = (w * eps_list * Js[:, a]).sum() / (w * eps_list**2).sum()
    # uncentered weighted R^2 for the dominant (x) component fit
    w = 1.0 / np.maximum(ses[:, 0], 1e-300) ** 2
    resid = Js[:, 0] - slope[0] * eps_list
    r2 = 1.0 - (w * resid**2).sum() / (w * Js[:, 0] ** 2).sum()
    return SweepResult(eps=eps_list, J=Js, stderr=ses, slope=slope,
                       fit_r2=float(r2), tau_bar=taus)


# ---------------------------------------------------------------------------
# diffusion, CLT
# ---------------------------------------------------------------------------

def _autocov(steps, W):
    """C(k) = <d_i (x) d_{i+k}> - mean (x) mean for k = 0..W, (W+1, 2, 2)."""
    n = steps.shape[0]
    d = steps - steps.mean(axis=0)
    out = np.empty((W + 1, 2, 2))
    for k in range(W + 1):
        a = d[: n - k]
        b = d[k:]
        out[k] = a.T @ b / (n - k)
    return out


def green_kubo_D(orbit, window=None, max_window=MAX_LAGS, min_batches=16):
    """Green-Kubo diffusion matrix D = C(0) + sum_k (C(k) + C(k)^T).

    The window is chosen adaptively: the smallest lag where the
    autocovariance magnitude stays below 2 stderr of its estimate for 3
    consecutive lags. Batch-means errors come from per-batch D estimates.
    """
    steps = orbit.rec[:, 3:5]
    n = steps.shape[0]
    if window is not None and n < 100 * window:
        raise WindowError(f"orbit length {n} < 100 x window {window}")
    W = window if window is not None else min(max_window, n // 100)
    C = _autocov(steps, W)
    if window is None:
        # magnitude decay criterion against the lag-0 noise scale
        scale = np.abs(C[0]).max() * math.sqrt(2.0 / n)
        mags = np.abs(C).max(axis=(1, 2))
        run = 0
        Wstar = W
        for k in range(1, W + 1):
            if mags[k] < 2.0 * scale:
                run += 1
                if run >= 3:
                    Wstar = k
                    break
            else:
                run = 0
        else:
            raise WindowError(
                f"autocovariance did not decay below noise within {W} lags"
            )
        W = Wstar
    else:
        if np.abs(C[W]).max() > 2.0 * np.abs(C[0]).max() * math.sqrt(2.0 / n):
            raise WindowError(f"lag-{W} autocovariance above the noise floor")
    D = C[0] + sum(C[k] + C[k].T for k in range(1, W + 1))
    D = 0.5 * (D + D.T)
    # batch-means stderr on per-batch D at the chosen window
    nb = min(32, n // max(100 * W, 1000))
    nb = max(nb, 2)
    if nb < min_batches:
        raise InsufficientDataError(
            f"orbit too short for {min_batches} diffusion batches at W = {W}"
        )
    bl = n // nb
    Ds = np.empty((nb, 2, 2))
    for b in range(nb):
        Cb = _autocov(steps[b * bl:(b + 1) * bl], W)
        Db = Cb[0] + sum(Cb[k] + Cb[k].T for k in range(1, W + 1))
        Ds[b] = 0.5 * (Db + Db.T)
    se = Ds.std(axis=0, ddof=1) / math.sqrt(nb)
    return DiffusionEstimate(D=D, stderr=se, window=W, autocov=C[: W + 1])


def clt_test(m, n, force, twist, table, cfg=IntegratorConfig(), J_ref=None,
             seed=0):
    """Normalized ensemble displacements: skewness, kurtosis, covariance."""
    if m < 2 or n < 10:
        raise ValueError("need m orbits of n collisions")
    from scipy import stats as sps

    args, cfgv = _kernel_args(force, twist, table, cfg)
    rng = np.random.default_rng(seed)
    ics = sample_mu0(table, m, rng=rng)
    q = np.empty((m, 2))
    T = np.empty(m)
    stat = np.zeros(m, dtype=np.int64)
    K._ensemble_q(*args, ics, n, *cfgv, q, T, stat)
    good = stat == 0
    q = q[good]
    if J_ref is None:
        J_ref = np.zeros(2)
    z = (q - n * np.asarray(J_ref)) / math.sqrt(n)
    return CltReport(
        skewness=sps.skew(z, axis=0),
        excess_kurtosis=sps.kurtosis(z, axis=0),
        covariance=np.cov(z.T),
        m=int(good.sum()), n=n, n_failed=int(m - good.sum()),
    )


# ---------------------------------------------------------------------------
# Lyapunov spectrum, entropy production, dimension
# ---------------------------------------------------------------------------

def lyapunov_spectrum(x0, n, force, twist, table, cfg=IntegratorConfig(),
                      fd_step=1e-6, checkpoints=256, burn_in=BURN_IN_DEFAULT):
    """QR-accumulated Lyapunov exponents of T_P with finite-difference
    tangent matrices; entropy production from both -(lu+ls) and -<log J_P>."""
    args, cfgv = _kernel_args(force, twist, table, cfg)
    if burn_in > 0:
        warm = run_orbit(x0, burn_in, force, twist, table, cfg, thin=burn_in)
        x0 = warm.end
    thin = max(1, n // checkpoints)
    running = np.zeros(((n // thin) + 2, 4))
    out = K._lyapunov(*args, float(x0[0]), float(x0[1]), n, fd_step, thin,
                      *cfgv, running)
    sum1, sum2, sumJ, n_eff, n_skip, nper, status = out
    if status != 0:
        raise AbortError("lyapunov orbit exceeded the tangential retry budget")
    if n_eff < max(2, n // 2):
        raise AbortError(f"only {n_eff} valid tangent steps out of {n}")
    running = running[running[:, 0] > 0]
    lam_u = sum1 / n_eff
    lam_s = sum2 / n_eff
    n_adv = n_eff + n_skip
    xi_jac = -sumJ / n_adv
    # batch means over checkpoint increments
    se_u = se_s = se_xi = float("nan")
    if running.shape[0] >= 32:
        inc = np.diff(running, axis=0)
        inc = inc[inc[:, 0] > 0]
        per = inc[:, 1:] / inc[:, 0][:, None]
        nb = min(32, per.shape[0])
        bl = per.shape[0] // nb
        bm = per[: nb * bl].reshape(nb, bl, 3).mean(axis=1)
        se_u, se_s, _ = bm.std(axis=0, ddof=1) / math.sqrt(nb)
        bxi = -(bm[:, 0] + bm[:, 1])
        se_xi = float(bxi.std(ddof=1) / math.sqrt(nb))
    return SpectrumEstimate(
        lambda_u=lam_u, lambda_s=lam_s, se_lambda_u=float(se_u),
        se_lambda_s=float(se_s), xi_qr=-(lam_u + lam_s), xi_jac=xi_jac,
        se_xi=float(se_xi), h_pesin=lam_u, n_eff=int(n_eff),
        n_skipped=int(n_skip), running=running,
    )


def dimension(spec, h0, sigma2_H_value, epsilon):
    """Fill Young-dimension fields: hd = 1 - lu/ls and the eps^2 prediction."""
    if not (spec.lambda_s < 0.0 < spec.lambda_u):
        raise ValueError("need lambda_s < 0 < lambda_u")
    hd = 1.0 - spec.lambda_u / spec.lambda_s
    predicted = 2.0 - epsilon**2 * sigma2_H_value / (2.0 * h0)
    spec.hd = float(hd)
    spec.hd_predicted = float(predicted)
    spec.sigma2_H = float(sigma2_H_value)
    spec.h0 = float(h0)
    return spec


# ---------------------------------------------------------------------------
# equidistribution
# ---------------------------------------------------------------------------

def equidistribution_test(force, twist, table, cfg=IntegratorConfig(),
                          n_push=24, n_samples=20000, seed=0, reference=None):
    """Pushforward averages of (dx, tau, H, s) under T_P^n for n = 0..n_push-1,
    with a fitted exponential approach rate to the long-orbit values."""
    args, cfgv = _kernel_args(force, twist, table, cfg)
    epsH = _pair_epsilon(force, twist)
    rng = np.random.default_rng(seed)
    samples = sample_mu0(table, n_samples, rng=rng)
    obs = np.zeros((n_samples, n_push, 4))
    stat = np.zeros(n_samples, dtype=np.int64)
    K._pushforward(*args, epsH, samples, n_push, *cfgv, obs, stat)
    obs = obs[stat == 0]
    means = obs.mean(axis=0)
    se = obs.std(axis=0, ddof=1) / math.sqrt(obs.shape[0])
    if reference is None:
        x0 = sample_mu0(table, 1, rng=rng)[0]
        orbit = run_orbit(x0, 200000, force, twist, table, cfg,
                          burn_in=BURN_IN_DEFAULT)
        reference = np.array([
            orbit.col("dx").mean(), orbit.col("tau").mean(),
            orbit.col("H").mean(), orbit.col("s").mean(),
        ])
    rates = np.full(4, float("nan"))
    for j in range(4):
        resid = np.abs(means[:, j] - reference[j])
        usable = resid > 2.0 * se[:, j]
        if usable.sum() >= 3:
            ks = np.nonzero(usable)[0]
            coeff = np.polyfit(ks, np.log(resid[ks]), 1)
            rates[j] = -coeff[0]
    return EquidistributionCurve(
        observables=("dx", "tau", "H", "s"), means=means, stderr=se,
        reference=np.asarray(reference), rates=rates,
    )


# ---------------------------------------------------------------------------
# reversibility pairing (proof-of-Theorem-currentP invariant)
# ---------------------------------------------------------------------------

def reversal_pairing(force, twist, table, cfg=IntegratorConfig(),
                     n_mc=20000, seed=0):
    """mu0-mean of Delta_P(x) + Delta_P(T_P^{-1} x) with stderr.

    For reversible pairs T_P^{-1} = I o T_F o G o I, so both terms are
    forward-computable; the mean vanishes for time-reversible dynamics.
    """
    from .forces import twist_apply
    from .pmap import step

    rng = np.random.default_rng(seed)
    samples = sample_mu0(table, n_mc, rng=rng)
    vals = np.empty((n_mc, 2))
    ident = TwistModel.identity()
    got = 0
    for r, s in samples:
        try:
            rec_fwd = step(r, s, force, twist, table, cfg)
            ru, su = twist_apply(twist, r, -s)
            pre = step(ru, su, force, ident, table, cfg)
            r1, s1 = pre.post_elastic
            rec_bwd = step(r1, -s1, force, twist, table, cfg)
        except (GrazingError, MaxTimeError):
            continue
        vals[got, 0] = rec_fwd.delta[0] + rec_bwd.delta[0]
        vals[got, 1] = rec_fwd.delta[1] + rec_bwd.delta[1]
        got += 1
    vals = vals[:got]
    return vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(got)
