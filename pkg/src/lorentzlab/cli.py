"""Configuration parsing and experiment orchestration.

Config files are line-based `key = value` with `#` comments and a
repeatable `scatterer = cx,cy,r` key; no nesting. Outputs are a
`summary.txt` of `key=value` lines (shortest round-trip decimals) plus
per-subcommand CSV files. Identical (config, seed, threads=1) reruns are
byte-identical.
"""

import argparse
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AbortError,
    GrazingError,
    LorentzLabError,
    MaxTimeError,
    ParseError,
    StiffnessError,
    TunnelError,
    ValidationError,
)
from .flight import IntegratorConfig
from .forces import ForceModel, TwistModel
from .geometry import build_table, check_finite_horizon, min_gap
from . import stats as S
from .pmap import reversibility_identity

SUBCOMMANDS = (
    "horizon", "simulate", "current", "response", "diffusion",
    "lyapunov", "dimension", "reversibility", "clt",
)

_RUN_DEFAULTS = {
    "n": 100000, "burn_in": 1000, "thin": 1, "m": 1000, "clt_n": 1000,
    "k_max": 48, "n_mc": 20000, "n_push": 24, "n_samples": 20000,
    "window": 0, "lyap_n": 50000, "rev_samples": 500,
}


@dataclass
class ExperimentConfig:
    table: object
    force: object
    twist: object
    integrator: IntegratorConfig
    run: dict = field(default_factory=dict)
    eps_list: tuple = ()
    seed: int = 42
    threads: int = 0
    output_thin: int = 1


def _parse_scalar(text, lineno, key):
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"line {lineno}: {key} expects a number, got {text!r}") \
            from exc


def parse_config(path):
    """Parse and validate a config file into an ExperimentConfig."""
    pairs = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise ParseError(f"line {lineno}: empty key or value")
            pairs.append((lineno, key, value))

    known_prefixes = ("force.", "twist.", "integrator.", "run.", "output.")
    scatterers = []
    kv = {}
    for lineno, key, value in pairs:
        if key == "scatterer":
            parts = value.split(",")
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: scatterer expects cx,cy,r")
            cx, cy, r = (_parse_scalar(p, lineno, "scatterer") for p in parts)
            scatterers.append(((cx, cy), r))
        elif key in ("seed", "threads") or key.startswith(known_prefixes):
            kv[key] = (lineno, value)
        else:
            raise ParseError(f"line {lineno}: unknown key {key!r}")

    if not scatterers:
        raise ParseError("missing required key 'scatterer'")
    if "force.kind" not in kv:
        raise ParseError("missing required key 'force.kind'")

    try:
        table = build_table(scatterers)
    except LorentzLabError as exc:
        raise ValidationError(f"invalid table: {exc}") from exc

    def fnum(key, default):
        if key not in kv:
            return default
        lineno, value = kv[key]
        return _parse_scalar(value, lineno, key)

    eps = fnum("force.epsilon", 0.0)
    kind = kv["force.kind"][1]
    try:
        if kind == "zero":
            force = ForceModel.zero()
        elif kind == "conservative":
            spec = kv.get("force.potential", (0, "cosine2d:0.002"))[1]
            name, _, amp = spec.partition(":")
            if name != "cosine2d":
                raise ValidationError(f"unknown potential {name!r}")
            force = ForceModel.conservative_cosine(float(amp), eps)
        elif kind == "isokinetic_const":
            force = ForceModel.isokinetic_const(eps)
        elif kind == "isokinetic_odd":
            force = ForceModel.isokinetic_odd(eps)
        elif kind == "thermostatted_const":
            force = ForceModel.thermostatted_const(
                fnum("force.e1", 1.0), fnum("force.e2", 0.0), eps
            )
        elif kind == "thermostatted_shear":
            force = ForceModel.thermostatted_shear(eps)
        else:
            raise ValidationError(f"unknown force.kind {kind!r}")
    except LorentzLabError as exc:
        raise ValidationError(f"invalid force: {exc}") from exc

    tkind = kv.get("twist.kind", (0, "identity"))[1]
    delta = fnum("twist.delta", 0.0)
    try:
        if tkind == "identity":
            twist = TwistModel.identity()
        elif tkind == "slip_odd":
            twist = TwistModel.slip_odd(delta, table)
        elif tkind == "slip_even":
            twist = TwistModel.slip_even(delta, table)
        elif tkind == "general":
            twist = TwistModel.general(delta, fnum("twist.delta2", 0.0), table)
        else:
            raise ValidationError(f"unknown twist.kind {tkind!r}")
    except LorentzLabError as exc:
        raise ValidationError(f"invalid twist: {exc}") from exc

    integrator = IntegratorConfig(
        rel_tol=fnum("integrator.rel_tol", 1e-10),
        abs_tol=fnum("integrator.abs_tol", 1e-12),
        event_tol=fnum("integrator.event_tol", 1e-11),
        max_time=fnum("integrator.max_time", 10.0),
        grazing_tol=fnum("integrator.grazing_tol", 1e-9),
    )

    run = dict(_RUN_DEFAULTS)
    for key in list(kv):
        if key.startswith("run.") and key != "run.eps_list":
            name = key[4:]
            if name not in run:
                raise ParseError(f"line {kv[key][0]}: unknown key {key!r}")
            run[name] = int(fnum(key, run[name]))
    eps_list = ()
    if "run.eps_list" in kv:
        lineno, value = kv["run.eps_list"]
        eps_list = tuple(
            _parse_scalar(p, lineno, "run.eps_list") for p in value.split(",")
        )

    return ExperimentConfig(
        table=table, force=force, twist=twist, integrator=integrator,
        run=run, eps_list=eps_list,
        seed=int(fnum("seed", 42)), threads=int(fnum("threads", 0)),
        output_thin=max(1, int(fnum("output.thin", 1))),
    )


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_summary(out_dir, items):
    path = os.path.join(out_dir, "summary.txt")
    with open(path, "w") as fh:
        for key, value in items:
            fh.write(f"{key}={_fmt(value)}\n")
    return path


def _write_csv(out_dir, name, header, rows):
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _steady_orbit(cfg, n=None, thin=1):
    rng = np.random.default_rng(cfg.seed)
    x0 = S.sample_mu0(cfg.table, 1, rng=rng)[0]
    return S.run_orbit(x0, n or cfg.run["n"], cfg.force, cfg.twist, cfg.table,
                       cfg.integrator, burn_in=cfg.run["burn_in"], thin=thin)


def _cmd_horizon(cfg, out_dir):
    report = check_finite_horizon(cfg.table, n_offsets=256, seed=cfg.seed)
    tau_max = report.tau_max_bound
    if report.finite:
        # tighten the empirical bound with mu0-sampled free paths
        samples = S.sample_mu0(cfg.table, 10000, seed=cfg.seed)
        from . import _kernels as K

        out = np.empty(samples.shape[0])
        centers, radii, offs, L, mgap = K.table_args(cfg.table)
        K._free_paths(centers, radii, offs, L, mgap, samples,
                      cfg.integrator.max_time, out)
        tau_max = max(tau_max, float(out[out > 0].max()))
    items = [
        ("finite", report.finite),
        ("tau_max_empirical", tau_max),
        ("min_gap", min_gap(cfg.table)),
        ("rays_cast", report.n_rays),
    ]
    if report.violating_direction is not None:
        items.append(("violating_direction_x", report.violating_direction[0]))
        items.append(("violating_direction_y", report.violating_direction[1]))
    _write_summary(out_dir, items)
    return 0


def _cmd_simulate(cfg, out_dir):
    orbit = _steady_orbit(cfg, thin=cfg.output_thin)
    rows = (
        (k * orbit.thin, rec[0], rec[1], rec[2], rec[3], rec[4], rec[7], rec[8])
        for k, rec in enumerate(orbit.rec)
    )
    _write_csv(out_dir, "orbit.csv",
               ("k", "r", "s", "tau", "dx", "dy", "H", "logJ"), rows)
    _write_summary(out_dir, [
        ("n", orbit.n), ("qx", orbit.q_n[0]), ("qy", orbit.q_n[1]),
        ("total_time", orbit.total_time), ("tau_bar", orbit.tau_bar),
        ("discarded_tangential", orbit.discarded_tangential),
    ])
    return 0


def _cmd_current(cfg, out_dir):
    orbit = _steady_orbit(cfg)
    cur = S.estimate_current_map(orbit)
    flow = S.estimate_current_flow(orbit)
    _write_summary(out_dir, [
        ("n", orbit.n),
        ("Jx", cur.J[0]), ("Jy", cur.J[1]),
        ("stderr_x", cur.stderr[0]), ("stderr_y", cur.stderr[1]),
        ("Jhat_x", flow.J[0]), ("Jhat_y", flow.J[1]),
        ("flow_stderr_x", flow.stderr[0]), ("flow_stderr_y", flow.stderr[1]),
        ("tau_bar", orbit.tau_bar),
        ("discarded_tangential", orbit.discarded_tangential),
    ])
    return 0


def _cmd_response(cfg, out_dir):
    resp = S.kawasaki_sigma(
        cfg.force, cfg.twist, cfg.table, cfg.integrator,
        K_max=cfg.run["k_max"], n_mc=cfg.run["n_mc"], seed=cfg.seed,
    )
    rows = (
        (k, resp.terms[k, 0], resp.terms[k, 1],
         resp.term_stderr[k, 0], resp.term_stderr[k, 1])
        for k in range(resp.terms.shape[0])
    )
    _write_csv(out_dir, "response.csv",
               ("k", "term_x", "term_y", "stderr_x", "stderr_y"), rows)
    items = [
        ("sigma_x", resp.sigma[0]), ("sigma_y", resp.sigma[1]),
        ("sigma_stderr_x", resp.stderr[0]), ("sigma_stderr_y", resp.stderr[1]),
        ("K", resp.K), ("n_mc", resp.n_mc), ("tail_bound", resp.tail_bound),
    ]
    if cfg.eps_list:
        def factory(eps):
            return cfg.force.with_epsilon(eps)

        sweep = S.linear_response_sweep(
            factory, cfg.twist, cfg.eps_list, cfg.run["n"], cfg.table,
            cfg.integrator, seed=cfg.seed, burn_in=cfg.run["burn_in"],
        )
        _write_csv(out_dir, "sweep.csv",
                   ("eps", "Jx", "Jy", "stderr_x", "stderr_y"),
                   ((sweep.eps[i], sweep.J[i, 0], sweep.J[i, 1],
                     sweep.stderr[i, 0], sweep.stderr[i, 1])
                    for i in range(sweep.eps.size)))
        items += [
            ("slope_x", sweep.slope[0]), ("slope_y", sweep.slope[1]),
            ("fit_r2", sweep.fit_r2),
        ]
    _write_summary(out_dir, items)
    return 0


def _cmd_diffusion(cfg, out_dir):
    orbit = _steady_orbit(cfg)
    window = cfg.run["window"] or None
    est = S.green_kubo_D(orbit, window=window)
    _write_summary(out_dir, [
        ("Dxx", est.D[0, 0]), ("Dxy", est.D[0, 1]), ("Dyy", est.D[1, 1]),
        ("stderr_xx", est.stderr[0, 0]), ("stderr_xy", est.stderr[0, 1]),
        ("stderr_yy", est.stderr[1, 1]),
        ("window", est.window), ("n", orbit.n),
    ])
    return 0


def _cmd_lyapunov(cfg, out_dir):
    rng = np.random.default_rng(cfg.seed)
    x0 = S.sample_mu0(cfg.table, 1, rng=rng)[0]
    spec = S.lyapunov_spectrum(x0, cfg.run["lyap_n"], cfg.force, cfg.twist,
                               cfg.table, cfg.integrator,
                               burn_in=cfg.run["burn_in"])
    rows = (
        (int(row[0]), row[1] / row[0], row[2] / row[0])
        for row in spec.running
    )
    _write_csv(out_dir, "spectrum.csv",
               ("n", "lambda_u_running", "lambda_s_running"), rows)
    _write_summary(out_dir, [
        ("lambda_u", spec.lambda_u), ("lambda_s", spec.lambda_s),
        ("se_lambda_u", spec.se_lambda_u), ("se_lambda_s", spec.se_lambda_s),
        ("xi_qr", spec.xi_qr), ("xi_jac", spec.xi_jac), ("se_xi", spec.se_xi),
        ("n_eff", spec.n_eff), ("n_skipped", spec.n_skipped),
    ])
    return 0


def _cmd_dimension(cfg, out_dir):
    if S._pair_epsilon(cfg.force, cfg.twist) <= 0:
        raise ValidationError("dimension needs a forced pair (eps > 0)")
    rng = np.random.default_rng(cfg.seed)
    x0 = S.sample_mu0(cfg.table, 1, rng=rng)[0]
    spec = S.lyapunov_spectrum(x0, cfg.run["lyap_n"], cfg.force, cfg.twist,
                               cfg.table, cfg.integrator,
                               burn_in=cfg.run["burn_in"])
    x1 = S.sample_mu0(cfg.table, 1, rng=rng)[0]
    unforced = S.lyapunov_spectrum(
        x1, cfg.run["lyap_n"], ForceModel.zero(), TwistModel.identity(),
        cfg.table, cfg.integrator, burn_in=cfg.run["burn_in"],
    )
    s2 = S.sigma2_H(cfg.force, cfg.twist, cfg.table, cfg.integrator,
                    K_max=cfg.run["k_max"], n_mc=cfg.run["n_mc"], seed=cfg.seed)
    eps = S._pair_epsilon(cfg.force, cfg.twist)
    spec = S.dimension(spec, unforced.lambda_u, s2.value, eps)
    _write_summary(out_dir, [
        ("lambda_u", spec.lambda_u), ("lambda_s", spec.lambda_s),
        ("xi_qr", spec.xi_qr), ("xi_jac", spec.xi_jac), ("se_xi", spec.se_xi),
        ("h0", spec.h0), ("sigma2_H", spec.sigma2_H),
        ("hd", spec.hd), ("hd_predicted", spec.hd_predicted),
        ("deficit_measured", 2.0 - spec.hd),
        ("deficit_predicted", 2.0 - spec.hd_predicted),
    ])
    return 0


def _cmd_reversibility(cfg, out_dir):
    from .forces import flow_reversibility, twist_reversibility

    flow = flow_reversibility(cfg.force, tol=1e-10)
    twist = twist_reversibility(cfg.twist, tol=1e-10)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.run["rev_samples"]
    residuals = []
    samples = S.sample_mu0(cfg.table, 2 * n, rng=rng)
    for r, s in samples:
        if len(residuals) >= n:
            break
        try:
            residuals.append(reversibility_identity(
                r, s, cfg.force, cfg.twist, cfg.table, cfg.integrator))
        except (GrazingError, MaxTimeError):
            continue
    residuals = np.sort(np.array(residuals))
    _write_summary(out_dir, [
        ("flow_reversible", flow.reversible),
        ("flow_worst_violation", flow.worst_violation),
        ("twist_reversible", twist.reversible),
        ("twist_worst_violation", twist.worst_violation),
        ("map_residual_median", residuals[len(residuals) // 2]),
        ("map_residual_p99", residuals[int(0.99 * (len(residuals) - 1))]),
        ("map_samples", len(residuals)),
    ])
    return 0


def _cmd_clt(cfg, out_dir):
    report = S.clt_test(cfg.run["m"], cfg.run["clt_n"], cfg.force, cfg.twist,
                        cfg.table, cfg.integrator, seed=cfg.seed)
    _write_summary(out_dir, [
        ("m", report.m), ("n", report.n), ("n_failed", report.n_failed),
        ("skew_x", report.skewness[0]), ("skew_y", report.skewness[1]),
        ("kurt_x", report.excess_kurtosis[0]),
        ("kurt_y", report.excess_kurtosis[1]),
        ("cov_xx", report.covariance[0, 0]), ("cov_xy", report.covariance[0, 1]),
        ("cov_yy", report.covariance[1, 1]),
    ])
    return 0


_COMMANDS = {
    "horizon": _cmd_horizon,
    "simulate": _cmd_simulate,
    "current": _cmd_current,
    "response": _cmd_response,
    "diffusion": _cmd_diffusion,
    "lyapunov": _cmd_lyapunov,
    "dimension": _cmd_dimension,
    "reversibility": _cmd_reversibility,
    "clt": _cmd_clt,
}


def run_subcommand(name, cfg, out_dir):
    """Execute one subcommand; returns the process exit code."""
    if name not in _COMMANDS:
        print(f"unknown subcommand {name!r}; choose from {', '.join(SUBCOMMANDS)}",
              file=sys.stderr)
        return 2
    os.makedirs(out_dir, exist_ok=True)
    if cfg.threads > 0:
        from numba import set_num_threads

        set_num_threads(cfg.threads)
    try:
        return _COMMANDS[name](cfg, out_dir)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AbortError, GrazingError, MaxTimeError, StiffnessError,
            TunnelError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="lorentz-lab",
        description="Forced Sinai-billiard (Lorentz gas) experiments",
    )
    parser.add_argument("subcommand", help="|".join(SUBCOMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.subcommand not in SUBCOMMANDS:
        parser.print_usage(sys.stderr)
        print(f"unknown subcommand {args.subcommand!r}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(args.config)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    env_threads = os.environ.get("LORENTZ_LAB_THREADS")
    if args.threads is not None:
        cfg.threads = args.threads
    elif env_threads:
        try:
            cfg.threads = int(env_threads)
        except ValueError:
            print("error: LORENTZ_LAB_THREADS must be an integer", file=sys.stderr)
            return 2
    return run_subcommand(args.subcommand, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
