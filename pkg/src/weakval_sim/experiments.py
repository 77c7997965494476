"""Named experiments behind the command line.

Each experiment reads its parameters from a ConfigDoc, runs simulations
against the matching closed forms, writes CSV tables plus a JSON summary,
and reports pass/fail checks. Statistical checks compare Monte Carlo means
to exact references within five standard errors; deterministic checks pin
identities that hold to rounding. Outputs contain no timestamps or host
information: a config and a seed determine every byte.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import amplifier as amp
from . import cqed, weak_values as wv
from .bayes import GaussianLikelihood
from .config import ConfigDoc, Diagnostic
from .core import PrePostSelection, PureState, QubitState
from .trajectory import (
    MeasurementStrength,
    Stepper,
    ensemble_coherence,
    fit_dephasing_rate,
    fit_loglog_slope,
    strong_convergence_errors,
)

STEPPER_TOKENS = tuple(s.value for s in Stepper)


@dataclass(frozen=True)
class Check:
    """One pass/fail criterion: |value - reference| <= tol."""

    name: str
    value: float
    reference: float
    tol: float
    kind: str = "statistical"  # or "deterministic"

    @property
    def passed(self) -> bool:
        return (
            math.isfinite(self.value)
            and math.isfinite(self.tol)
            and abs(self.value - self.reference) <= self.tol
        )

    def render(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (
            f"[{tag}] {self.name}: value={self.value:.6g} "
            f"reference={self.reference:.6g} tol={self.tol:.3g}"
        )


@dataclass
class ExperimentResult:
    name: str
    checks: list
    files: list
    summary: dict
    warnings: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass
class RunContext:
    doc: ConfigDoc
    seed: int
    n_traj: int
    workers: int | None
    out_dir: str
    dry: bool = False

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: str, comments, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# schema=1\n")
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _cplx(z: complex):
    return [float(z.real), float(z.imag)]


def _fidelity_pure(a: PureState, b: PureState) -> float:
    return abs(a.c1.conjugate() * b.c1 + a.c2.conjugate() * b.c2) ** 2


def _mc_tol(se: float, bias: float = 0.0) -> float:
    return 5.0 * se + bias if math.isfinite(se) else math.nan


# --- fig1: scaled average vs post-selection angle ---------------------------


def _fig1_params(ctx: RunContext):
    d = ctx.doc
    g = d.get_float("strength.g", default=0.2)
    lo = d.get_float("grid.theta_min", default=0.15)
    hi = d.get_float("grid.theta_max", default=2.9)
    count = d.get_int("grid.count", default=28, minimum=2)
    mc_count = d.get_int("mc.count", default=5, minimum=0)
    stepper = Stepper.from_token(
        d.get_str("mc.stepper", default="bayes-exact", choices=STEPPER_TOKENS)
    )
    n_steps = d.get_int("measurement.n_steps", default=100, minimum=1)
    if not (0.0 < g):
        raise_config(d, "strength.g", "must be positive")
    if not (0.0 < lo < hi < math.pi):
        raise_config(d, "grid.theta_max", "need 0 < theta_min < theta_max < pi")
    return g, lo, hi, count, mc_count, stepper, n_steps


def raise_config(doc: ConfigDoc, key: str, message: str):
    from .errors import ConfigError

    raise ConfigError(f"{key}: {message}", line=doc.line(key))


def _run_fig1(ctx: RunContext):
    g, lo, hi, count, mc_count, stepper, n_steps = _fig1_params(ctx)
    if ctx.dry:
        return None
    thetas = np.linspace(lo, hi, count)
    curve = wv.wv_theta_curve(g, thetas)
    s = curve.effective_strength
    theta_star, peak = wv.wv_curve_peak(s)

    checks = []
    mc_points = []
    if mc_count:
        idx = sorted(set(np.linspace(0, count - 1, mc_count).round().astype(int)))
        ms = MeasurementStrength.from_g(
            g, 1.0, 1 if stepper is Stepper.BAYES_EXACT else n_steps
        )
        for j, i in enumerate(idx):
            th = float(thetas[i])
            est = wv.mc_weak_value(
                wv.pps_for_theta(th), ms, stepper, ctx.n_traj, ctx.seed + j,
                mode="weighted", workers=ctx.workers,
            )
            mean, se = est.scaled()
            mc_points.append((th, mean, se))
            checks.append(
                Check(f"mc_vs_exact_theta={th:.3f}", mean, float(curve.finite[i]), _mc_tol(se))
            )
    grid_peak = float(np.max(curve.finite))
    checks.append(Check("grid_peak_below_bound", max(0.0, grid_peak - peak), 0.0, 1e-12,
                        kind="deterministic"))

    out = ctx.path("fig1_curve.csv")
    wv.write_theta_csv(curve, out, mc_points)
    summary = {
        "g": g,
        "effective_strength": s,
        "turnover_theta": theta_star,
        "turnover_value": peak,
        "stepper": stepper.value,
    }
    return checks, ["fig1_curve.csv"], summary


# --- wv-sweep: scaled average vs strength at fixed angle --------------------


def _run_wv_sweep(ctx: RunContext):
    d = ctx.doc
    theta = d.get_float("selection.theta", default=2.2)
    lo = d.get_float("grid.g_min", default=0.02)
    hi = d.get_float("grid.g_max", default=1.5)
    count = d.get_int("grid.count", default=12, minimum=2)
    if not (0.0 < lo < hi):
        raise_config(d, "grid.g_max", "need 0 < g_min < g_max")
    if not (0.0 < theta < math.pi):
        raise_config(d, "selection.theta", "need 0 < theta < pi")
    if ctx.dry:
        return None
    pps = wv.pps_for_theta(theta)
    gs = np.linspace(lo, hi, count)
    rows = []
    checks = []
    for j, g in enumerate(gs):
        g = float(g)
        finite = wv.wv_finite_strength(pps, g)
        short = wv.wv_short_time(pps, g)
        ms = MeasurementStrength.from_g(g, 1.0, 1)
        est = wv.mc_weak_value(
            pps, ms, Stepper.BAYES_EXACT, ctx.n_traj, ctx.seed + j,
            mode="weighted", workers=ctx.workers,
        )
        mean, se = est.scaled()
        rows.append((g, short, finite, mean, se))
        checks.append(Check(f"mc_vs_exact_g={g:.3f}", mean, finite, _mc_tol(se)))
    out = ctx.path("wv_sweep.csv")
    write_csv(out, [f"theta={theta:.17g}"],
              ["g", "short_time", "finite", "mc_mean", "mc_se"], rows)
    return checks, ["wv_sweep.csv"], {"theta": theta, "aav": wv.wv_aav_linear(pps)}


# --- convergence: strong error vs step size ---------------------------------


def _run_convergence(ctx: RunContext):
    d = ctx.doc
    gamma = d.get_float("measurement.gamma", default=0.25)
    t_total = d.get_float("measurement.t_total", default=0.1)
    dts = d.get_float_list("grid.dts", default=[1e-2, 1e-3, 1e-4])
    r0 = d.get_float("state.rho11", default=0.55)
    c0 = complex(d.get_float("state.re_rho12", default=0.3),
                 d.get_float("state.im_rho12", default=0.25))
    if gamma <= 0:
        raise_config(d, "measurement.gamma", "must be positive")
    if sorted(dts, reverse=True) != list(dts) or len(set(dts)) != len(dts):
        raise_config(d, "grid.dts", "must be strictly decreasing")
    if ctx.dry:
        return None
    state0 = QubitState(r0, c0)
    errs = strong_convergence_errors(
        state0, gamma, t_total, dts, ctx.n_traj, ctx.seed, workers=ctx.workers
    )
    e_euler = errs[Stepper.ITO_EULER]
    e_mil = errs[Stepper.ITO_MILSTEIN]
    slope_e = fit_loglog_slope(dts, e_euler)
    slope_m = fit_loglog_slope(dts, e_mil)
    checks = [
        Check("euler_strong_order", slope_e, 0.5, 0.1),
        Check("milstein_strong_order", slope_m, 1.0, 0.1),
    ]
    rows = [(dt, float(e_euler[i]), float(e_mil[i])) for i, dt in enumerate(dts)]
    out = ctx.path("convergence.csv")
    write_csv(out, [f"gamma={gamma:.17g} t_total={t_total:.17g} n_paths={ctx.n_traj}"],
              ["dt", "rms_euler", "rms_milstein"], rows)
    return checks, ["convergence.csv"], {
        "euler_slope": slope_e, "milstein_slope": slope_m,
    }


# --- amplifier-invariance: record averages vs amplifier noise ---------------


def _run_amplifier(ctx: RunContext):
    d = ctx.doc
    theta = d.get_float("selection.theta", default=2.2)
    gamma = d.get_float("measurement.gamma", default=1.0)
    t_total = d.get_float("measurement.t_total", default=0.05)
    gain = d.get_float("amplifier.gain", default=5.0)
    offset = d.get_float("amplifier.offset", default=0.7)
    ratios = d.get_float_list("amplifier.noise_ratios", default=[0.0, 0.5, 1.0, 2.0])
    if gamma <= 0 or t_total <= 0:
        raise_config(d, "measurement.gamma", "gamma and t_total must be positive")
    if gain <= 0:
        raise_config(d, "amplifier.gain", "must be positive")
    if any(r < 0 for r in ratios):
        raise_config(d, "amplifier.noise_ratios", "ratios must be non-negative")
    if ctx.dry:
        return None
    pps = wv.pps_for_theta(theta)
    lik = GaussianLikelihood.from_rate(gamma, t_total)
    base = wv.wv_bayes_general(pps, lik)
    rows = []
    checks = []
    for j, ratio in enumerate(ratios):
        sigma = ratio * math.sqrt(lik.D)
        model = amp.AmplifierModel(gain, offset, sigma * gain)
        closed = amp.wv_with_amplifier(pps, lik, model)
        est = amp.mc_weak_value_amplified(
            pps, lik, model, ctx.n_traj, ctx.seed + j, mode="weighted",
            workers=ctx.workers,
        )
        mean = est.weighted.mean
        se = est.weighted.std_error
        rows.append((ratio, sigma, closed, mean, se))
        checks.append(Check(f"closed_invariance_ratio={ratio:g}", closed, base, 1e-12,
                            kind="deterministic"))
        checks.append(Check(f"mc_vs_exact_ratio={ratio:g}", mean, closed, _mc_tol(se)))
    out = ctx.path("amp_invariance.csv")
    write_csv(out, [f"theta={theta:.17g} gamma={gamma:.17g} t_total={t_total:.17g} "
                    f"gain={gain:.17g} offset={offset:.17g}"],
              ["noise_ratio", "sigma_referred", "closed", "mc_mean", "mc_se"], rows)
    return checks, ["amp_invariance.csv"], {"noiseless_mean": base}


# --- cqed helpers ------------------------------------------------------------


def _cqed_params(ctx: RunContext, default_eps_m: float):
    d = ctx.doc
    p = cqed.CqedParams(
        chi=d.get_float("cqed.chi", default=0.5),
        kappa=d.get_float("cqed.kappa", default=10.0),
        eps_m=d.get_float("cqed.eps_m", default=default_eps_m),
        delta_r=d.get_float("cqed.delta_r", default=0.0),
        phi_lo=d.get_float("cqed.phi_lo", default=0.0),
        omega_q=d.get_float("cqed.omega_q", default=0.0),
        omega_convention=d.get_str("cqed.omega_convention", default="bare",
                                   choices=("bare", "dispersive")),
    )
    return p


# --- cqed-quadratures: closed forms vs MC across the LO phase ---------------


def _run_cqed_quadratures(ctx: RunContext):
    d = ctx.doc
    theta = d.get_float("selection.theta", default=2.0)
    t_m = d.get_float("window.t_m", default=1.0)
    count = d.get_int("grid.phi_count", default=7, minimum=2)
    p = _cqed_params(ctx, default_eps_m=5.0)
    if t_m <= 0:
        raise_config(d, "window.t_m", "must be positive")
    if ctx.dry:
        return None
    pps = wv.pps_for_theta(theta)
    fields = cqed.steady_fields(p)
    r0 = cqed.rates(fields, p, phi=fields.theta_beta)
    checks = [
        Check("dephasing_rate_identity", r0.gamma_d, r0.gamma_d_total,
              1e-12 * max(1.0, abs(r0.gamma_d_total)), kind="deterministic"),
    ]
    rows = []
    for j in range(count):
        delta = 0.5 * math.pi * j / (count - 1)
        phi = fields.theta_beta + delta
        rr = cqed.rates(fields, p, phi=phi)
        closed = cqed.wv_cqed_finite(pps, rr, t_m).value
        est = cqed.mc_weak_value_cqed(
            pps, rr, t_m, ctx.n_traj, ctx.seed + j, mode="weighted",
            workers=ctx.workers,
        )
        mean = est.weighted.mean
        se = est.weighted.std_error
        rows.append((phi, delta, rr.gamma_ci, rr.gamma_ba, closed, mean, se))
        checks.append(Check(f"mc_vs_exact_delta={delta:.3f}", mean, closed, _mc_tol(se)))
    out = ctx.path("cqed_quadratures.csv")
    write_csv(out, [f"theta={theta:.17g} t_m={t_m:.17g} chi={p.chi:.17g} "
                    f"kappa={p.kappa:.17g} eps_m={p.eps_m:.17g}"],
              ["phi", "delta_from_signal", "gamma_ci", "gamma_ba",
               "closed", "mc_mean", "mc_se"], rows)
    summary = {
        "alpha1": _cplx(fields.alpha1),
        "alpha2": _cplx(fields.alpha2),
        "beta": _cplx(fields.beta),
        "theta_beta": fields.theta_beta,
        "nbar": fields.nbar,
        "kappa_beta2": r0.kappa_beta2,
        "gamma_d": r0.gamma_d,
        "ac_stark": r0.ac_stark,
    }
    return checks, ["cqed_quadratures.csv"], summary


# --- cqed-tomography: reconstruct the prepared state ------------------------


def _run_cqed_tomography(ctx: RunContext):
    d = ctx.doc
    th_i = d.get_float("prepared.theta", default=1.2)
    ph_i = d.get_float("prepared.phi", default=0.7)
    th_f = d.get_float("selection.theta_f", default=2.0)
    ph_f = d.get_float("selection.phi_f", default=0.4)
    t_m = d.get_float("window.t_m", default=1.0)
    p = _cqed_params(ctx, default_eps_m=4.373)
    if t_m <= 0:
        raise_config(d, "window.t_m", "must be positive")
    if ctx.dry:
        return None
    psi_i = PureState.from_bloch(th_i, ph_i)
    psi_f = PureState.from_bloch(th_f, ph_f)
    pps = PrePostSelection(psi_i, psi_f)
    fields = cqed.steady_fields(p)
    r_i = cqed.rates(fields, p, phi=fields.theta_beta)
    r_q = cqed.rates(fields, p, phi=fields.theta_beta + 0.5 * math.pi)

    v_i_closed = cqed.wv_cqed_finite(pps, r_i, t_m).value
    v_q_closed = cqed.wv_cqed_finite(pps, r_q, t_m).value
    rec_closed = cqed.tomography(psi_f, v_i_closed, v_q_closed, r_i, t_m)
    fid_closed = _fidelity_pure(psi_i, rec_closed.state)

    est_i = cqed.mc_weak_value_cqed(pps, r_i, t_m, ctx.n_traj, ctx.seed,
                                    mode="weighted", workers=ctx.workers)
    est_q = cqed.mc_weak_value_cqed(pps, r_q, t_m, ctx.n_traj, ctx.seed + 1,
                                    mode="weighted", workers=ctx.workers)
    rec_mc = cqed.tomography(psi_f, est_i.weighted.mean, est_q.weighted.mean, r_i, t_m)
    fid_mc = _fidelity_pure(psi_i, rec_mc.state)

    checks = [
        Check("closed_form_roundtrip_fidelity", fid_closed, 1.0, 1e-9,
              kind="deterministic"),
        Check("mc_informational_mean", est_i.weighted.mean, v_i_closed,
              _mc_tol(est_i.weighted.std_error)),
        Check("mc_backaction_mean", est_q.weighted.mean, v_q_closed,
              _mc_tol(est_q.weighted.std_error)),
        Check("mc_reconstruction_fidelity", fid_mc, 1.0, 0.01),
    ]
    rows = [
        ("informational", r_i.gamma_ci, r_i.gamma_ba, v_i_closed,
         est_i.weighted.mean, est_i.weighted.std_error),
        ("backaction", r_q.gamma_ci, r_q.gamma_ba, v_q_closed,
         est_q.weighted.mean, est_q.weighted.std_error),
    ]
    out = ctx.path("cqed_tomography.csv")
    write_csv(out, [f"t_m={t_m:.17g} kappa_beta2={r_i.kappa_beta2:.17g}"],
              ["quadrature", "gamma_ci", "gamma_ba", "closed", "mc_mean", "mc_se"],
              rows)
    summary = {
        "prepared": _cplx(psi_i.c1) + _cplx(psi_i.c2),
        "reconstructed_closed": _cplx(rec_closed.state.c1) + _cplx(rec_closed.state.c2),
        "reconstructed_mc": _cplx(rec_mc.state.c1) + _cplx(rec_mc.state.c2),
        "fidelity_closed": fid_closed,
        "fidelity_mc": fid_mc,
        "iterations_closed": rec_closed.iterations,
        "iterations_mc": rec_mc.iterations,
        "w_mod_closed": _cplx(rec_closed.w_mod),
    }
    return checks, ["cqed_tomography.csv"], summary


# --- bayes-qte-equivalence: one-shot update vs stepped trajectories ---------


def _run_equivalence(ctx: RunContext):
    d = ctx.doc
    theta = d.get_float("selection.theta", default=2.2)
    gamma = d.get_float("measurement.gamma", default=1.0)
    t_total = d.get_float("measurement.t_total", default=0.05)
    n_steps = d.get_int("measurement.n_steps", default=50, minimum=1)
    n_trace = d.get_int("trace.n_traj", default=4000, minimum=100)
    t_trace = d.get_float("trace.t_total", default=0.5)
    if gamma <= 0 or t_total <= 0:
        raise_config(d, "measurement.gamma", "gamma and t_total must be positive")
    if t_trace <= 0:
        raise_config(d, "trace.t_total", "must be positive")
    if ctx.dry:
        return None
    pps = wv.pps_for_theta(theta)
    ms_exact = MeasurementStrength(gamma, t_total, t_total)
    ms_step = MeasurementStrength(gamma, t_total / n_steps, t_total)
    closed = wv.wv_bayes_general(pps, ms_exact.window_likelihood())

    est_exact = wv.mc_weak_value(pps, ms_exact, Stepper.BAYES_EXACT, ctx.n_traj,
                                 ctx.seed, mode="weighted", workers=ctx.workers)
    est_euler = wv.mc_weak_value(pps, ms_step, Stepper.ITO_EULER, ctx.n_traj,
                                 ctx.seed, mode="weighted", workers=ctx.workers)

    ms_trace = MeasurementStrength(gamma, ms_step.dt_step, t_trace)
    trace = ensemble_coherence(
        QubitState(0.5, 0.5 + 0.0j), ms_trace, Stepper.ITO_EULER, n_trace,
        ctx.seed + 7, workers=ctx.workers,
    )
    rate = fit_dephasing_rate(trace)

    checks = [
        Check("exact_sampler_vs_closed", est_exact.weighted.mean, closed,
              _mc_tol(est_exact.weighted.std_error)),
        Check("euler_vs_closed", est_euler.weighted.mean, closed,
              _mc_tol(est_euler.weighted.std_error, bias=0.01 * abs(closed))),
        Check("ensemble_dephasing_rate", rate, 2.0 * gamma, 0.1 * 2.0 * gamma),
    ]
    rows = [
        ("bayes-exact", est_exact.weighted.mean, est_exact.weighted.std_error, closed),
        ("ito-euler", est_euler.weighted.mean, est_euler.weighted.std_error, closed),
    ]
    write_csv(ctx.path("equivalence.csv"),
              [f"theta={theta:.17g} gamma={gamma:.17g} t_total={t_total:.17g} "
               f"n_steps={n_steps}"],
              ["estimator", "raw_mean", "se", "closed"], rows)
    dep_rows = [
        (float(trace.times[i]), float(trace.rho12[i].real), float(trace.rho12[i].imag),
         float(abs(trace.rho12[i])))
        for i in range(len(trace.times))
    ]
    write_csv(ctx.path("dephasing.csv"),
              [f"gamma={gamma:.17g} n_traj={n_trace} expected_rate={2.0 * gamma:.17g}"],
              ["t", "re_rho12", "im_rho12", "abs_rho12"], dep_rows)
    summary = {"closed_mean": closed, "dephasing_rate": rate,
               "expected_rate": 2.0 * gamma}
    return checks, ["equivalence.csv", "dephasing.csv"], summary


# --- registry ----------------------------------------------------------------


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    runner: object
    default_n_traj: int


EXPERIMENTS = {
    e.name: e
    for e in (
        Experiment("fig1", "scaled post-selected average vs angle, with turnover",
                   _run_fig1, 40000),
        Experiment("wv-sweep", "scaled average vs measurement strength at fixed angle",
                   _run_wv_sweep, 20000),
        Experiment("convergence", "strong error of Euler and Milstein vs exact chain",
                   _run_convergence, 1000),
        Experiment("amplifier-invariance",
                   "record averages under noisy amplification", _run_amplifier, 40000),
        Experiment("cqed-quadratures",
                   "homodyne averages across LO phases vs closed forms",
                   _run_cqed_quadratures, 30000),
        Experiment("cqed-tomography",
                   "two-quadrature reconstruction of the prepared state",
                   _run_cqed_tomography, 60000),
        Experiment("bayes-qte-equivalence",
                   "one-shot exact update vs stepped trajectories",
                   _run_equivalence, 20000),
    )
}


def run_experiment(doc: ConfigDoc, out_dir: str | None = None,
                   dry: bool = False) -> ExperimentResult | None:
    """Execute (or, with dry=True, only validate) the configured experiment."""
    name = doc.get_str("experiment", required=True, choices=tuple(EXPERIMENTS))
    exp = EXPERIMENTS[name]
    seed = doc.get_int("seed", required=True, minimum=0)
    n_traj = doc.get_int("n_traj", default=exp.default_n_traj, minimum=1)
    workers = doc.get_int("workers", default=None, minimum=1)
    out = out_dir if out_dir is not None else doc.get_str("out_dir", default=".")
    ctx = RunContext(doc, seed, n_traj, workers, out, dry)
    if not dry:
        os.makedirs(out, exist_ok=True)
    ret = exp.runner(ctx)
    warns = [
        Diagnostic("warning", k, "unknown key (ignored)", doc.line(k))
        for k in doc.unused_keys()
    ]
    if dry:
        return ExperimentResult(name, [], [], {}, warns)
    checks, files, extras = ret
    summary = {
        "schema": 1,
        "experiment": name,
        "seed": seed,
        "n_traj": n_traj,
        "checks": [
            {"name": c.name, "value": c.value, "reference": c.reference,
             "tol": c.tol, "kind": c.kind, "passed": c.passed}
            for c in checks
        ],
        "files": files,
        "all_passed": all(c.passed for c in checks),
        "results": extras,
    }
    spath = ctx.path("summary.json")
    with open(spath, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(summary, indent=2, sort_keys=True))
        fh.write("\n")
    files = files + ["summary.json"]
    return ExperimentResult(name, checks, files, summary, warns)
