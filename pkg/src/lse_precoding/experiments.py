"""Experiment driver: config files, replica sweeps, replica-vs-simulation
comparison reports, antenna-saving studies, CSV and SVG emission.

Config files are line-oriented ``key = value`` text with section headers
(INI). Every run writes a manifest with the fully resolved configuration
next to its outputs; re-running any mode from the manifest reproduces the
outputs byte for byte (no timestamps, fixed float formatting, trial
results independent of the thread count).
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from . import __version__
from .numerics import RandomStream, find_root_1d, ks_distance
from .penalty import PenaltySpec, Support
from .replica import (NoConvergenceError, NotAchievableError, ReplicaSolution,
                      SystemParams, calibrate, decoupled_sample,
                      random_tas_baseline, solve_constant_envelope,
                      solve_fixed_point)
from .simulator import monte_carlo

# stream indices 0..trials-1 belong to Monte Carlo trials; the decoupled-law
# sampler uses a far-away reserved index off the same master seed
_DECOUPLED_STREAM_INDEX = 1 << 52


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class SchemaError(ValueError):
    """Malformed CSV input for plotting."""


SWEEP_COLUMNS = ("alpha_inverse", "lambda", "lambda0", "chi", "p", "eta",
                 "papr_db", "distortion_db", "residual", "iterations")
SAVING_COLUMNS = ("alpha_inverse", "papr_db", "eta_target", "distortion_db",
                  "eta_random", "saving")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def db10(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    mode: str = "replica"
    out: str = "out"
    seed: int = 1
    threads: int = 1

    alpha_inverse: tuple = (2.0,)
    lambda_s: float = 1.0

    support: str = "full"
    lam: float | None = None
    lam0: float | None = None
    peak_power: float | None = None
    p_target: float | None = None
    eta_target: float | None = None
    papr_db_target: float | None = None
    eta_targets: tuple = ()
    papr_db_targets: tuple = ()

    n: int = 400
    trials: int = 100
    zero_eps: float = 1e-9
    max_sweeps: int = 500
    sim_tol: float = 1e-10
    restarts: int = 1
    init: str = "auto"

    damping: float = 0.5
    solver_tol: float = 1e-12
    max_iter: int = 100_000

    plot_inputs: tuple = ()
    plot_title: str = ""

    def solver_opts(self) -> dict:
        return dict(damping=self.damping, tol=self.solver_tol,
                    max_iter=self.max_iter)

    def sim_opts(self) -> dict:
        return dict(init=self.init, max_sweeps=self.max_sweeps,
                    tol=self.sim_tol, restarts=self.restarts)

    @property
    def uses_targets(self) -> bool:
        return self.p_target is not None


_KEY_MAP = {
    ("run", "mode"): ("mode", str),
    ("run", "out"): ("out", str),
    ("run", "seed"): ("seed", int),
    ("run", "threads"): ("threads", int),
    ("system", "alpha_inverse"): ("alpha_inverse", "grid"),
    ("system", "lambda_s"): ("lambda_s", float),
    ("penalty", "support"): ("support", str),
    ("penalty", "lambda"): ("lam", float),
    ("penalty", "lambda0"): ("lam0", float),
    ("penalty", "peak_power"): ("peak_power", float),
    ("penalty", "p_target"): ("p_target", float),
    ("penalty", "eta_target"): ("eta_target", float),
    ("penalty", "papr_db_target"): ("papr_db_target", float),
    ("penalty", "eta_targets"): ("eta_targets", "floats"),
    ("penalty", "papr_db_targets"): ("papr_db_targets", "floats"),
    ("simulation", "n"): ("n", int),
    ("simulation", "trials"): ("trials", int),
    ("simulation", "zero_eps"): ("zero_eps", float),
    ("simulation", "max_sweeps"): ("max_sweeps", int),
    ("simulation", "tol"): ("sim_tol", float),
    ("simulation", "restarts"): ("restarts", int),
    ("simulation", "init"): ("init", str),
    ("solver", "damping"): ("damping", float),
    ("solver", "tol"): ("solver_tol", float),
    ("solver", "max_iter"): ("max_iter", int),
    ("plot", "inputs"): ("plot_inputs", "strings"),
    ("plot", "title"): ("plot_title", str),
}


def _parse_grid(text: str) -> tuple:
    text = text.strip()
    if ":" in text:
        parts = [float(tok) for tok in text.split(":")]
        if len(parts) != 3:
            raise ConfigError(f"grid must be start:step:stop, got {text!r}")
        start, step, stop = parts
        if step <= 0:
            raise ConfigError("grid step must be positive")
        count = int(round((stop - start) / step)) + 1
        values = tuple(start + i * step for i in range(count))
    elif "," in text:
        values = tuple(float(tok) for tok in text.split(","))
    else:
        values = (float(text),)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("alpha_inverse grid must be strictly increasing")
    return values


def _convert(kind, raw: str):
    if kind == "grid":
        return _parse_grid(raw)
    if kind == "floats":
        return tuple(float(tok) for tok in raw.split(",") if tok.strip())
    if kind == "strings":
        return tuple(tok.strip() for tok in raw.split(",") if tok.strip())
    return kind(raw)


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section == "versions":  # informational manifest block
            continue
        for key, raw in parser.items(section):
            spec = _KEY_MAP.get((section, key))
            if spec is None:
                raise ConfigError(f"unknown config key [{section}] {key}")
            name, kind = spec
            try:
                setattr(cfg, name, _convert(kind, raw))
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply ``section.key=value`` strings on top of file values."""
    cfg = replace(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key must be section.key: {dotted!r}")
        section, key = dotted.split(".", 1)
        spec = _KEY_MAP.get((section.strip(), key.strip()))
        if spec is None:
            raise ConfigError(f"unknown config key {dotted!r}")
        name, kind = spec
        try:
            setattr(cfg, name, _convert(kind, raw.strip()))
        except ValueError as exc:
            raise ConfigError(f"bad value for {dotted}: {raw!r}") from exc
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    modes = ("replica", "sweep", "simulate", "compare", "calibrate",
             "saving", "plot")
    if cfg.mode not in modes:
        raise ConfigError(f"mode must be one of {modes}, got {cfg.mode!r}")
    if cfg.mode == "plot":
        if not cfg.plot_inputs:
            raise ConfigError("plot mode needs [plot] inputs")
        return
    if cfg.support not in ("full", "disk"):
        raise ConfigError("support must be 'full' or 'disk'")
    direct = cfg.lam is not None or cfg.lam0 is not None
    targets = cfg.uses_targets or bool(cfg.eta_targets)
    if direct and targets:
        raise ConfigError("give either direct weights or calibration targets, not both")
    if cfg.mode in ("calibrate", "sweep", "saving"):
        if not targets:
            raise ConfigError(f"{cfg.mode} mode needs calibration targets")
        if cfg.mode in ("sweep", "saving") and not cfg.eta_targets \
                and cfg.eta_target is None:
            raise ConfigError(f"{cfg.mode} mode needs eta_target or eta_targets")
    if not direct and not targets:
        raise ConfigError("give direct weights or calibration targets")
    if direct and cfg.support == "disk" and cfg.peak_power is None:
        raise ConfigError("disk support with direct weights needs peak_power")
    if targets and cfg.p_target is None:
        raise ConfigError("calibration targets need p_target")
    if cfg.mode in ("replica", "simulate", "compare", "calibrate"):
        if len(cfg.alpha_inverse) != 1:
            raise ConfigError(f"{cfg.mode} mode needs a single alpha_inverse")
        if targets and cfg.eta_target is None:
            raise ConfigError(f"{cfg.mode} mode needs eta_target")


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def manifest_text(cfg: ExperimentConfig) -> str:
    """Fully resolved config as INI text. The thread count and output path
    are execution knobs, not part of the experiment, and are left out so a
    rerun from the manifest is byte-identical wherever it lands."""
    lines = []
    sections: dict[str, list[str]] = {}
    reverse = {name: (sec, key, kind) for (sec, key), (name, kind) in _KEY_MAP.items()}
    for f in fields(cfg):
        if f.name not in reverse:
            continue
        sec, key, kind = reverse[f.name]
        if key in ("threads", "out"):
            continue
        value = getattr(cfg, f.name)
        if value is None or value == () or value == "":
            continue
        if isinstance(value, tuple):
            text = ",".join(_fmt(v) for v in value)
        else:
            text = _fmt(value)
        sections.setdefault(sec, []).append(f"{key} = {text}")
    for sec in ("run", "system", "penalty", "simulation", "solver", "plot"):
        if sec in sections:
            lines.append(f"[{sec}]")
            lines.extend(sections[sec])
            lines.append("")
    lines.append("[versions]")
    lines.append(f"lse_precoding = {__version__}")
    lines.append(f"numpy = {np.__version__}")
    import scipy
    lines.append(f"scipy = {scipy.__version__}")
    lines.append("")
    return "\n".join(lines)


def _write(path: str, text: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


# ---------------------------------------------------------------------------
# calibrated points with the peak-cap boundary fallback
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibratedPoint:
    lam: float
    lam0: float
    solution: ReplicaSolution
    status: str = "ok"


def calibrated_point(alpha_inverse: float, lambda_s: float, p_target: float,
                     eta_target: float, papr_db: float | None,
                     support: str = "full", peak_power: float | None = None,
                     solver_opts: dict | None = None) -> CalibratedPoint:
    """Calibrate (lambda, lambda0) at one load point.

    The peak cap is anchored to the average-power target, P = papr * p.
    When that cap makes the power target infeasible (p <= eta * P is a hard
    bound) the point falls back to the boundary solution: every active
    antenna at the peak, power eta * P, reported with status
    "peak-clamped".
    """
    alpha = 1.0 / alpha_inverse
    base_support = Support.disk(peak_power) if (support == "disk" and peak_power) \
        else Support.full_plane()
    params = SystemParams(alpha=alpha, lambda_s=lambda_s,
                          penalty=PenaltySpec(support=base_support))
    papr = None if papr_db is None else 10.0 ** (papr_db / 10.0)
    try:
        lam, lam0, sol = calibrate(params, p_star=p_target, eta_star=eta_target,
                                   papr_star=papr, solver_opts=solver_opts)
        return CalibratedPoint(lam, lam0, sol)
    except NotAchievableError:
        if papr is None:
            raise
        p_clamp = eta_target * papr * p_target
        if not (0 < p_clamp < p_target):
            raise
        sol, lam, lam0 = solve_constant_envelope(params, p_clamp, eta_target)
        return CalibratedPoint(lam, lam0, sol, status="peak-clamped")


def _direct_params(cfg: ExperimentConfig, alpha_inverse: float) -> SystemParams:
    support = Support.disk(cfg.peak_power) if cfg.support == "disk" \
        else Support.full_plane()
    spec = PenaltySpec(lam=cfg.lam or 0.0, lam0=cfg.lam0 or 0.0, support=support)
    return SystemParams(alpha=1.0 / alpha_inverse, lambda_s=cfg.lambda_s,
                        penalty=spec)


def _point_for_config(cfg: ExperimentConfig):
    """(lam, lam0, solution, params, status) at the single configured load."""
    ainv = cfg.alpha_inverse[0]
    if cfg.uses_targets:
        pt = calibrated_point(ainv, cfg.lambda_s, cfg.p_target, cfg.eta_target,
                              cfg.papr_db_target, cfg.support, cfg.peak_power,
                              cfg.solver_opts())
        sol = pt.solution
        support = Support.disk(sol.papr * sol.state.p) if math.isfinite(sol.papr) \
            else Support.full_plane()
        lam = 0.0 if math.isnan(pt.lam) else pt.lam
        lam0 = 0.0 if math.isnan(pt.lam0) else pt.lam0
        spec = PenaltySpec(lam=lam, lam0=lam0, support=support)
        params = SystemParams(alpha=1.0 / ainv, lambda_s=cfg.lambda_s, penalty=spec)
        return pt.lam, pt.lam0, sol, params, pt.status
    params = _direct_params(cfg, ainv)
    sol = solve_fixed_point(params, **cfg.solver_opts())
    return params.penalty.lam, params.penalty.lam0, sol, params, "ok"


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------

def write_csv(path: str, columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(columns) + ["status"])
    for row, status in rows:
        writer.writerow([_fmt(v) for v in row] + [status])
    return _write(path, buf.getvalue())


def read_csv(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: empty CSV")
    header, data = rows[0], rows[1:]
    return header, data


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------

def _solution_lines(lam, lam0, sol: ReplicaSolution, status: str) -> list[str]:
    st = sol.state
    return [
        f"status = {status}",
        f"lambda = {_fmt(lam)}",
        f"lambda0 = {_fmt(lam0)}",
        f"chi = {_fmt(st.chi)}",
        f"p = {_fmt(st.p)}",
        f"lambda_rs = {_fmt(st.lambda_rs)}",
        f"kappa = {_fmt(st.kappa)}",
        f"tau = {_fmt(st.thresholds.tau)}",
        f"tau_tilde = {_fmt(st.thresholds.tau_tilde)}",
        f"tau_hat = {_fmt(st.thresholds.tau_hat)}",
        f"distortion = {_fmt(sol.distortion)}",
        f"distortion_db = {_fmt(db10(sol.distortion))}",
        f"eta = {_fmt(sol.eta)}",
        f"papr = {_fmt(sol.papr)}",
        f"papr_db = {_fmt(db10(sol.papr))}",
        f"residual = {_fmt(sol.residual)}",
        f"iterations = {sol.iterations}",
    ]


def run_replica_point(cfg: ExperimentConfig, out_dir: str) -> dict:
    lam, lam0, sol, _, status = _point_for_config(cfg)
    path = _write(os.path.join(out_dir, "replica.txt"),
                  "\n".join(_solution_lines(lam, lam0, sol, status)) + "\n")
    manifest = _write(os.path.join(out_dir, "manifest.cfg"), manifest_text(cfg))
    return {"replica": path, "manifest": manifest}


def run_calibrate(cfg: ExperimentConfig, out_dir: str) -> dict:
    lam, lam0, sol, _, status = _point_for_config(cfg)
    path = _write(os.path.join(out_dir, "calibration.txt"),
                  "\n".join(_solution_lines(lam, lam0, sol, status)) + "\n")
    manifest = _write(os.path.join(out_dir, "manifest.cfg"), manifest_text(cfg))
    return {"calibration": path, "manifest": manifest}


def _sweep_row(ainv: float, pt: CalibratedPoint):
    sol = pt.solution
    st = sol.state
    row = (ainv, pt.lam, pt.lam0, st.chi, st.p, sol.eta, db10(sol.papr),
           db10(sol.distortion), sol.residual, sol.iterations)
    return row, pt.status


def run_replica_sweep(cfg: ExperimentConfig, out_dir: str) -> dict:
    """One CSV per (eta target, papr target) curve over the load grid."""
    etas = cfg.eta_targets or (cfg.eta_target,)
    paprs = cfg.papr_db_targets or ((cfg.papr_db_target,)
                                    if cfg.papr_db_target is not None else (None,))
    written = {}
    for eta_t in etas:
        for papr_db in paprs:
            tag = f"eta{eta_t:g}"
            if papr_db is not None:
                tag += f"_papr{papr_db:g}db"
            rows = []
            for ainv in cfg.alpha_inverse:
                try:
                    pt = calibrated_point(ainv, cfg.lambda_s, cfg.p_target, eta_t,
                                          papr_db, cfg.support, cfg.peak_power,
                                          cfg.solver_opts())
                    rows.append(_sweep_row(ainv, pt))
                except (NotAchievableError, NoConvergenceError) as exc:
                    blank = (ainv,) + (math.nan,) * 8 + (0,)
                    rows.append((blank, f"error: {exc}"))
            path = write_csv(os.path.join(out_dir, f"sweep_{tag}.csv"),
                             SWEEP_COLUMNS, rows)
            written[tag] = path
    written["manifest"] = _write(os.path.join(out_dir, "manifest.cfg"),
                                 manifest_text(cfg))
    return written


def _run_monte_carlo(cfg: ExperimentConfig, params: SystemParams, lam, lam0):
    for weight in (lam, lam0):
        if weight is not None and math.isnan(weight):
            raise ConfigError("the clamped boundary point has no representable "
                              "penalty weights; simulate with direct weights")
    ainv = cfg.alpha_inverse[0]
    k = int(round(cfg.n / ainv))
    return monte_carlo(cfg.n, k, cfg.lambda_s, params.penalty,
                       trials=cfg.trials, master_seed=cfg.seed,
                       solver_opts=cfg.sim_opts(), zero_eps=cfg.zero_eps,
                       threads=cfg.threads)


def _report_lines(report) -> list[str]:
    return [
        f"trials = {report.trials}",
        f"distortion_mean = {_fmt(report.distortion_mean)}",
        f"distortion_ci95 = {_fmt(report.distortion_ci95)}",
        f"power_mean = {_fmt(report.power_mean)}",
        f"power_ci95 = {_fmt(report.power_ci95)}",
        f"eta_mean = {_fmt(report.eta_mean)}",
        f"eta_ci95 = {_fmt(report.eta_ci95)}",
        f"papr_mean = {_fmt(report.papr_mean)}",
        f"papr_ci95 = {_fmt(report.papr_ci95)}",
    ]


def run_simulate(cfg: ExperimentConfig, out_dir: str) -> dict:
    lam, lam0, sol, params, status = _point_for_config(cfg)
    report = _run_monte_carlo(cfg, params, lam, lam0)
    lines = [f"status = {status}", f"lambda = {_fmt(lam)}",
             f"lambda0 = {_fmt(lam0)}"] + _report_lines(report)
    path = _write(os.path.join(out_dir, "simulation.txt"), "\n".join(lines) + "\n")
    hist_rows = [((edge, mass, first, second), "ok") for edge, mass, first, second
                 in zip(report.histogram_edges[:-1], report.magnitude_histogram,
                        report.per_index_marginals["first_half"],
                        report.per_index_marginals["second_half"])]
    hist = write_csv(os.path.join(out_dir, "histogram.csv"),
                     ("bin_left", "mass", "first_half", "second_half"), hist_rows)
    manifest = _write(os.path.join(out_dir, "manifest.cfg"), manifest_text(cfg))
    return {"simulation": path, "histogram": hist, "manifest": manifest}


def run_compare(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Replica solve and Monte Carlo at the same parameters, side by side,
    plus distribution distances against the decoupled law."""
    lam, lam0, sol, params, status = _point_for_config(cfg)
    report = _run_monte_carlo(cfg, params, lam, lam0)

    stream = RandomStream(cfg.seed, _DECOUPLED_STREAM_INDEX)
    law = np.abs(decoupled_sample(sol.state, params.penalty, stream, 10 ** 6))
    ks_law = ks_distance(report.magnitudes, law)
    n = cfg.n
    mags = report.magnitudes.reshape(report.trials, n)
    ks_halves = ks_distance(mags[:, : n // 2].ravel(), mags[:, n // 2:].ravel())

    pairs = [
        ("distortion", sol.distortion, report.distortion_mean, report.distortion_ci95),
        ("power", sol.state.p, report.power_mean, report.power_ci95),
        ("eta", sol.eta, report.eta_mean, report.eta_ci95),
        ("papr", sol.papr, report.papr_mean, report.papr_ci95),
    ]
    rows = []
    for name, replica_v, emp_v, ci in pairs:
        gap = abs(emp_v - replica_v)
        rel = gap / abs(replica_v) if replica_v not in (0.0, math.inf) else math.nan
        rows.append(((name, replica_v, emp_v, ci, rel), "ok"))
    csv_path = write_csv(os.path.join(out_dir, "compare.csv"),
                         ("metric", "replica", "empirical", "ci95", "rel_gap"),
                         rows)
    lines = [f"status = {status}", f"lambda = {_fmt(lam)}",
             f"lambda0 = {_fmt(lam0)}",
             f"ks_decoupled = {_fmt(ks_law)}",
             f"ks_index_halves = {_fmt(ks_halves)}"] + _report_lines(report)
    summary = _write(os.path.join(out_dir, "compare_summary.txt"),
                     "\n".join(lines) + "\n")
    manifest = _write(os.path.join(out_dir, "manifest.cfg"), manifest_text(cfg))
    return {"compare": csv_path, "summary": summary, "manifest": manifest}


def match_random_selection(alpha_inverse: float, lambda_s: float, p_target: float,
                           d_target: float, solver_opts: dict | None = None,
                           step: float = 0.05) -> float:
    """Selection fraction at which the random-selection ridge baseline meets
    a target distortion; the baseline improves monotonically with more
    antennas.

    Starting from full selection the fraction is walked down until the
    baseline falls behind the target; small fractions can make the power
    target infeasible for the overloaded subsystem, which counts as behind.
    """
    params = SystemParams(alpha=1.0 / alpha_inverse, lambda_s=lambda_s,
                          penalty=PenaltySpec())

    def gap(eta_r):
        try:
            sol = random_tas_baseline(params, eta_r, p_target, solver_opts)
        except (NotAchievableError, NoConvergenceError):
            return math.inf
        return sol.distortion - d_target

    if gap(1.0) > 0:
        raise NotAchievableError("baseline cannot reach the target distortion")
    hi = 1.0
    lo = hi - step
    while lo > step and gap(lo) < 0:
        hi = lo
        lo -= step
    if gap(lo) < 0:
        raise NotAchievableError("no crossing above the feasibility floor")

    def bounded_gap(eta_r):
        g = gap(eta_r)
        return g if math.isfinite(g) else 1e6

    return find_root_1d(bounded_gap, lo, hi, tol=1e-9, xtol=1e-10)


def run_antenna_saving(cfg: ExperimentConfig, out_dir: str) -> dict:
    """For each (eta, papr, load): solve the penalized precoder, then find
    the random-selection fraction with equal distortion; saving is the
    difference."""
    etas = cfg.eta_targets or (cfg.eta_target,)
    paprs = cfg.papr_db_targets or ((cfg.papr_db_target,)
                                    if cfg.papr_db_target is not None else (None,))
    rows = []
    for papr_db in paprs:
        for eta_t in etas:
            for ainv in cfg.alpha_inverse:
                try:
                    pt = calibrated_point(ainv, cfg.lambda_s, cfg.p_target, eta_t,
                                          papr_db, cfg.support, cfg.peak_power,
                                          cfg.solver_opts())
                    eta_r = match_random_selection(ainv, cfg.lambda_s,
                                                   cfg.p_target,
                                                   pt.solution.distortion,
                                                   cfg.solver_opts())
                    row = (ainv, math.nan if papr_db is None else papr_db, eta_t,
                           db10(pt.solution.distortion), eta_r, eta_r - eta_t)
                    rows.append((row, pt.status))
                except (NotAchievableError, NoConvergenceError) as exc:
                    row = (ainv, math.nan if papr_db is None else papr_db, eta_t,
                           math.nan, math.nan, math.nan)
                    rows.append((row, f"error: {exc}"))
    path = write_csv(os.path.join(out_dir, "antenna_saving.csv"),
                     SAVING_COLUMNS, rows)
    manifest = _write(os.path.join(out_dir, "manifest.cfg"), manifest_text(cfg))
    return {"saving": path, "manifest": manifest}


# ---------------------------------------------------------------------------
# SVG plotting
# ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
            "#ff7f0e", "#8c564b", "#17becf", "#e377c2")


def _curve_from_csv(path: str):
    header, data = read_csv(path)
    try:
        xi = header.index("alpha_inverse")
        yi = header.index("distortion_db")
        si = header.index("status") if "status" in header else None
    except ValueError as exc:
        raise SchemaError(f"{path}: missing required column") from exc
    xs, ys = [], []
    for row in data:
        if si is not None and row[si] != "ok" and not row[si].startswith("peak-clamped"):
            continue
        try:
            x, y = float(row[xi]), float(row[yi])
        except ValueError as exc:
            raise SchemaError(f"{path}: non-numeric row {row!r}") from exc
        if math.isfinite(x) and math.isfinite(y):
            xs.append(x)
            ys.append(y)
    if not xs:
        raise SchemaError(f"{path}: no plottable rows")
    return xs, ys


def emit_plot(csv_paths, out_path: str, title: str = "") -> str:
    """Deterministic SVG: one polyline per CSV, axes in inverse load and
    distortion dB, legend from file names. Identical inputs give identical
    bytes."""
    if not csv_paths:
        raise SchemaError("no input CSVs")
    curves = [(os.path.basename(p), *_curve_from_csv(p)) for p in csv_paths]
    width, height = 640.0, 480.0
    ml, mr, mt, mb = 60.0, 160.0, 30.0, 45.0
    xs_all = [x for _, xs, _ in curves for x in xs]
    ys_all = [y for _, _, ys in curves for y in ys]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr)

    def sy(y):
        return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{ml:.1f}" y1="{height - mb:.1f}" x2="{width - mr:.1f}" '
        f'y2="{height - mb:.1f}" stroke="black"/>',
        f'<line x1="{ml:.1f}" y1="{mt:.1f}" x2="{ml:.1f}" '
        f'y2="{height - mb:.1f}" stroke="black"/>',
    ]
    for i in range(5):
        xv = x_lo + (x_hi - x_lo) * i / 4
        yv = y_lo + (y_hi - y_lo) * i / 4
        parts.append(f'<text x="{sx(xv):.1f}" y="{height - mb + 18:.1f}" '
                     f'font-size="11" text-anchor="middle">{xv:.3g}</text>')
        parts.append(f'<text x="{ml - 8:.1f}" y="{sy(yv) + 4:.1f}" '
                     f'font-size="11" text-anchor="end">{yv:.3g}</text>')
    parts.append(f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 8:.1f}" '
                 f'font-size="13" text-anchor="middle">&#945;&#8315;&#185;</text>')
    parts.append(f'<text x="16" y="{(mt + height - mb) / 2:.1f}" font-size="13" '
                 f'text-anchor="middle" transform="rotate(-90 16 '
                 f'{(mt + height - mb) / 2:.1f})">D in [dB]</text>')
    if title:
        parts.append(f'<text x="{(ml + width - mr) / 2:.1f}" y="20" '
                     f'font-size="14" text-anchor="middle">{title}</text>')
    for i, (name, xs, ys) in enumerate(curves):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{pts}"/>')
        ly = mt + 16 + 16 * i
        parts.append(f'<line x1="{width - mr + 8:.1f}" y1="{ly:.1f}" '
                     f'x2="{width - mr + 28:.1f}" y2="{ly:.1f}" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - mr + 32:.1f}" y="{ly + 4:.1f}" '
                     f'font-size="11">{name}</text>')
    parts.append("</svg>")
    return _write(out_path, "\n".join(parts) + "\n")


def run_plot(cfg: ExperimentConfig, out_dir: str) -> dict:
    path = emit_plot(cfg.plot_inputs, os.path.join(out_dir, "plot.svg"),
                     cfg.plot_title)
    manifest = _write(os.path.join(out_dir, "manifest.cfg"), manifest_text(cfg))
    return {"plot": path, "manifest": manifest}


_RUNNERS = {
    "replica": run_replica_point,
    "calibrate": run_calibrate,
    "sweep": run_replica_sweep,
    "simulate": run_simulate,
    "compare": run_compare,
    "saving": run_antenna_saving,
    "plot": run_plot,
}


def run(cfg: ExperimentConfig) -> dict:
    validate_config(cfg)
    return _RUNNERS[cfg.mode](cfg, cfg.out)
