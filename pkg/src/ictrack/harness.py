"""Experiment configuration, metrics, trace CSVs, and the benchmark runner.

A run takes one trajectory and a set of controllers, simulates each
controller on the same closed loop from the origin, and writes per-step
trace CSVs, a report table with percentage deltas against the first
listed controller, and two SVG figures.  Offline synthesis products are
cached on disk keyed by a content hash of everything that influences
them, so repeated runs skip the invariant-set iteration.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import presets
from .controllers import (
    ControllerError,
    EicController,
    IcController,
    MpcController,
    TrackingLqrController,
    build_move_blocking,
    check_reference_admissibility,
)
from .plant import AttitudePid, SimTrace, UavParams, simulate
from .synthesis import (
    AxisDesign,
    DesignBundle,
    build_axis_design,
    integrator_model,
    load_design,
    save_design,
)
from .trajectories import ReferenceTrajectory, TrajectoryError

OUT_DIR_ENV = "ICTRACK_OUT_DIR"
CONTROLLER_NAMES = ("lqr", "ic", "eic", "mpc", "mpcmb")

TRACE_COLUMNS = (
    "t", "y", "dy", "z", "dz", "phi", "dphi", "ay_cmd", "az_cmd",
    "phi_bar", "F_T", "tau", "c_star_y", "c_star_z", "region_y",
    "region_z", "solve_time_y", "solve_time_z", "flags",
    "ref_y", "ref_dy", "ref_z", "ref_dz",
)
_STRING_COLUMNS = {"region_y", "region_z", "flags"}
TIMING_COLUMNS = ("solve_time_y", "solve_time_z")


class HarnessError(RuntimeError):
    """Configuration or experiment failure."""


@dataclass
class ExperimentConfig:
    controllers: tuple = ("mpc", "mpcmb", "eic", "ic")
    kind: str = "lemniscate"
    a_y: float = 1.0
    a_z: float = 0.5
    omega: float = 0.6
    phase: float = 0.0
    duration: float = 21.0
    ts_outer: float = presets.TS_OUTER
    ts_inner: float = presets.TS_INNER
    preview: int = presets.PREVIEW_STEPS
    eta: float = presets.ETA
    envelope_margin: float = presets.ENVELOPE_MARGIN
    block_coarse_s: float = presets.BLOCK_COARSE_S
    inv_max_iter: int = 2000
    seed: int = 0
    out_dir: str = "results"
    weight_overrides: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        if not os.path.exists(path):
            raise HarnessError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise HarnessError(f"cannot parse config {path}: {exc}") from exc
        cfg = cls()
        float_keys = {"a_y", "a_z", "omega", "phase", "duration", "ts_outer",
                      "ts_inner", "eta", "envelope_margin", "block_coarse_s"}
        int_keys = {"preview", "inv_max_iter", "seed"}
        for section in parser.sections():
            if section.startswith("weights_"):
                axis = section.split("_", 1)[1]
                entry = cfg.weight_overrides.setdefault(axis, {})
                for key, value in parser.items(section):
                    entry[key] = [float(v) for v in value.split(",")]
                continue
            for key, value in parser.items(section):
                if key == "controllers":
                    cfg.controllers = tuple(
                        name.strip() for name in value.split(",")
                        if name.strip())
                elif key in float_keys:
                    cfg.__setattr__(key, float(value))
                elif key in int_keys:
                    cfg.__setattr__(key, int(value))
                elif key in ("kind", "out_dir"):
                    cfg.__setattr__(key, value.strip())
                else:
                    raise HarnessError(
                        f"unknown config key '{key}' in section "
                        f"[{section}] of {path}")
        env_out = os.environ.get(OUT_DIR_ENV)
        if env_out:
            cfg.out_dir = env_out
        return cfg

    def design_inputs(self) -> dict:
        """Everything that influences offline synthesis, for cache keys."""
        traj = self.trajectory()
        env = traj.envelope()
        return {
            "ts_outer": self.ts_outer,
            "preview": self.preview,
            "eta": self.eta,
            "envelope": {axis: [env[axis][0] + self.envelope_margin,
                                env[axis][1] + self.envelope_margin]
                         for axis in presets.AXIS_NAMES},
            "inv_max_iter": self.inv_max_iter,
            "weights": {axis: {name: [np.asarray(w.q).tolist(),
                                      np.asarray(w.r).tolist()]
                               for name, w in self.axis_weights(axis).items()}
                        for axis in presets.AXIS_NAMES},
            "state_sets": {axis: [presets.state_set(axis).f.tolist(),
                                  presets.state_set(axis).g.tolist()]
                           for axis in presets.AXIS_NAMES},
            "input_sets": {axis: [presets.input_set(axis).f.tolist(),
                                  presets.input_set(axis).g.tolist()]
                           for axis in presets.AXIS_NAMES},
        }

    def trajectory(self) -> ReferenceTrajectory:
        return ReferenceTrajectory(kind=self.kind, a_y=self.a_y,
                                   a_z=self.a_z, omega=self.omega,
                                   phase=self.phase, duration=self.duration)

    def axis_weights(self, axis):
        weights = presets.axis_weights(axis)
        overrides = self.weight_overrides.get(axis, {})
        for key, values in overrides.items():
            name = key.split("_", 1)[1] if "_" in key else key
            if name not in weights:
                raise HarnessError(f"unknown weight override '{key}'")
            if key.startswith("q_"):
                weights[name] = type(weights[name])(
                    q=np.diag(values), r=weights[name].r)
            elif key.startswith("r_"):
                weights[name] = type(weights[name])(
                    q=weights[name].q, r=np.array([[values[0]]]))
            else:
                raise HarnessError(f"unknown weight override '{key}'")
        return weights


def validate_config(cfg: ExperimentConfig, bundle: DesignBundle | None = None,
                    check_admissibility: bool = True) -> list:
    """All detectable problems with a configuration, not just the first.

    When check_admissibility is set, designs are synthesized (or loaded
    from cache) and every reference sample is tested for set-translation
    admissibility; violations name the escaping halfspace.
    """
    problems = []
    for name in cfg.controllers:
        if name not in CONTROLLER_NAMES:
            problems.append(
                f"unknown controller '{name}' (expected one of "
                f"{', '.join(CONTROLLER_NAMES)})")
    if not cfg.controllers:
        problems.append("no controllers selected")
    if cfg.duration <= 0.0:
        problems.append("duration must be positive")
    if cfg.ts_outer <= 0.0 or cfg.ts_inner <= 0.0:
        problems.append("sample periods must be positive")
    else:
        ratio = cfg.ts_outer / cfg.ts_inner
        if abs(ratio - round(ratio)) > 1e-9 or \
                round(ratio) != presets.RATE_RATIO:
            problems.append(
                f"outer/inner rate ratio must be {presets.RATE_RATIO}, "
                f"got {ratio:g}")
        steps = cfg.duration / cfg.ts_outer
        if abs(steps - round(steps)) > 1e-9:
            problems.append("duration must be a multiple of the outer period")
    if cfg.preview < 1:
        problems.append("preview length must be >= 1")
    if not 0.0 <= cfg.eta < 1.0:
        problems.append("eta must lie in [0, 1)")
    if cfg.envelope_margin < 0.0:
        problems.append("envelope margin must be >= 0")
    if cfg.block_coarse_s <= 0.0:
        problems.append("coarse blocking period must be positive")
    try:
        traj = cfg.trajectory()
    except TrajectoryError as exc:
        problems.append(str(exc))
        traj = None
    if problems or not check_admissibility or traj is None:
        return problems
    try:
        bundle = bundle or build_designs(cfg)
    except Exception as exc:  # noqa: BLE001 - collect, do not mask
        problems.append(f"design synthesis failed: {exc}")
        return problems
    refs = _reference_grid(cfg, traj)
    for axis, sl in (("y", slice(0, 2)), ("z", slice(2, 4))):
        problems.extend(
            f"axis {axis}: {text}"
            for text in check_reference_admissibility(
                bundle.axes[axis], refs[:, sl]))
    return problems


def _reference_grid(cfg: ExperimentConfig, traj: ReferenceTrajectory):
    """Reference samples covering the run plus the preview lookahead."""
    steps = int(round(cfg.duration / cfg.ts_outer)) + cfg.preview
    t = np.arange(steps + 1) * cfg.ts_outer
    return traj.reference_at(t)


def config_hash(cfg: ExperimentConfig) -> str:
    payload = json.dumps(cfg.design_inputs(), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def build_designs(cfg: ExperimentConfig,
                  cache_dir: str | None = None) -> DesignBundle:
    """Per-axis synthesis, cached on disk by content hash."""
    key = config_hash(cfg)
    cache_path = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        cache_path = os.path.join(cache_dir, f"design-{key}.json")
        if os.path.exists(cache_path):
            return load_design(cache_path)
    traj = cfg.trajectory()
    env = traj.envelope()
    model = integrator_model(cfg.ts_outer)
    axes = {}
    for axis in presets.AXIS_NAMES:
        envelope = (env[axis][0] + cfg.envelope_margin,
                    env[axis][1] + cfg.envelope_margin)
        axes[axis] = build_axis_design(
            model, cfg.axis_weights(axis), presets.state_set(axis),
            presets.input_set(axis), envelope, eta=cfg.eta,
            n_prev=cfg.preview, inv_max_iter=cfg.inv_max_iter)
    bundle = DesignBundle(axes=axes, ts=cfg.ts_outer, meta={"key": key})
    if cache_path is not None:
        save_design(bundle, cache_path)
        return load_design(cache_path)
    return bundle


def make_axis_controller(name: str, design: AxisDesign,
                         cfg: ExperimentConfig):
    if name == "lqr":
        return TrackingLqrController(design)
    if name == "ic":
        return IcController(design)
    if name == "eic":
        return EicController(design)
    if name == "mpc":
        return MpcController(design)
    if name == "mpcmb":
        blocking = build_move_blocking(cfg.preview * cfg.ts_outer,
                                       cfg.ts_outer, cfg.block_coarse_s)
        return MpcController(design, blocking=blocking)
    raise HarnessError(f"unknown controller '{name}'")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def metric_j_axis(errors, inputs, q, r, ts: float) -> float:
    """(1/ts) * sum_k (e_k' Q e_k + u_k' R u_k) for one axis."""
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    inputs = np.asarray(inputs, dtype=float).ravel()
    if errors.shape[0] != inputs.shape[0]:
        raise HarnessError("error and input lengths differ")
    q = np.asarray(q, dtype=float)
    r_val = float(np.asarray(r, dtype=float).reshape(-1)[0])
    stage = np.einsum("ki,ij,kj->k", errors, q, errors) + r_val * inputs ** 2
    return float(stage.sum() / ts)


def metric_j(trace: SimTrace, refs, weights, ts: float) -> float:
    """Common tracking-cost yardstick, both axes under the given weights.

    refs has columns (ref_y, ref_dy, ref_z, ref_dz) aligned with the
    trace rows; weights maps axis name to the CostWeights used for every
    controller alike.
    """
    refs = np.asarray(refs, dtype=float)
    total = 0.0
    for axis, sl in (("y", slice(0, 2)), ("z", slice(2, 4))):
        err = trace.axis_states(axis) - refs[:, sl]
        w = weights[axis]
        total += metric_j_axis(err, trace.axis_commands(axis), w.q, w.r, ts)
    return total


def metric_ise(trace: SimTrace, refs, ts: float) -> float:
    """(1/ts) * sum of squared position errors, summed over both axes."""
    refs = np.asarray(refs, dtype=float)
    e_y = trace.y - refs[:, 0]
    e_z = trace.z - refs[:, 2]
    return float((np.sum(e_y ** 2) + np.sum(e_z ** 2)) / ts)


def metric_energy(trace: SimTrace, ts: float) -> float:
    """(1/ts) * sum of squared commanded accelerations, both axes."""
    return float((np.sum(trace.ay_cmd ** 2) + np.sum(trace.az_cmd ** 2)) / ts)


@dataclass
class TimingStats:
    total_s: float
    mean_ms: float
    max_ms: float
    count: int


def timing_stats(step_times) -> TimingStats:
    """Aggregate per-step controller times (seconds in, ms out)."""
    step_times = np.asarray(step_times, dtype=float)
    if step_times.size == 0:
        return TimingStats(0.0, 0.0, 0.0, 0)
    return TimingStats(
        total_s=float(step_times.sum()),
        mean_ms=float(step_times.mean() * 1e3),
        max_ms=float(step_times.max() * 1e3),
        count=int(step_times.size))


# ---------------------------------------------------------------------------
# Trace CSV
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    value = float(value)
    if np.isnan(value):
        return ""
    return repr(value)


def write_trace_csv(path, trace: SimTrace, refs) -> None:
    """Fixed-order trace table; floats use shortest round-trip form.

    refs supplies the four reference columns aligned with the trace rows.
    NaN cells (absent interpolation coefficients, the final torque) are
    written empty.
    """
    refs = np.asarray(refs, dtype=float)
    if refs.shape != (len(trace), 4):
        raise HarnessError("reference block does not match trace length")
    columns = {
        "t": trace.t, "y": trace.y, "dy": trace.dy, "z": trace.z,
        "dz": trace.dz, "phi": trace.phi, "dphi": trace.dphi,
        "ay_cmd": trace.ay_cmd, "az_cmd": trace.az_cmd,
        "phi_bar": trace.phi_bar, "F_T": trace.thrust, "tau": trace.tau,
        "c_star_y": trace.c_star_y, "c_star_z": trace.c_star_z,
        "region_y": trace.region_y, "region_z": trace.region_z,
        "solve_time_y": trace.solve_time_y,
        "solve_time_z": trace.solve_time_z,
        "flags": trace.flags,
        "ref_y": refs[:, 0], "ref_dy": refs[:, 1],
        "ref_z": refs[:, 2], "ref_dz": refs[:, 3],
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for i in range(len(trace)):
            writer.writerow([_fmt(columns[name][i])
                             for name in TRACE_COLUMNS])


def read_trace_csv(path) -> dict:
    """Parse a trace CSV back into column arrays (strings stay strings)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                tuple(reader.fieldnames) != TRACE_COLUMNS:
            raise HarnessError(f"unexpected trace columns in {path}")
        rows = list(reader)
    out = {}
    for name in TRACE_COLUMNS:
        if name in _STRING_COLUMNS:
            out[name] = [row[name] for row in rows]
        else:
            out[name] = np.array(
                [float(row[name]) if row[name] else np.nan for row in rows])
    return out


def write_sets_csv(path, bundle: DesignBundle) -> None:
    """All synthesized sets, one halfspace per row: axis, set, F row, g."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis", "set", "f_pos", "f_vel", "g"])
        for axis, design in sorted(bundle.axes.items()):
            for name in ("low", "mid", "high"):
                poly = design.sets[name]
                for i in range(poly.nrows):
                    writer.writerow([axis, name, repr(poly.f[i, 0]),
                                     repr(poly.f[i, 1]), repr(poly.g[i])])


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

@dataclass
class ControllerResult:
    name: str
    j: float = np.nan
    ise: float = np.nan
    energy: float = np.nan
    timing: TimingStats | None = None
    first_ms: float = np.nan
    steady_mean_ms: float = np.nan
    steady_max_ms: float = np.nan
    trace_path: str = ""
    flag_counts: dict = field(default_factory=dict)
    aborted: bool = False
    error: str = ""


@dataclass
class ExperimentReport:
    config_key: str
    results: list
    out_dir: str
    report_path: str = ""

    def result(self, name: str) -> ControllerResult:
        for res in self.results:
            if res.name == name:
                return res
        raise KeyError(name)


def _flag_counts(trace: SimTrace) -> dict:
    counts = {}
    for cell in trace.flags:
        for token in cell.split(";"):
            if token:
                counts[token] = counts.get(token, 0) + 1
    return counts


def run_controller(name: str, cfg: ExperimentConfig, bundle: DesignBundle,
                   traj: ReferenceTrajectory, refs) -> tuple:
    ctrl_y = make_axis_controller(name, bundle.axes["y"], cfg)
    ctrl_z = make_axis_controller(name, bundle.axes["z"], cfg)
    trace = simulate(ctrl_y, ctrl_z, traj, cfg.duration,
                     params=UavParams(), pid=AttitudePid(ts=cfg.ts_inner),
                     ts_outer=cfg.ts_outer, ts_inner=cfg.ts_inner)
    n = len(trace)
    res = ControllerResult(name=name)
    res.aborted = trace.aborted
    if trace.aborted:
        res.error = trace.abort_reason
    res.j = metric_j(trace, refs[:n],
                     {axis: presets.metric_weights(axis)
                      for axis in presets.AXIS_NAMES}, cfg.ts_outer)
    res.ise = metric_ise(trace, refs[:n], cfg.ts_outer)
    res.energy = metric_energy(trace, cfg.ts_outer)
    step_times = trace.solve_time_y + trace.solve_time_z
    res.timing = timing_stats(step_times)
    res.first_ms = float(step_times[0] * 1e3) if n else np.nan
    if n > 1:
        steady = timing_stats(step_times[1:])
        res.steady_mean_ms = steady.mean_ms
        res.steady_max_ms = steady.max_ms
    res.flag_counts = _flag_counts(trace)
    return res, trace


def run_experiment(cfg: ExperimentConfig,
                   write_outputs: bool = True) -> ExperimentReport:
    """Simulate every selected controller on the shared trajectory.

    Designs come from the on-disk cache when available.  A controller
    failure is recorded in its result row; the remaining controllers
    still run.  Returns the report; traces, the report table, and SVG
    figures land in the output directory unless write_outputs is off.
    """
    problems = validate_config(cfg, check_admissibility=False)
    if problems:
        raise HarnessError("invalid config: " + "; ".join(problems))
    out_dir = cfg.out_dir
    cache_dir = os.path.join(out_dir, "design_cache")
    if write_outputs:
        os.makedirs(out_dir, exist_ok=True)
    bundle = build_designs(cfg, cache_dir=cache_dir if write_outputs else None)
    traj = cfg.trajectory()
    admissibility = validate_config(cfg, bundle=bundle)
    if admissibility:
        raise HarnessError("invalid config: " + "; ".join(admissibility))
    n_rows = int(round(cfg.duration / cfg.ts_outer)) + 1
    refs = traj.reference_at(np.arange(n_rows) * cfg.ts_outer)

    report = ExperimentReport(config_key=config_hash(cfg), results=[],
                              out_dir=out_dir)
    traces = {}
    for name in cfg.controllers:
        try:
            res, trace = run_controller(name, cfg, bundle, traj, refs)
            traces[name] = trace
        except (ControllerError, HarnessError, RuntimeError) as exc:
            res = ControllerResult(name=name, error=str(exc))
        if write_outputs and name in traces:
            path = os.path.join(out_dir, f"trace_{name}.csv")
            write_trace_csv(path, traces[name], refs[:len(traces[name])])
            res.trace_path = path
        report.results.append(res)

    if write_outputs:
        write_sets_csv(os.path.join(out_dir, "sets.csv"), bundle)
        report.report_path = os.path.join(out_dir, "report.txt")
        with open(report.report_path, "w", encoding="utf-8") as fh:
            fh.write(render_report(report))
        with open(os.path.join(out_dir, "report.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(report_dict(report), fh, indent=1, sort_keys=True)
            fh.write("\n")
        from . import plots
        plots.plot_path(
            os.path.join(out_dir, "path.svg"),
            {name: (tr.y, tr.z) for name, tr in traces.items()},
            (refs[:, 0], refs[:, 2]))
        plots.plot_solve_times(
            os.path.join(out_dir, "solve_times.svg"),
            {name: (tr.t, (tr.solve_time_y + tr.solve_time_z) * 1e3)
             for name, tr in traces.items()})
    return report


def _delta(value: float, base: float) -> str:
    if not np.isfinite(value) or not np.isfinite(base) or base == 0.0:
        return "-"
    return f"{100.0 * (value - base) / base:+.1f}%"


def render_report(report: ExperimentReport) -> str:
    """Plain-text table; percentage deltas versus the first controller."""
    lines = []
    header = (f"{'controller':<10} {'J':>10} {'dJ':>8} {'ISE':>10} "
              f"{'dISE':>8} {'E':>10} {'dE':>8} {'total_s':>9} "
              f"{'mean_ms':>9} {'max_ms':>9} {'first_ms':>9} "
              f"{'steady_ms':>9} {'steps':>6}")
    lines.append(header)
    lines.append("-" * len(header))
    base = report.results[0] if report.results else None
    for res in report.results:
        if res.error and res.timing is None:
            lines.append(f"{res.name:<10} failed: {res.error}")
            continue
        t = res.timing
        lines.append(
            f"{res.name:<10} {res.j:>10.4f} {_delta(res.j, base.j):>8} "
            f"{res.ise:>10.4f} {_delta(res.ise, base.ise):>8} "
            f"{res.energy:>10.4f} {_delta(res.energy, base.energy):>8} "
            f"{t.total_s:>9.3f} {t.mean_ms:>9.3f} {t.max_ms:>9.3f} "
            f"{res.first_ms:>9.3f} {res.steady_mean_ms:>9.3f} "
            f"{t.count:>6d}")
    flagged = [(res.name, res.flag_counts) for res in report.results
               if res.flag_counts]
    if flagged:
        lines.append("")
        lines.append("flags:")
        for name, counts in flagged:
            summary = ", ".join(f"{k}x{v}" for k, v in sorted(counts.items()))
            lines.append(f"  {name}: {summary}")
    aborted = [res.name for res in report.results if res.aborted]
    if aborted:
        lines.append("")
        lines.append("aborted runs: " + ", ".join(aborted))
    return "\n".join(lines) + "\n"


def report_dict(report: ExperimentReport) -> dict:
    out = {"config_key": report.config_key, "out_dir": report.out_dir,
           "controllers": {}}
    for res in report.results:
        entry = {
            "J": res.j, "ISE": res.ise, "E": res.energy,
            "first_ms": res.first_ms,
            "steady_mean_ms": res.steady_mean_ms,
            "steady_max_ms": res.steady_max_ms,
            "trace": res.trace_path, "flags": res.flag_counts,
            "aborted": res.aborted, "error": res.error,
        }
        if res.timing is not None:
            entry.update({"total_s": res.timing.total_s,
                          "mean_ms": res.timing.mean_ms,
                          "max_ms": res.timing.max_ms,
                          "steps": res.timing.count})
        out["controllers"][res.name] = entry
    return out
