"""Scenario runners: drift, reset and trajectory sweep, plus the run record writers."""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
from scipy.optimize import minimize

from .config import ConfigError, ScenarioConfig
from .controller import CCCController, Command
from .dsp import DspPipeline
from .fiber import circle_fit, circle_intersections, sweep_trajectory
from .plant import InterferometerPlant

log = logging.getLogger(__name__)

ROW_COLUMNS = ("t_s", "v_mean", "v_std", "hv1_V", "hv2_V", "event")
COMMAND_COLUMNS = ("t_s", "actuator", "dac_V", "hv_V", "direction", "step_V", "reason",
                   "visibility", "run")
TARGET_VISIBILITY = 0.999


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


# -- plant assembly ----------------------------------------------------------

def build_plant(cfg: ScenarioConfig, seed: int | None = None) -> InterferometerPlant:
    """Plant with both stretchers placed at their configured starting voltages."""
    plant = InterferometerPlant(cfg.plant.build(), cfg.seed if seed is None else seed)
    a1, a2 = stretchers(plant)
    init = (cfg.plant.arm_a.actuator.initial, cfg.plant.arm_b.actuator.initial)
    if "auto" in init:
        hv = find_crosspoint(plant, cfg.plant.auto_guess)
        a1.set_voltage(hv[0] if init[0] == "auto" else init[0])
        a2.set_voltage(hv[1] if init[1] == "auto" else init[1])
    return plant


def stretchers(plant: InterferometerPlant):
    (a1,), (a2,) = plant.config.arm_a.actuators, plant.config.arm_b.actuators
    return a1, a2


def find_crosspoint(plant: InterferometerPlant, guess=(400.0, 400.0),
                    grid=(90, 70), tol: float = 2e-3) -> tuple[float, float]:
    """Stretcher voltages of the visibility maximum nearest ``guess``.

    A coarse grid finds every near-optimal region; the one closest to the guess
    is refined with Nelder-Mead on the noiseless overlap visibility. The
    stretchers are left at the result.
    """
    a1, a2 = stretchers(plant)

    def neg_v(x):
        if not (a1.v_min <= x[0] <= a1.v_max and a2.v_min <= x[1] <= a2.v_max):
            return 1.0
        a1.set_voltage(x[0])
        a2.set_voltage(x[1])
        return -plant.true_visibility()

    pad1, pad2 = 0.01 * (a1.v_max - a1.v_min), 0.01 * (a2.v_max - a2.v_min)
    g1 = np.linspace(a1.v_min + pad1, a1.v_max - pad1, grid[0])
    g2 = np.linspace(a2.v_min + pad2, a2.v_max - pad2, grid[1])
    vals = np.array([[-neg_v((x, y)) for x in g1] for y in g2])
    dist = np.hypot(*np.meshgrid(g1 - guess[0], g2 - guess[1]))
    dist[vals < vals.max() - tol] = np.inf
    j, i = np.unravel_index(np.argmin(dist), dist.shape)
    res = minimize(neg_v, [g1[i], g2[j]], method="Nelder-Mead",
                   options=dict(xatol=1e-3, fatol=1e-12))
    neg_v(res.x)
    return float(a1.v_now), float(a2.v_now)


# -- run record ----------------------------------------------------------------

@dataclass
class RunRecord:
    rows: list = field(default_factory=list)
    commands: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    # noiseless visibility at each sample; a diagnostic, not part of the rows
    v_true: list = field(default_factory=list)

    @property
    def summary(self) -> dict:
        return summarize(self.rows)

    def column(self, name: str) -> np.ndarray:
        k = ROW_COLUMNS.index(name)
        return np.array([r[k] for r in self.rows], dtype=object if name == "event" else float)

    def reset_indices(self) -> list[int]:
        return [i for i, r in enumerate(self.rows) if "reset" in r[5].split("|")]


def summarize(rows) -> dict:
    """Summary statistics; recomputable from the stored rows alone."""
    v = np.array([r[1] for r in rows], float)
    n = len(v)
    return {
        "n_samples": n,
        "fraction_at_target": float(np.sum(v >= TARGET_VISIBILITY) / n) if n else float("nan"),
        "min_visibility": float(np.nanmin(v)) if n and not np.all(np.isnan(v)) else float("nan"),
        "mean_error_bar": float(np.nanmean([r[2] for r in rows])) if n and np.any(~np.isnan(v))
        else float("nan"),
        "reset_count": sum("reset" in r[5].split("|") for r in rows),
        "invalid_samples": int(np.sum(np.isnan(v))),
    }


def recovery_after(record: RunRecord, index: int, target: float = TARGET_VISIBILITY):
    """(dip minimum, samples until v_mean >= target) following row ``index``.

    The sample count is ``None`` when the run ends before recovery.
    """
    v = record.column("v_mean")[index + 1:]
    hit = np.flatnonzero(v >= target)
    end = hit[0] + 1 if hit.size else len(v)
    dip = float(np.nanmin(v[:end])) if end else float("nan")
    return dip, (int(hit[0]) + 1 if hit.size else None)


# -- closed loop ---------------------------------------------------------------

def _n_samples(duration: float, cadence: float) -> int:
    # samples at t = k * cadence for t < duration
    return max(0, math.ceil(duration / cadence - 1e-9))


def _metadata(cfg: ScenarioConfig, scenario: str) -> dict:
    return {
        "scenario": scenario,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "control": cfg.run.control,
        "duration_s": cfg.run.duration,
        "cadence_s": cfg.run.cadence,
        "columns": list(ROW_COLUMNS),
        "versions": {"artifact": _version(), "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }


def _closed_loop(cfg: ScenarioConfig, scenario: str) -> RunRecord:
    plant = build_plant(cfg)
    a1, a2 = stretchers(plant)
    acts = {1: a1, 2: a2}
    rc = cfg.run
    pipe = DspPipeline(n_frames=rc.frames_per_sample, frame_interval=rc.frame_interval,
                       refresh_every=rc.dark_refresh_every, min_valid_frames=rc.min_valid_frames,
                       triangle_hz=cfg.plant.triangle.frequency)
    controller = None
    if rc.control:
        limits = {k: (a.v_min, a.v_max) for k, a in acts.items()}
        controller = CCCController(cfg.controller.build_state({1: a1.v_now, 2: a2.v_now}, limits))
    rec = RunRecord(metadata=_metadata(cfg, scenario))
    rec.metadata["initial_hv_V"] = [a1.v_now, a2.v_now]
    for k in range(_n_samples(rc.duration, rc.cadence)):
        if k:
            plant.advance(rc.cadence)
        sample, refreshed = pipe.step(plant)
        hv = (a1.v_now, a2.v_now)
        events = ["dark_ref"] if refreshed else []
        if not sample.valid:
            events.append("invalid")
        if controller is not None:
            for cmd in controller.iterate(sample):
                # the controller never emits an out-of-range voltage; set_voltage would raise
                acts[cmd.actuator].set_voltage(cmd.hv)
                rec.commands.append(cmd)
                if cmd.reason == "reset":
                    events.append("reset")
        rec.rows.append((sample.t, sample.v_mean, sample.v_std, hv[0], hv[1], "|".join(events)))
        rec.v_true.append(plant.true_visibility())
    rec.metadata["summary"] = rec.summary
    rec.metadata["final_gamma_drift"] = {
        name: [seg.gamma_drift for seg in getattr(plant.config, name).segments]
        for name in ("arm_a", "arm_b")}
    rec.metadata["dsp"] = {"clamp_events": pipe.clamp_events, "rejected_frames": pipe.rejected_frames}
    return rec


def run_drift_experiment(cfg: ScenarioConfig) -> RunRecord:
    """Plant drift -> frames -> DSP -> controller at the configured cadence.

    With control off the stretchers stay put; the drift realization for a given
    seed is the same either way because it draws from its own stream.
    """
    return _closed_loop(cfg, "drift")


def run_reset_experiment(cfg: ScenarioConfig) -> RunRecord:
    """Drift run whose arm-B stretcher segment carries a bias toward the lower limit."""
    arm = cfg.plant.arm_b
    rates = arm.drift_rates
    if not rates or rates[arm.actuator_segment] <= 0:
        raise ConfigError([{
            "path": "plant.arm_b.drift_rates",
            "message": "reset scenario needs a positive drift rate on the stretcher segment"}])
    rec = _closed_loop(cfg, "reset")
    resets = []
    for i in rec.reset_indices():
        dip, n = recovery_after(rec, i)
        cmd = next(c for c in rec.commands if c.reason == "reset" and c.t == rec.rows[i][0])
        resets.append({"t_s": rec.rows[i][0], "actuator": cmd.actuator, "to_V": cmd.hv,
                       "dip_min": dip, "samples_to_recover": n})
    rec.metadata["resets"] = resets
    return rec


# -- trajectory sweep ------------------------------------------------------------

@dataclass
class SweepResult:
    voltages: dict
    trajectories: dict
    fits: dict
    intersections: dict
    metadata: dict = field(default_factory=dict)


def run_trajectory_sweep(cfg: ScenarioConfig) -> SweepResult:
    """Stokes circles per swept stretcher, their fits and pairwise crosspoints."""
    sc = cfg.sweep
    paths = {name: p.build(name) for name, p in sc.paths.items()}
    if sc.plant_arms:
        pc = cfg.plant.build()
        paths.update(arm_a=pc.arm_a, arm_b=pc.arm_b)
    volts, traj, fits = {}, {}, {}
    for name, path in paths.items():
        (act,) = path.actuators
        volts[name] = np.linspace(act.v_min, act.v_max, sc.n_points)
        traj[name] = np.array([s.as_array() for s in sweep_trajectory(path, act, sc.n_points)])
        fits[name] = circle_fit(traj[name])
    names = list(paths)
    inter = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if not (fits[a].degenerate or fits[b].degenerate):
                inter[(a, b)] = circle_intersections(fits[a], fits[b], 1e-6)
    meta = _metadata(cfg, "sweep")
    for key in ("control", "duration_s", "cadence_s", "columns"):
        meta.pop(key)
    return SweepResult(volts, traj, fits, inter, meta)


# -- persistence -------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_rows(path, rows, columns=ROW_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def read_rows(path) -> list[tuple]:
    """Rows of a samples CSV, with floats restored exactly."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        return [(*(float(x) for x in r[:5]), r[5]) for r in rd]


def _command_row(c: Command):
    return (c.t, c.actuator, c.dac, c.hv, c.direction, c.step, c.reason, c.visibility, c.run)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def write_record(rec: RunRecord, out_dir, prefix: str = "") -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"samples": out / f"{prefix}samples.csv", "commands": out / f"{prefix}commands.csv",
             "diagnostics": out / f"{prefix}diagnostics.csv", "metadata": out / f"{prefix}meta.json"}
    write_rows(files["samples"], rec.rows)
    write_rows(files["commands"], [_command_row(c) for c in rec.commands], COMMAND_COLUMNS)
    write_rows(files["diagnostics"], [(r[0], v) for r, v in zip(rec.rows, rec.v_true)],
               ("t_s", "v_true"))
    write_json(files["metadata"], rec.metadata)
    return {k: str(v) for k, v in files.items()}


def write_sweep(res: SweepResult, out_dir, prefix: str = "") -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"trajectories": out / f"{prefix}trajectories.csv", "fits": out / f"{prefix}fits.json"}
    rows = [(name, v, *s) for name in res.trajectories
            for v, s in zip(res.voltages[name], res.trajectories[name])]
    write_rows(files["trajectories"], rows, ("path", "hv_V", "s0", "s1", "s2", "s3"))
    fits = {name: {"center": f.center, "radius": f.radius, "rms_residual": f.rms_residual,
                   "normal": f.normal, "plane_center": f.plane_center, "degenerate": f.degenerate}
            for name, f in res.fits.items()}
    inter = [{"paths": list(k), "points": v} for k, v in res.intersections.items()]
    write_json(files["fits"], {**res.metadata, "fits": fits, "intersections": inter})
    return {k: str(v) for k, v in files.items()}
