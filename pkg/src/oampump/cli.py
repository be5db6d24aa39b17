"""Experiment runner: ``oampump <experiment> --config <path> --out <dir> [--seed N]``.

A config is a JSON document::

    {"experiment": "pump", "parameters": {...}, "sweep": {"J0": [2, 5, 10]}}

``experiment`` is optional but must match the command when given.
``sweep`` maps parameter names to value lists; their Cartesian product (keys
in sorted order) runs as indexed jobs whose files carry a ``_NNN`` suffix.
Artifacts are rendered in memory and written only after every job has
succeeded.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure; errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import io
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import dynamics, hardware, multistage, opensys, topology
from .errors import ConfigError, EdgeLeak, GapClosed, OAMPumpError, StepFailure
from .model import LatticeConfig, RiceMeleParams, circular_pump_loop, default_pump_loop

log = logging.getLogger("oampump")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (GapClosed, EdgeLeak, StepFailure, FloatingPointError, np.linalg.LinAlgError)

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int = {"type": "integer"}
_posint = {"type": "integer", "minimum": 1}

_MODEL = {"J0": _pos, "J1": _pos, "T": _pos}
_LOOP = {
    "loop": {"enum": ["default", "circle"]},
    "orientation": {"enum": ["clockwise", "counterclockwise"]},
    "center": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
    "radius": _pos,
}

# experiment -> (parameter schema properties, defaults, stochastic)
EXPERIMENTS = {
    "bands": (
        {**_MODEL, **_LOOP, "n_k": {"type": "integer", "minimum": 4}, "n_t": {"type": "integer", "minimum": 4}},
        dict(J0=5.0, J1=1.0, T=21.0, loop="default", orientation="clockwise", center=[math.pi / 2, math.pi / 2], radius=1.0, n_k=64, n_t=64),
        False,
    ),
    "chern": (
        {**_MODEL, **_LOOP, "n_k": {"type": "integer", "minimum": 4}, "n_t": {"type": "integer", "minimum": 4}},
        dict(J0=5.0, J1=1.0, T=21.0, loop="default", orientation="clockwise", center=[math.pi / 2, math.pi / 2], radius=1.0, n_k=64, n_t=64),
        False,
    ),
    "pump": (
        {**_MODEL, "cycles": _pos, "l0": _int, "n_sites": {"type": "integer", "minimum": 16},
         "samples_per_half": _posint, "orientation": _LOOP["orientation"], "band": {"enum": ["lower", "upper"]}},
        dict(J0=5.0, J1=1.0, T=21.0, cycles=2.0, l0=0, n_sites=42, samples_per_half=20, orientation="clockwise", band="lower"),
        False,
    ),
    "purity": (
        {"ratios": {"type": "array", "items": _pos, "minItems": 1}, "J1": _pos, "T": _pos,
         "half_cycles": _posint, "l0": _int, "n_sites": {"type": "integer", "minimum": 16}},
        dict(ratios=[2.0, 5.0, 10.0], J1=1.0, T=21.0, half_cycles=4, l0=0, n_sites=42),
        False,
    ),
    "disorder": (
        {**_MODEL, "kind": {"enum": ["phase", "onsite"]}, "sigma_phase": _nonneg, "sigma_detune": _nonneg,
         "onsite_mode": {"enum": ["per_site", "global"]}, "trials": _posint, "seed": {"type": "integer", "minimum": 0},
         "cycles": _pos, "l0": _int, "n_sites": {"type": "integer", "minimum": 16}},
        dict(J0=5.0, J1=1.0, T=21.0, kind="phase", sigma_phase=0.1, sigma_detune=0.0, onsite_mode="per_site",
             trials=20, cycles=1.0, l0=0, n_sites=42),
        True,
    ),
    "iosim": (
        {**_MODEL, "cycles": _pos, "l0": _int, "kappa0": _nonneg, "kappa_max": _pos, "n_knots": {"type": "integer", "minimum": 2},
         "release_peak": _pos, "release_rise": _nonneg, "release_time": _pos, "samples": {"type": "integer", "minimum": 10}},
        dict(J0=5.0, J1=1.0, T=21.0, cycles=1.0, l0=0, kappa0=0.0, kappa_max=None, n_knots=10,
             release_peak=2.0, release_rise=1.0, release_time=20.0, samples=801),
        False,
    ),
    "geometry": (
        {"F": _pos, "wavelength": _pos, "omega_F": _pos, "J1_phys": _pos, "span": _pos,
         "n_x": {"type": "integer", "minimum": 2}, "n_y": {"type": "integer", "minimum": 2}, "detuning_J1": _pos},
        dict(F=0.1, wavelength=1e-6, omega_F=hardware.OMEGA_F, J1_phys=hardware.J1_PHYS, span=40e-6, n_x=41, n_y=41, detuning_J1=0.05),
        False,
    ),
    "plan": (
        {"delta_l": _int, "N": {"type": "integer", "minimum": 2}, "q": {"type": ["integer", "null"], "minimum": 0},
         "mode": {"enum": ["unsigned", "balanced"]}, "l_max": _posint, "simulate": {"type": "boolean"},
         "J0": _pos, "J1": _pos, "T": _pos},
        dict(delta_l=512, N=10, q=None, mode="unsigned", l_max=None, simulate=False, J0=20.0, J1=1.0, T=21.0),
        False,
    ),
}
EXPERIMENTS["iosim"][0]["kappa_max"] = {"type": ["number", "null"], "exclusiveMinimum": 0}
EXPERIMENTS["plan"][0]["l_max"] = {"type": ["integer", "null"], "minimum": 1}


def config_schema(experiment: str) -> dict:
    props = EXPERIMENTS[experiment][0]
    return {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "experiment": {"const": experiment},
            "parameters": {"type": "object", "additionalProperties": False, "properties": props},
            "sweep": {
                "type": "object",
                "additionalProperties": False,
                "properties": {k: {"type": "array", "minItems": 1, "items": v} for k, v in props.items()},
            },
        },
    }


def load_config(experiment: str, doc: dict, seed=None) -> list:
    """Validate ``doc`` and expand it into a list of complete parameter dicts."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    try:
        jsonschema.validate(doc, config_schema(experiment))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    _, defaults, stochastic = EXPERIMENTS[experiment]
    base = {**defaults, **doc.get("parameters", {})}
    if seed is not None:
        base["seed"] = int(seed)
    if stochastic and base.get("seed") is None:
        raise ConfigError("a seed is required (parameters.seed or --seed)")
    sweep = doc.get("sweep", {})
    if not sweep:
        return [base]
    keys = sorted(sweep)
    return [{**base, **dict(zip(keys, combo))} for combo in itertools.product(*(sweep[k] for k in keys))]


# --------------------------------------------------------------------------
# formatting


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.12g" % float(x)


def _clean(obj):
    """Round floats to 12 significant digits for JSON output."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if not math.isfinite(x) else float("%.12g" % x)
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


# --------------------------------------------------------------------------
# experiments: each returns {filename: text}


def _params(c) -> RiceMeleParams:
    return RiceMeleParams(float(c["J0"]), float(c["J1"]))


def _loop(c, p):
    if c["loop"] == "circle":
        return circular_pump_loop(tuple(c["center"]), c["radius"], c["T"], c["orientation"])
    return default_pump_loop(p, c["T"], c["orientation"])


def run_bands(c):
    p = _params(c)
    sched = _loop(c, p)
    E, gap = topology.band_energies(sched, p, c["n_k"], c["n_t"])
    k, t = topology.grid(sched, c["n_k"], c["n_t"])
    rows = [(t[j] * p.J1, k[i], E[0, i, j], E[1, i, j]) for j in range(len(t)) for i in range(len(k))]
    summary = {"experiment": "bands", "parameters": c, "min_gap": gap}
    return {"bands.csv": to_csv(["t_J1", "k", "E_lower", "E_upper"], rows), "summary.json": to_json(summary)}


def run_chern(c):
    p = _params(c)
    sched = _loop(c, p)
    lower = topology.chern_number(sched, p, "lower", c["n_k"], c["n_t"])
    upper = topology.chern_number(sched, p, "upper", c["n_k"], c["n_t"])
    wind = topology.winding_number(sched, p, "lower", c["n_k"], c["n_t"])
    print(json.dumps({"lower": lower, "upper": upper}))
    return {"chern.json": to_json({"lower": lower, "upper": upper, "winding_lower": wind, "parameters": c})}


def _pump_run(p, c, T, cycles, l0, n_sites, per_half, orientation="clockwise", band="lower"):
    cfg = LatticeConfig.centered(l0, n_sites)
    sched = default_pump_loop(p, T, orientation, n_cycles=cycles)
    psi = dynamics.wannier_state(cfg, p, sched, band, origin=l0)
    n_half = int(round(2 * cycles))
    samples = np.linspace(sched.t_start, sched.t_end, max(1, n_half) * per_half + 1)
    traj = dynamics.evolve(psi, sched, p, samples=samples)
    return cfg, sched, traj


def run_pump(c):
    p = _params(c)
    cfg, sched, traj = _pump_run(p, c, c["T"], c["cycles"], c["l0"], c["n_sites"], c["samples_per_half"], c["orientation"], c["band"])
    sites = cfg.sites
    com = traj.center_of_mass
    header = ["t_J1"] + [f"P_{l}" for l in sites] + ["mean_l"]
    rows = [(traj.times[i] * p.J1, *traj.populations[i], com[i]) for i in range(len(traj.times))]
    sign = 1 if c["orientation"] == "clockwise" else -1
    if c["band"] == "upper":
        sign = -sign
    halves = []
    for m in range(1, int(round(2 * c["cycles"])) + 1):
        r = dynamics.pump_report(traj, c["l0"], m, sched, sign)
        halves.append({"m": m, "displacement": r.displacement, "target": r.target, "purity": r.purity})
    summary = {
        "experiment": "pump",
        "parameters": c,
        "final_mean_l": com[-1],
        "displacement": com[-1] - com[0],
        "half_cycles": halves,
        "steps": traj.n_steps,
        "max_norm_error": float(np.max(np.abs(traj.norms - 1.0))),
    }
    return {"pump.csv": to_csv(header, rows), "summary.json": to_json(summary)}


def run_purity(c):
    rows, table = [], []
    m_max = c["half_cycles"]
    for ratio in c["ratios"]:
        p = RiceMeleParams(ratio * c["J1"], c["J1"])
        _, sched, traj = _pump_run(p, c, c["T"], m_max / 2, c["l0"], c["n_sites"], 1)
        for m in range(1, m_max + 1):
            r = dynamics.pump_report(traj, c["l0"], m, sched)
            rows.append((ratio, m, r.purity, r.displacement))
            table.append({"ratio": ratio, "m": m, "purity": r.purity, "displacement": r.displacement})
    return {
        "purity.csv": to_csv(["J0_over_J1", "m", "purity", "displacement"], rows),
        "summary.json": to_json({"experiment": "purity", "parameters": c, "table": table}),
    }


def run_disorder(c, threads=1):
    p = _params(c)
    spec = hardware.DisorderSpec(c["kind"], c["sigma_phase"], c["sigma_detune"], c["seed"], c["trials"], c["onsite_mode"])
    cfg = LatticeConfig.centered(c["l0"], c["n_sites"])
    base = default_pump_loop(p, c["T"], n_cycles=c["cycles"])
    m_max = int(round(2 * c["cycles"]))
    times = dynamics.half_cycle_times(base, m_max)
    draws = [hardware.sample_disorder(spec, i, cfg) for i in range(spec.trials)]

    def batch(idx):
        if spec.kind == "phase":
            scheds = [base.with_offset(*draws[i]) for i in idx]
            psi = [dynamics.wannier_state(cfg, p, s, origin=c["l0"]) for s in scheds]
            trajs = dynamics.evolve_ensemble(psi, scheds, p, cfg, samples=times)
        else:
            psi = dynamics.wannier_state(cfg, p, base, origin=c["l0"])
            trajs = dynamics.evolve_ensemble(psi, base, p, cfg, samples=times, onsite_shifts=np.stack([draws[i] for i in idx]))
        return [tr.center_of_mass - tr.center_of_mass[0] for tr in trajs]

    size = 10
    chunks = [list(range(a, min(a + size, spec.trials))) for a in range(0, spec.trials, size)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(batch, chunks))
    disp = np.array([d for part in parts for d in part])  # (trials, m_max + 1), fixed order
    mean, std = disp.mean(axis=0), disp.std(axis=0, ddof=1) if spec.trials > 1 else np.zeros(m_max + 1)
    rows = [(m, times[m] * p.J1, mean[m], std[m]) for m in range(m_max + 1)]
    trial_rows = [(i, *disp[i]) for i in range(spec.trials)]
    summary = {
        "experiment": "disorder",
        "parameters": c,
        "mean_displacement": mean[-1],
        "std_displacement": std[-1],
        "per_cycle_mean": mean[-1] / c["cycles"],
    }
    return {
        "disorder.csv": to_csv(["m", "t_J1", "mean_displacement", "std_displacement"], rows),
        "trials.csv": to_csv(["trial"] + [f"m{m}" for m in range(m_max + 1)], trial_rows),
        "summary.json": to_json(summary),
    }


def run_iosim(c):
    p = _params(c)
    drive = opensys.switch_pulse(p, c["l0"])
    kmax = 4.0 * p.J0 if c["kappa_max"] is None else c["kappa_max"]
    ramp, eff_cap = opensys.optimize_capture(p, drive, c["kappa0"], kappa_max=kmax, n_knots=c["n_knots"])
    out = opensys.run_switch(
        p, c["T"], c["l0"], c["cycles"], c["kappa0"], ramp, c["release_peak"], c["release_rise"], c["release_time"],
        drive, samples=c["samples"],
    )
    res = out.result
    cfg = res.cfg
    show = [l for l in cfg.sites if c["l0"] - 2 <= l <= out.target + 2]
    idx = [cfg.index(l) for l in show]
    ein = res.input
    header = ["t_J1", "kappa_e", "in_re", "in_im", "in_power", "out_power_total"]
    header += [f"out_power_{l}" for l in show] + ["photon_number"]
    kap = out.coupling.kappa_e(res.times)
    rows = []
    for i, t in enumerate(res.times):
        po = np.abs(res.output[i]) ** 2
        rows.append((t * p.J1, kap[i], ein[i].real, ein[i].imag, abs(ein[i]) ** 2,
                     po.sum(), *po[idx], res.photon_number[i]))
    summary = {
        "experiment": "iosim",
        "parameters": c,
        "capture_efficiency": out.captured,
        "capture_efficiency_band": eff_cap,
        "target": out.target,
        "output_purity": out.purity,
        "switch_efficiency": out.efficiency,
        "displacement": out.displacement,
        "balance_error": res.balance_error,
        "ramp": {"knots": list(ramp.knots), "values": list(ramp.values)},
    }
    return {"iosim.csv": to_csv(header, rows), "summary.json": to_json(summary)}


def run_geometry(c):
    F = c["F"]
    xs = F + np.linspace(-c["span"], c["span"], c["n_x"])
    ys = F + np.linspace(-c["span"], c["span"], c["n_y"])
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    ratio = hardware.detuning_map(X, Y, F, c["J1_phys"], c["omega_F"])
    rows = [(X[i, j], Y[i, j], (X[i, j] - F) * (Y[i, j] - F), ratio[i, j])
            for i in range(len(xs)) for j in range(len(ys))]
    target = c["detuning_J1"] * c["J1_phys"]
    s = hardware.misalignment_for_detuning(target, F, c["omega_F"])
    g = hardware.CavityGeometry(F + s, F + s, F, c["wavelength"], c["omega_F"])
    summary = {
        "experiment": "geometry",
        "parameters": c,
        "misalignment_for_target_m": s,
        "target_detuning_rad_s": target,
        "usable_oam_at_target": hardware.usable_oam(g, c["J1_phys"]),
        "degenerate_round_trip": hardware.round_trip_abcd(hardware.CavityGeometry.degenerate(F)).tolist(),
        "stable_fraction": float(np.isfinite(ratio).mean()),
    }
    return {
        "geometry.csv": to_csv(["X", "Y", "misalignment", "dw_over_4J1"], rows),
        "summary.json": to_json(summary),
    }


def run_plan(c):
    plan = multistage.plan_switch(c["delta_l"], c["N"], c["q"], c["mode"])
    summary = {"experiment": "plan", "parameters": c, "plan": plan.as_dict()}
    if c["l_max"] is not None:
        stages, bound = multistage.plan_bounds(c["l_max"], c["N"])
        summary["bounds"] = {"stages": stages, "time_bound_T": bound}
    if c["simulate"]:
        run = multistage.execute_plan(plan, RiceMeleParams(c["J0"], c["J1"]), c["T"])
        summary["simulation"] = {
            "final_mean_l": run.center_of_mass,
            "target_population": run.population(plan.delta_l),
            "stages": [{"step": o.step, "cycles": o.cycles, "start": o.start, "end": o.end} for o in run.outcomes],
        }
    rows = [(n, s, d, d / 2) for n, (s, d) in enumerate(zip(plan.steps, plan.digits))]
    return {
        "plan.csv": to_csv(["stage", "step", "digit", "cycles"], rows),
        "summary.json": to_json(summary),
    }


RUNNERS = {
    "bands": run_bands,
    "chern": run_chern,
    "pump": run_pump,
    "purity": run_purity,
    "disorder": run_disorder,
    "iosim": run_iosim,
    "geometry": run_geometry,
    "plan": run_plan,
}


def thread_limit() -> int:
    raw = os.environ.get("OAMPUMP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"OAMPUMP_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("OAMPUMP_THREADS must be >= 1")
    return n


def run(experiment: str, doc: dict, seed=None) -> dict:
    """Run every job of a config; returns ``{filename: text}`` (nothing is written)."""
    jobs = load_config(experiment, doc, seed)
    threads = thread_limit()
    runner = RUNNERS[experiment]

    def one(c):
        return runner(c, threads) if experiment == "disorder" else runner(c)

    if len(jobs) == 1:
        return one(jobs[0])
    with ThreadPoolExecutor(max_workers=threads) as ex:
        results = list(ex.map(one, jobs))
    files = {}
    for i, res in enumerate(results):
        for name, text in res.items():
            stem, ext = os.path.splitext(name)
            files[f"{stem}_{i:03d}{ext}"] = text
    files["sweep.json"] = to_json({"experiment": experiment, "runs": [{"index": i, "parameters": c} for i, c in enumerate(jobs)]})
    return files


def write_artifacts(out: Path, files: dict):
    out.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(files.items()):
        tmp = out / (name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, out / name)


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="oampump", description="Run an OAM-pump experiment from a JSON config.")
    ap.add_argument("experiment", help="one of: " + ", ".join(EXPERIMENTS))
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {args.experiment!r}")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        try:
            doc = json.loads(args.config.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        files = run(args.experiment, doc, args.seed)
    except NUMERIC_ERRORS as exc:
        return _fail(getattr(exc, "kind", type(exc).__name__), str(exc), EXIT_NUMERIC)
    except OAMPumpError as exc:
        return _fail(exc.kind, str(exc), EXIT_CONFIG)
    except ValueError as exc:
        return _fail("ConfigError", str(exc), EXIT_CONFIG)

    write_artifacts(args.out, files)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
