"""Command-line front end.

Exit codes: 0 success, 2 usage or invalid input, 3 integration diverged,
4 record does not match the requested grid or parameters.

Every CSV starts with ``# key: value`` lines echoing the resolved run
manifest; only the ``timestamp`` line differs between reruns.  Options
resolve as flags over ``--config`` file over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .ensemble import (
    EnsembleConfig, compare_psi11, compare_to_analytic, compare_to_master, default_jobs,
    optimality_scan, run_ensemble,
)
from .entanglement import analytic_signed_concurrence, analytic_ts, to_p, wrap
from .oracle import IntegrationError, MasterEvolution, lambda_timeseries
from .records import (
    RecordMismatch, read_record_csv, record_trajectory, replay_from_record, write_record_csv,
)
from .sse import SseConfig, run_trajectory
from .states import LindbladSet, parse_state
from .unraveling import ZERO, CorrelationMatrix, OptimalPhaseUndefined, optimal_unraveling

EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_MISMATCH = 4
REPLAY_FLAG = 1e-8

DEFAULTS = {
    "state": "fig1-solid",
    "gamma": 1.0,
    "dt": 1e-3,
    "tmax": 7.0,
    "seed": 0,
    "n": 500,
    "unraveling": ["optimal"],
    "increments": "gaussian",
    "jobs": None,  # resolved to the available cores
    "out": None,
    "stride": 10,
    "records": False,
    "grid": 50,
    "scan_phases": 0,
    "record": None,
    "source": "Y",
}
# keys that describe a run but are not options
_MANIFEST_ONLY = {"command", "version", "timestamp", "state_amplitudes", "theta_opt", "u"}


class UsageError(ValueError):
    pass


# -- arguments ---------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--state", help="preset (fig1-dashed, fig1-solid, bell) or 8 comma separated reals")
    p.add_argument("--gamma", type=float, help="decay rate (default 1)")
    p.add_argument("--dt", type=float, help="time step (default 1e-3)")
    p.add_argument("--tmax", type=float, help="final time in units of 1/gamma (default 7)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--unraveling", nargs="+", metavar="MODE",
                   help="'optimal', 'zero', or 'custom' followed by Re/Im of u11, u12, u22")
    p.add_argument("--increments", choices=("gaussian", "spherical"),
                   help="increment law (default gaussian)")
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.add_argument("--config", help="key=value file or JSON manifest")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entangletraj", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    kw = {"argument_default": argparse.SUPPRESS}

    p = sub.add_parser("trajectory", help="single trajectory with c and theta", **kw)
    _common(p)
    p.add_argument("--stride", type=int, help="write every STRIDE-th step (default 10)")
    p.add_argument("--records", action="store_true", help="add the Y dt record columns")

    for name, text in (("ensemble", "ensemble statistics and checks"),
                       ("scan", "integrated mean concurrence over unraveling phases")):
        p = sub.add_parser(name, help=text, **kw)
        _common(p)
        p.add_argument("--n", type=int, help="number of trajectories (default 500)")
        p.add_argument("--jobs", type=int, help="worker processes (default: available cores)")
        p.add_argument("--grid", type=int, help="points of the statistics p-grid (default 50)")
        p.add_argument("--scan-phases", dest="scan_phases", type=int,
                       help="number of phases for the optimality scan")

    p = sub.add_parser("oracle", help="master-equation Lambda and concurrence", **kw)
    _common(p)
    p.add_argument("--stride", type=int, help="write every STRIDE-th step (default 10)")

    p = sub.add_parser("records", help="simulate detector records (optimal unraveling)", **kw)
    _common(p)

    p = sub.add_parser("replay", help="rebuild a trajectory from a record file", **kw)
    _common(p)
    p.add_argument("--record", help="record CSV written by 'records'")
    p.add_argument("--source", choices=("Y", "I"), help="replay Y or the photocurrents I")
    p.add_argument("--stride", type=int, help="write every STRIDE-th step (default 10)")
    return parser


def load_config(path: str) -> dict:
    """Read a JSON manifest or ``key=value`` lines (``#`` starts a comment)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{n}: expected key=value")
            raw[key.strip()] = val.strip()
    out = {}
    for key, val in raw.items():
        key = key.replace("-", "_")
        if key in _MANIFEST_ONLY:
            continue
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        out[key] = _coerce(key, val)
    return out


def _coerce(key: str, val):
    ref = DEFAULTS[key]
    if key == "unraveling":
        return val.split() if isinstance(val, str) else [str(v) for v in val]
    if val is None or isinstance(ref, str) or ref is None and key in ("out", "record"):
        return val
    if isinstance(ref, bool):
        return val if isinstance(val, bool) else str(val).lower() in ("1", "true", "yes")
    if isinstance(ref, int) or key == "jobs":
        return int(val)
    return float(val)


def resolve(ns: argparse.Namespace) -> tuple[dict, dict]:
    """``(options, explicit)``; explicit holds values from flags or the config file."""
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    explicit = load_config(ns.config) if getattr(ns, "config", None) else {}
    explicit.update(flags)
    opts = {**DEFAULTS, **explicit}
    if opts["jobs"] is None:
        opts["jobs"] = default_jobs()
    return opts, explicit


# -- shared setup --------------------------------------------------------------

def _unraveling(tokens, psi0):
    """``(u, theta_opt or None)`` from the ``--unraveling`` tokens."""
    mode = tokens[0].lower()
    if mode == "optimal":
        if len(tokens) != 1:
            raise UsageError("'--unraveling optimal' takes no values")
        try:
            o = optimal_unraveling(psi0)
        except OptimalPhaseUndefined:
            raise UsageError("optimal phase undefined for this state "
                             "(hint: use --unraveling custom with six reals)") from None
        return o.u, o.theta_opt
    if mode == "zero":
        return ZERO, None
    if mode == "custom":
        if len(tokens) != 7:
            raise UsageError("'--unraveling custom' needs six reals: Re/Im of u11, u12, u22")
        return CorrelationMatrix.from_reals([float(t) for t in tokens[1:]]), None
    raise UsageError(f"unknown unraveling {tokens[0]!r}")


def _sse_config(opts, u, **extra) -> SseConfig:
    return SseConfig(lindblad=LindbladSet(opts["gamma"]), u=u, dt=opts["dt"], t_max=opts["tmax"],
                     seed=opts["seed"], law=opts["increments"], **extra)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def manifest(command: str, opts: dict, psi0, keys, **extra) -> dict:
    m = {"command": command, "version": __version__}
    for k in keys:
        m[k] = opts[k]
    m["state_amplitudes"] = [float(v) for v in psi0.to_reals()]
    m.update(extra)
    return m


def _header(m: dict) -> list[str]:
    lines = [f"# {k}: {json.dumps(v)}" for k, v in sorted(m.items())]
    lines.append("# timestamp: " + datetime.now(timezone.utc).isoformat(timespec="seconds"))
    return lines


def _emit_csv(opts, m: dict, columns, rows) -> None:
    lines = _header(m) + [",".join(columns)]
    lines += [",".join(_fmt(v) if v != "" else "" for v in r) for r in rows]
    text = "\n".join(lines) + "\n"
    if opts["out"]:
        with open(opts["out"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        _write_json(opts["out"] + ".manifest.json", dict(m, timestamp=_now()))
    else:
        sys.stdout.write(text)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _summary(opts, obj) -> None:
    """Summary JSON: next to ``--out`` if given, and always on stderr."""
    if opts["out"]:
        _write_json(opts["out"] + ".summary.json", obj)
    print(json.dumps(obj, sort_keys=True), file=sys.stderr)


_AMP_COLS = ["re_psi00", "im_psi00", "re_psi01", "im_psi01",
             "re_psi10", "im_psi10", "re_psi11", "im_psi11"]


def _traj_rows(traj, gamma, stride, with_y=False):
    step_of = np.rint(traj.state_times / (traj.times[1] - traj.times[0])).astype(int)
    rows = []
    for j, k in enumerate(step_of):
        if j and k % stride and k != step_of[-1]:
            continue
        t = traj.times[k]
        a = traj.states[j]
        row = [t, float(to_p(t, gamma)), traj.concurrences[k], traj.thetas[k]]
        row += [v for z in a for v in (z.real, z.imag)]
        if with_y:
            if k < traj.currents.shape[0]:
                y = traj.currents[k]
                row += [y[0].real, y[0].imag, y[1].real, y[1].imag]
            else:
                row += ["", "", "", ""]
        rows.append(row)
    return rows


_RUN_KEYS = ("state", "gamma", "dt", "tmax", "seed", "unraveling", "increments")


# -- commands -------------------------------------------------------------------

def cmd_trajectory(opts) -> int:
    psi0 = parse_state(opts["state"])
    u, theta = _unraveling(opts["unraveling"], psi0)
    stride = opts["stride"]
    if stride < 1:
        raise UsageError("--stride must be >= 1")
    cfg = _sse_config(opts, u, state_stride=stride, emit_records=opts["records"])
    traj = run_trajectory(psi0, cfg)
    m = manifest("trajectory", opts, psi0, _RUN_KEYS + ("stride", "records"),
                 theta_opt=theta, u=u.to_reals())
    cols = ["t", "p", "c", "theta"] + _AMP_COLS
    if opts["records"]:
        cols += ["re_Y1dt", "im_Y1dt", "re_Y2dt", "im_Y2dt"]
    _emit_csv(opts, m, cols, _traj_rows(traj, cfg.gamma, stride, opts["records"]))
    return 0


def _p_grid_times(points: int, gamma: float, dt: float, tmax: float):
    if points < 2:
        raise UsageError("--grid must be >= 2")
    p = (np.arange(1, points + 1) - 0.5) / points
    t = -np.log1p(-p) / gamma
    t = np.rint(t / dt) * dt
    return tuple(float(x) for x in np.r_[0.0, t[t <= tmax + 1e-12]])


def _scan_phases(k: int, theta):
    if k < 3:
        raise UsageError("--scan-phases needs at least 3 phases")
    base = -math.pi if theta is None else theta
    return [float(wrap(base + 2 * math.pi * j / k)) for j in range(k)]


def _ens_config(opts, u) -> EnsembleConfig:
    if opts["n"] < 2:
        raise UsageError("--n must be >= 2")
    if opts["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    base = _sse_config(opts, u)
    stat = _p_grid_times(opts["grid"], base.gamma, base.dt, base.n_steps * base.dt)
    ckpt = tuple(t / base.gamma for t in (0.5, 1.0, 2.0) if t / base.gamma <= opts["tmax"])
    return EnsembleConfig(base, opts["n"], stat, ckpt, jobs=opts["jobs"])


def _scan_summary(psi0, opts, theta, cfg):
    phases = _scan_phases(opts["scan_phases"], theta)
    rows = optimality_scan(psi0, phases, cfg)
    best = min(rows, key=lambda r: r.integrated)
    return rows, {
        "phases": [r.phase for r in rows],
        "integrated_mean_c": [r.integrated for r in rows],
        "argmin_phase": best.phase,
        "theta_opt": theta,
        "argmin_is_theta_opt": theta is not None and abs(float(wrap(best.phase - theta))) < 1e-12,
    }


def cmd_ensemble(opts) -> int:
    psi0 = parse_state(opts["state"])
    u, theta = _unraveling(opts["unraveling"], psi0)
    cfg = _ens_config(opts, u)
    stats = run_ensemble(psi0, cfg)
    ana = compare_to_analytic(stats) if theta is not None else None
    p11 = compare_psi11(stats)
    master = compare_to_master(stats, MasterEvolution(LindbladSet(opts["gamma"]), dt=opts["dt"])) \
        if stats.checkpoint_times.size else None
    ref = np.abs(analytic_signed_concurrence(psi0, stats.gamma, stats.times))
    rows = [[t, p, mc, sc, r, mp, sp, tm, ts, stats.n]
            for t, p, mc, sc, r, mp, sp, tm, ts in zip(
                stats.times, stats.p, stats.mean_c, stats.se_c, ref, stats.mean_psi11sq,
                stats.se_psi11sq, stats.theta_circ_mean, stats.theta_circ_std)]
    m = manifest("ensemble", opts, psi0, _RUN_KEYS + ("n", "grid", "scan_phases"),
                 theta_opt=theta, u=u.to_reals())
    cols = ["t", "p", "mean_c", "se_c", "analytic_abs_c", "mean_psi11sq", "se_psi11sq",
            "theta_circ_mean", "theta_circ_std", "n"]
    _emit_csv(opts, m, cols, rows)
    ts = analytic_ts(psi0, stats.gamma)
    summary = {
        "n": stats.n,
        "theta_opt": theta,
        "analytic_p_s": ts.p_s,
        # the closed-form mean law holds for the optimal unraveling only
        "vs_analytic": None if ana is None else {
            "passed": ana.passed, "max_abs_z": float(np.max(np.abs(ana.z[stats.se_c > 1e-12])))},
        "vs_psi11": {"passed": p11.passed},
        "vs_master": None if master is None else {
            "passed": master.passed, "times": master.times.tolist(),
            "trace_distance": master.trace_distance.tolist(),
            "stat_error": master.stat_error.tolist()},
    }
    if opts["scan_phases"]:
        summary["scan"] = _scan_summary(psi0, opts, theta, cfg)[1]
    _summary(opts, summary)
    return 0


def cmd_scan(opts) -> int:
    psi0 = parse_state(opts["state"])
    try:
        theta = optimal_unraveling(psi0).theta_opt
    except OptimalPhaseUndefined:
        theta = None
    if not opts["scan_phases"]:
        opts = dict(opts, scan_phases=8)
    cfg = _ens_config(opts, ZERO)
    rows, summary = _scan_summary(psi0, opts, theta, cfg)
    m = manifest("scan", {**opts, "unraveling": ["scan"]}, psi0,
                 ("state", "gamma", "dt", "tmax", "seed", "increments", "n", "grid",
                  "scan_phases"), theta_opt=theta)
    _emit_csv(opts, m, ["phase", "integrated_mean_c"], [[r.phase, r.integrated] for r in rows])
    _summary(opts, summary)
    return 0


def cmd_oracle(opts) -> int:
    psi0 = parse_state(opts["state"])
    gamma, dt, stride = opts["gamma"], opts["dt"], opts["stride"]
    if stride < 1:
        raise UsageError("--stride must be >= 1")
    n = int(round(opts["tmax"] / dt))
    steps = np.unique(np.r_[np.arange(0, n + 1, stride), n])
    grid = steps * dt
    evo = MasterEvolution(LindbladSet(gamma), dt=dt)
    series = lambda_timeseries(psi0.projector(), evo, grid, crossing_tol=dt * 1e-3)
    signed = analytic_signed_concurrence(psi0, gamma, grid)
    rows = [[t, float(to_p(t, gamma)), lam, c, s]
            for t, lam, c, s in zip(grid, series.Lambda, series.concurrence, signed)]
    m = manifest("oracle", opts, psi0, ("state", "gamma", "dt", "tmax", "stride"))
    _emit_csv(opts, m, ["t", "p", "Lambda", "c", "analytic_signed"], rows)
    _summary(opts, {
        "crossings_t": series.crossings,
        "crossings_p": [float(to_p(t, gamma)) for t in series.crossings],
        "analytic_p_s": analytic_ts(psi0, gamma).p_s,
        "final_c": float(series.concurrence[-1]),
    })
    return 0


def cmd_records(opts) -> int:
    if not opts["out"]:
        raise UsageError("records needs --out")
    psi0 = parse_state(opts["state"])
    tokens = opts["unraveling"]
    if tokens[0].lower() != "optimal":
        raise UsageError("records are defined for '--unraveling optimal' only")
    try:
        theta = optimal_unraveling(psi0).theta_opt
    except OptimalPhaseUndefined:
        print("warning: optimal phase undefined for this state; using theta = 0", file=sys.stderr)
        theta = 0.0
    u = CorrelationMatrix.off_diagonal(theta)
    cfg = _sse_config(opts, u)
    _, rec = record_trajectory(psi0, cfg)
    m = manifest("records", opts, psi0, _RUN_KEYS, theta_opt=theta)
    write_record_csv(opts["out"], rec, m)
    _write_json(opts["out"] + ".manifest.json", dict(m, timestamp=_now()))
    return 0


def cmd_replay(opts, given: dict) -> int:
    if not opts["record"]:
        raise UsageError("replay needs --record")
    rec = read_record_csv(opts["record"])
    rec_m = _record_manifest(opts["record"])
    # record header values win unless set by a flag or the config file
    gamma = given.get("gamma", rec.gamma)
    dt = given.get("dt", rec.dt)
    tokens = given.get("unraveling", ["optimal"])
    if tokens[0].lower() == "optimal":
        u = CorrelationMatrix.off_diagonal(rec.theta_opt)
    else:
        u, _ = _unraveling(tokens, None)
    if "state" in given:
        psi0 = parse_state(given["state"])
    elif rec.psi0 is not None:
        psi0 = rec.psi0
    else:
        raise UsageError("record has no initial state; pass --state")
    stride = opts["stride"]
    if stride < 1:
        raise UsageError("--stride must be >= 1")
    law = rec_m.get("increments", "gaussian")
    cfg = SseConfig(lindblad=LindbladSet(gamma), u=u, dt=dt, t_max=max(len(rec), 1) * dt,
                    seed=rec.seed, state_stride=stride, law=law)
    traj = replay_from_record(psi0, rec, cfg, source=opts["source"])
    report = {"record": opts["record"], "source": opts["source"], "reference": None}
    if rec.psi0 is not None:
        ref, _ = record_trajectory(rec.psi0, cfg.replace(state_stride=1))
        idx = np.rint(traj.state_times / dt).astype(int)
        dev = float(np.max(np.linalg.norm(traj.states - ref.states[idx], axis=1)))
        report.update(reference="regenerated from record header", max_deviation=dev,
                      flagged=dev > REPLAY_FLAG)
    m = {"command": "replay", "version": __version__, "record": opts["record"],
         "gamma": gamma, "dt": dt, "theta_opt": rec.theta_opt, "seed": rec.seed,
         "source": opts["source"], "stride": stride,
         "state_amplitudes": [float(v) for v in psi0.to_reals()]}
    _emit_csv(opts, m, ["t", "p", "c", "theta"] + _AMP_COLS, _traj_rows(traj, gamma, stride))
    _summary(opts, report)
    return 0


def _record_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            if line.startswith("# manifest:"):
                return json.loads(line.split(":", 1)[1])
    return {}


COMMANDS = {
    "trajectory": cmd_trajectory,
    "ensemble": cmd_ensemble,
    "scan": cmd_scan,
    "oracle": cmd_oracle,
    "records": cmd_records,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    command = ns.command
    try:
        opts, given = resolve(ns)
        if command == "replay":
            return cmd_replay(opts, given)
        return COMMANDS[command](opts)
    except RecordMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
