"""Command-line benchmark driver.

Subcommands
-----------
verify       symplectic residuals + order-condition decay slopes per method
converge     global error against the reference over an h schedule
efficiency   same rows with a CPU-oriented default schedule
energy       max Hamiltonian drift GEH over growing horizons t_end = 10^i
stability    (V, z) region scan per method
list-methods registry contents

Every experiment writes CSV files (17 significant digits, fixed row order -
reruns are byte-identical except for the cpu_seconds column) plus a run.json
manifest.  Failed integrations are recorded per-row in the status column
with GE = inf rather than aborting the experiment.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .integrator import SolveSettings, State, StageConvergenceError, integrate
from .problems import PROBLEM_NAMES, make_problem
from .stability import scan_region, write_grid_csv
from .tableau import DenominatorGuardError, get_method, method_names
from .verification import conditions_for, order_residual_decay, symplectic_residuals

SERKN_METHODS = ["SERKN1s2(1)", "SERKN1s2(2)", "SERKN2s3", "SERKN2s4",
                 "SERKN3s4(1)", "SERKN3s4(2)"]
SYMPLECTIC_SAMPLES = (0.0, 0.1, 1.0, 10.0, 100.0, 400.0)
SYMPLECTIC_THRESHOLD = 1e-12
DECAY_H = (0.4, 0.2, 0.1, 0.05)
DECAY_OMEGA = 2.0
SLOPE_MARGIN = 0.1
REFERENCE_METHOD = "SERKN3s4(1)"
REFERENCE_REFINE = 20

# default stepsize schedules per (kind, problem)
H_SCHEDULES = {
    ("converge", "sine-gordon"): [1.0 / (20 * 2 ** i) for i in range(1, 5)],
    ("efficiency", "sine-gordon"): [1.0 / (100 * 2 ** i) for i in range(1, 5)],
    ("converge", "duffing"): [1.0 / (200 * i) for i in range(1, 5)],
    ("efficiency", "duffing"): [1.0 / (40 * i) for i in range(1, 5)],
    ("converge", "stellar"): [1.0 / (8 * i) for i in range(1, 5)],
    ("efficiency", "stellar"): [1.0 / (40 * i) for i in range(1, 5)],
}
ENERGY_H = {"sine-gordon": 1.0 / 40, "duffing": 1.0 / 50, "stellar": 1.0 / 10}
ENERGY_T_ENDS = [1.0, 10.0, 100.0, 1000.0]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    methods: list = field(default_factory=lambda: list(SERKN_METHODS))
    problem: str = None
    problem_params: dict = field(default_factory=dict)
    h_list: list = None
    t_end: float = 10.0
    t_end_list: list = field(default_factory=lambda: list(ENERGY_T_ENDS))
    out_dir: str = "results"
    v_range: tuple = (0.0, 50.0)
    z_range: tuple = (-50.0, 50.0)
    nV: int = 400
    nz: int = 400
    stage_tol: float = 1e-14
    max_iters: int = 50


_KINDS = ("verify", "converge", "efficiency", "energy", "stability")
_CONFIG_KEYS = {
    "kind", "methods", "problem", "problem_params", "h_list", "t_end",
    "t_end_list", "out_dir", "v_range", "z_range", "nV", "nz",
    "stage_tol", "max_iters",
}


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.kind not in _KINDS:
        raise ConfigError(f"unknown kind {cfg.kind!r}; expected one of {_KINDS}")
    known = set(method_names())
    for name in cfg.methods:
        if name not in known:
            raise ConfigError(f"unknown method {name!r}; known: {sorted(known)}")
    if cfg.kind in ("converge", "efficiency", "energy"):
        if cfg.problem is None:
            raise ConfigError(f"kind {cfg.kind!r} requires a problem name")
        if cfg.problem not in PROBLEM_NAMES:
            raise ConfigError(f"unknown problem {cfg.problem!r}; known: {PROBLEM_NAMES}")
    if cfg.h_list is None and cfg.kind in ("converge", "efficiency"):
        cfg.h_list = list(H_SCHEDULES[(cfg.kind, cfg.problem)])
    if cfg.h_list is not None:
        if any(h <= 0 for h in cfg.h_list):
            raise ConfigError("stepsizes must be positive")
        if len(cfg.h_list) > 1 and any(
                b >= a for a, b in zip(cfg.h_list, cfg.h_list[1:])):
            raise ConfigError("h schedule must be strictly decreasing")
    return cfg


def load_config(path) -> ExperimentConfig:
    """Parse a JSON config file into a validated ExperimentConfig."""
    with open(path) as fh:
        text = fh.read()
    if not text.strip():
        raise ConfigError(
            "empty config: required keys are 'kind' (one of "
            f"{', '.join(_KINDS)}) plus 'problem' for converge/efficiency/energy; "
            "optional: " + ", ".join(sorted(_CONFIG_KEYS - {'kind', 'problem'})))
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "kind" not in raw:
        raise ConfigError("config is missing the required key 'kind'")
    cfg = ExperimentConfig(kind=raw["kind"])
    for key, val in raw.items():
        setattr(cfg, key, val)
    return _validate(cfg)


# ---------------------------------------------------------------------------
# experiment runners
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return f"{x:.17g}"


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _sanitize(name: str) -> str:
    return name.replace("(", "_").replace(")", "").replace("/", "-")


def _global_error(traj, ref_states) -> float:
    err = 0.0
    for got, want in zip(traj.states, ref_states):
        err = max(err,
                  float(np.max(np.abs(got.q - want[0]))),
                  float(np.max(np.abs(got.p - want[1]))))
    return err


def _reference_states(prob, q0, p0, times, h, stride, t_end, settings_kw):
    """Exact reference when available, else a 20x finer run of the
    order-4 reference method sampled at the same times."""
    if prob.reference is not None:
        return [prob.reference(t) for t in times]
    fine = integrate(get_method(REFERENCE_METHOD), prob,
                     State(t=0.0, q=q0, p=p0),
                     SolveSettings(h=h / REFERENCE_REFINE, t_end=t_end,
                                   record_stride=stride * REFERENCE_REFINE,
                                   **settings_kw))
    if fine.failure is not None:
        raise StageConvergenceError(f"reference run failed: {fine.failure}")
    return [(s.q, s.p) for s in fine.states]


def run_converge(cfg: ExperimentConfig, csv_name=None):
    prob, q0, p0 = make_problem(cfg.problem, **cfg.problem_params)
    settings_kw = {"stage_tol": cfg.stage_tol, "max_iters": cfg.max_iters}
    rows = []
    ref_cache = {}
    for name in cfg.methods:
        m = get_method(name)
        for h in cfg.h_list:
            n_steps = round(cfg.t_end / h)
            stride = max(1, n_steps // 400)
            status, ge, nfev, cpu = "ok", float("inf"), 0, 0.0
            try:
                t0 = time.perf_counter()
                traj = integrate(m, prob, State(t=0.0, q=q0, p=p0),
                                 SolveSettings(h=h, t_end=cfg.t_end,
                                               record_stride=stride, **settings_kw))
                cpu = time.perf_counter() - t0
                nfev = traj.nfev
                if traj.failure is not None:
                    status = f"failed: {traj.failure}"
                else:
                    key = (h, stride)
                    if key not in ref_cache:
                        ref_cache[key] = _reference_states(
                            prob, q0, p0, traj.times, h, stride, cfg.t_end,
                            settings_kw)
                    ge = _global_error(traj, ref_cache[key])
            except (StageConvergenceError, DenominatorGuardError) as exc:
                status = f"failed: {exc}"
            rows.append([name, _fmt(h), str(nfev), _fmt(ge), _fmt(cpu), status])
    path = f"{cfg.out_dir}/{csv_name or cfg.kind}.csv"
    _write_csv(path, ["method", "h", "nfev", "GE", "cpu_seconds", "status"], rows)
    return [path]


def run_energy(cfg: ExperimentConfig):
    prob, q0, p0 = make_problem(cfg.problem, **cfg.problem_params)
    h = cfg.h_list[0] if cfg.h_list else ENERGY_H[cfg.problem]
    t_ends = sorted(cfg.t_end_list)
    rows = []
    for name in cfg.methods:
        m = get_method(name)
        status = "ok"
        gehs = {}
        try:
            traj = integrate(m, prob, State(t=0.0, q=q0, p=p0),
                             SolveSettings(h=h, t_end=t_ends[-1], record_stride=1,
                                           stage_tol=cfg.stage_tol,
                                           max_iters=cfg.max_iters))
            if traj.failure is not None:
                status = f"failed: {traj.failure}"
            else:
                drift = np.abs(traj.energies - traj.energies[0])
                times = traj.times
                for t_end in t_ends:
                    gehs[t_end] = float(np.max(drift[times <= t_end * (1 + 1e-12)]))
        except (StageConvergenceError, DenominatorGuardError) as exc:
            status = f"failed: {exc}"
        for t_end in t_ends:
            rows.append([name, _fmt(t_end), _fmt(gehs.get(t_end, float("inf"))),
                         status])
    path = f"{cfg.out_dir}/energy.csv"
    _write_csv(path, ["method", "t_end", "GEH", "status"], rows)
    return [path]


def run_stability(cfg: ExperimentConfig):
    paths = []
    for name in cfg.methods:
        grid = scan_region(get_method(name), cfg.v_range, cfg.z_range,
                           cfg.nV, cfg.nz)
        path = f"{cfg.out_dir}/stability_{_sanitize(name)}.csv"
        write_grid_csv(grid, path)
        paths.append(path)
    return paths


def run_verify(cfg: ExperimentConfig):
    rows = []
    failed = False
    for name in cfg.methods:
        m = get_method(name)
        # frozen tableaux run with the stiffness folded out, so V = 0 is
        # their only operating point; the v-dependent identities apply to
        # the phi-coefficient methods
        samples = (0.0,) if m.classical else SYMPLECTIC_SAMPLES
        for v in samples:
            for idx, r in enumerate(symplectic_residuals(m, v)):
                ok = r < SYMPLECTIC_THRESHOLD
                failed |= not ok
                rows.append([name, f"sympl[{idx}]@v={v:g}", _fmt(r),
                             _fmt(SYMPLECTIC_THRESHOLD), str(ok).lower()])
        if m.classical:
            continue
        set_id, conds = conditions_for(m)
        for cond in conds:
            slope = order_residual_decay(m, cond, DECAY_OMEGA, DECAY_H)
            if cond.required_order is None:
                ok = True
                threshold = float("nan")
            else:
                threshold = cond.required_order
                ok = slope >= threshold - SLOPE_MARGIN
                failed |= not ok
            rows.append([name, f"{set_id}:{cond.label}", _fmt(slope),
                         _fmt(threshold), str(ok).lower()])
    path = f"{cfg.out_dir}/verify.csv"
    _write_csv(path, ["method", "check_id", "value", "threshold", "pass"], rows)
    return [path], failed


def run_experiment(cfg: ExperimentConfig):
    """Dispatch one experiment; returns (output paths, exit code)."""
    import os

    os.makedirs(cfg.out_dir, exist_ok=True)
    started = time.perf_counter()
    code = 0
    if cfg.kind == "verify":
        paths, failed = run_verify(cfg)
        code = 1 if failed else 0
    elif cfg.kind in ("converge", "efficiency"):
        paths = run_converge(cfg, csv_name=cfg.kind)
    elif cfg.kind == "energy":
        paths = run_energy(cfg)
    elif cfg.kind == "stability":
        paths = run_stability(cfg)
    else:
        raise ConfigError(f"unknown kind {cfg.kind!r}")
    manifest = {
        "config": {k: getattr(cfg, k) for k in sorted(_CONFIG_KEYS)},
        "outputs": sorted(paths),
        "versions": {"serkn": __version__, "numpy": np.__version__,
                     "python": sys.version.split()[0]},
        "wall_clock_seconds": time.perf_counter() - started,
    }
    with open(f"{cfg.out_dir}/run.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=list)
        fh.write("\n")
    return paths, code


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(sub, with_problem=True):
    sub.add_argument("--method", action="append", default=None,
                     help="method name, repeatable or comma-separated "
                          "(default: the six SERKN methods)")
    sub.add_argument("--config", help="JSON config file; flags override it")
    sub.add_argument("--out-dir", default=None)
    if with_problem:
        sub.add_argument("--problem", choices=PROBLEM_NAMES)
        sub.add_argument("--h", type=float, nargs="+", default=None,
                         help="stepsize schedule, strictly decreasing")
        sub.add_argument("--t-end", type=float, default=None)
        sub.add_argument("--N", type=int, default=None, help="sine-Gordon lattice size")
        sub.add_argument("--spacing", choices=["1/N", "2/N"], default=None)
        sub.add_argument("--k", type=float, default=None, help="Duffing nonlinearity")
        sub.add_argument("--a", type=float, default=None, help="stellar frequency a")
        sub.add_argument("--b", type=float, default=None, help="stellar frequency b")
        sub.add_argument("--eps", type=float, default=None, help="stellar coupling")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="serkn", description="diagonal implicit symplectic ERKN benchmarks")
    subs = parser.add_subparsers(dest="kind", required=True)
    for kind in ("verify", "converge", "efficiency", "energy"):
        _add_common(subs.add_parser(kind), with_problem=kind != "verify")
    stab = subs.add_parser("stability")
    _add_common(stab, with_problem=False)
    stab.add_argument("--v-max", type=float, default=None)
    stab.add_argument("--z-max", type=float, default=None)
    stab.add_argument("--nv", type=int, default=None)
    stab.add_argument("--nz", type=int, default=None)
    subs.choices["energy"].add_argument("--t-end-list", type=float, nargs="+",
                                        default=None)
    subs.add_parser("list-methods")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        cfg.kind = args.kind
    else:
        cfg = ExperimentConfig(kind=args.kind)
    if getattr(args, "method", None):
        cfg.methods = [name for chunk in args.method for name in chunk.split(",")]
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    if getattr(args, "problem", None):
        cfg.problem = args.problem
    if getattr(args, "h", None):
        cfg.h_list = list(args.h)
    if getattr(args, "t_end", None) is not None:
        cfg.t_end = args.t_end
    if getattr(args, "t_end_list", None):
        cfg.t_end_list = list(args.t_end_list)
    for key in ("N", "spacing", "k", "a", "b", "eps"):
        val = getattr(args, key, None)
        if val is not None:
            cfg.problem_params[key] = val
    if args.kind == "stability":
        if args.v_max is not None:
            cfg.v_range = (0.0, args.v_max)
        if args.z_max is not None:
            cfg.z_range = (-args.z_max, args.z_max)
        if args.nv is not None:
            cfg.nV = args.nv
        if args.nz is not None:
            cfg.nz = args.nz
    # problems only accept their own parameters
    if cfg.problem == "sine-gordon":
        cfg.problem_params = {k: v for k, v in cfg.problem_params.items()
                              if k in ("N", "spacing")}
    elif cfg.problem == "duffing":
        cfg.problem_params = {k: v for k, v in cfg.problem_params.items()
                              if k == "k"}
    elif cfg.problem == "stellar":
        cfg.problem_params = {k: v for k, v in cfg.problem_params.items()
                              if k in ("a", "b", "eps")}
    return _validate(cfg)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.kind == "list-methods":
        for name in method_names():
            print(name)
        return 0
    try:
        cfg = _config_from_args(args)
        paths, code = run_experiment(cfg)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return code


if __name__ == "__main__":
    sys.exit(main())
