"""Command line interface.

Subcommands: ``synth``, ``solve``, ``phase-transition``, ``convergence``,
``init-sweep``. Every subcommand accepts ``--seed``, ``--config`` and ``--out``;
values from the config file are overridden by explicit flags.

Exit codes: 0 success, 2 usage/config error, 3 data-format error, 4 solver error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import experiments, formats
from .core import FeaturePair, GroundTruth, IMCError
from .datagen import ProblemSpec, generate_problem, sample_bernoulli, sample_fixed_count
from .solver import SolverConfig, SolverError, solve

EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 2, 3, 4


def _bool(s):
    s = str(s).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return [float(x) for x in str(s).split(",") if x.strip()]


def _ints(s):
    return [int(x) for x in str(s).split(",") if x.strip()]


# key -> (parser, help)
SOLVER_KEYS = {
    "phase2_iters": (int, "Phase-2 iterations S (default ceil(r log n); 0 skips Phase 2)"),
    "phase3_iters": (int, "Phase-3 iterations T"),
    "eta": (float, "explicit Phase-2 step size"),
    "tau": (float, "explicit Phase-3 step size"),
    "step_const_eta": (float, "c_eta in eta = c_eta / (r sigma1_hat)"),
    "step_const_tau": (float, "c_tau in tau = c_tau / sigma1_hat"),
    "mu0": (float, "coherence bound used by the Phase-2 projection"),
    "delta": (float, "projection accuracy"),
    "theory_delta": (_bool, "use delta = 1/(r kappa_hat n^2)"),
    "lam": (float, "weight of the unobserved-entry penalty"),
    "stop_tol": (float, "early-exit threshold"),
    "max_data_passes": (float, "data-pass budget"),
    "init_pass_charge": (float, "data passes charged for the spectral init"),
    "success_threshold": (float, "relative-error success threshold"),
    "max_sweeps": (int, "projection sweep cap"),
    "record_time": (_bool, "record wall-clock times in trace.csv"),
}
DIM_KEYS = {k: (int, f"dimension {k}") for k in ("d1", "d2", "n1", "n2", "r")}
COMMON_KEYS = {"seed": (int, "master seed"), "out": (str, "output directory")}

COMMANDS = {
    "synth": {**DIM_KEYS, "p": (float, "also sample with Bernoulli rate p"),
              "m": (int, "also sample exactly m entries")},
    "solve": {**DIM_KEYS, "in": (str, "directory written by synth"),
              "p": (float, "Bernoulli sampling rate"), "m": (int, "fixed observation count"),
              **SOLVER_KEYS},
    "phase-transition": {**DIM_KEYS, "preset": (str, "smoke or full"),
                         "ratios": (_floats, "comma-separated m/(nr) values"),
                         "trials": (int, "trials per ratio"), "threshold": (float, "success threshold"),
                         "workers": (int, "worker processes"), **SOLVER_KEYS},
    "convergence": {**DIM_KEYS, "p": (float, "Bernoulli sampling rate"), **SOLVER_KEYS},
    "init-sweep": {**DIM_KEYS, "sizes": (_ints, "comma-separated |Omega_0| values"),
                   "trials": (int, "trials per size"), "workers": (int, "worker processes")},
}


class UsageError(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(prog="imcflow", description="Inductive matrix completion by gradient descent.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value configuration file")
        for key, (_, help_) in {**COMMON_KEYS, **keys}.items():
            sp.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, help=help_)
    return parser


def resolve(args):
    """Merge config-file values and flags, converting each to its declared type."""
    keys = {**COMMON_KEYS, **COMMANDS[args.command]}
    raw = {}
    if args.config:
        try:
            raw.update(formats.read_config(args.config, set(keys) | ({"rank"} if "r" in keys else set())))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except IMCError as exc:
            raise UsageError(str(exc)) from None
        if "rank" in raw:
            if "r" in raw:
                raise UsageError(f"{args.config}: give only one of 'r' and 'rank'")
            raw["r"] = raw.pop("rank")
    for key in keys:
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    out = {}
    for key, value in raw.items():
        try:
            out[key] = keys[key][0](value)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None
    return out


def _require(cfg, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join(missing))


def _solver_config(cfg, rank, **extra):
    names = {f.name for f in fields(SolverConfig)}
    kwargs = {k: v for k, v in cfg.items() if k in names}
    kwargs.update(extra)
    try:
        return SolverConfig(rank=rank, **kwargs)
    except IMCError as exc:
        raise UsageError(str(exc)) from None


def _spec(cfg):
    _require(cfg, "d1", "d2", "n1", "n2", "r")
    try:
        return ProblemSpec(cfg["d1"], cfg["d2"], cfg["n1"], cfg["n2"], cfg["r"], cfg.get("seed", 0))
    except IMCError as exc:
        raise UsageError(str(exc)) from None


def _out_dir(cfg, default="."):
    path = Path(cfg.get("out", default))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_echo(path, cfg):
    (path / "config.echo").write_text(formats.format_config(cfg), encoding="utf-8")


def cmd_synth(cfg):
    spec = _spec(cfg)
    out = _out_dir(cfg)
    features, truth = generate_problem(spec)
    formats.save_dense(features.x_left, out / "x_left.csv")
    formats.save_dense(features.x_right, out / "x_right.csv")
    formats.save_dense(truth.u_star, out / "u_star.csv")
    formats.save_dense(truth.v_star, out / "v_star.csv")
    if "p" in cfg and "m" in cfg:
        raise UsageError("give at most one of p and m")
    obs = _sample(features, truth, cfg)
    if obs is not None:
        formats.save_observations(obs, out / "obs.txt")
    _write_echo(out, cfg)
    return 0


def _sample(features, truth, cfg):
    seed = cfg.get("seed", 0)
    try:
        if "p" in cfg:
            return sample_bernoulli(features, truth, cfg["p"], seed)
        if "m" in cfg:
            return sample_fixed_count(features, truth, cfg["m"], seed)
    except IMCError as exc:
        raise UsageError(str(exc)) from None
    return None


def load_problem(directory):
    """Load features, optional ground truth and optional observations from a synth directory."""
    d = Path(directory)
    if not d.is_dir():
        raise formats.DataFormatError(f"input directory not found: {d}")
    features = FeaturePair(formats.load_dense(d / "x_left.csv"), formats.load_dense(d / "x_right.csv"))
    truth = None
    if (d / "u_star.csv").exists() and (d / "v_star.csv").exists():
        u = formats.load_dense(d / "u_star.csv")
        v = formats.load_dense(d / "v_star.csv")
        truth = GroundTruth(u @ v.T, u, v, np.einsum("ij,ij->j", u, u))
    obs = None
    if (d / "obs.txt").exists():
        obs = formats.load_observations(d / "obs.txt", features.d1, features.d2)
    return features, truth, obs


def cmd_solve(cfg):
    if "p" in cfg and "m" in cfg:
        raise UsageError("give at most one of p and m")
    if "in" in cfg:
        try:
            features, truth, obs = load_problem(cfg["in"])
        except (IMCError, OSError) as exc:
            raise formats.DataFormatError(str(exc)) from exc
        rank = cfg.get("r", truth.rank if truth is not None else None)
        if rank is None:
            raise UsageError("rank r is required when no ground truth is saved")
        default_out = cfg["in"]
    else:
        spec = _spec(cfg)
        features, truth = generate_problem(spec)
        obs, rank, default_out = None, spec.r, "."
    sampled = _sample(features, truth, cfg) if truth is not None else None
    if sampled is not None:
        obs = sampled
    if obs is None:
        raise UsageError("no observations: provide obs.txt in --in, or --p / --m")
    cfg = {**cfg, "r": rank}
    config = _solver_config(cfg, rank, seed=cfg.get("seed", 0))
    report = solve(obs, features, config, truth)
    out = _out_dir(cfg, default_out)
    echo = {**{k: v for k, v in config.to_dict().items() if k in SOLVER_KEYS}, **cfg}
    formats.save_report(report, out, echo=echo)
    formats.save_dense(report.factors.u, out / "u_hat.csv")
    formats.save_dense(report.factors.v, out / "v_hat.csv")
    return 0


def cmd_phase_transition(cfg):
    cfg = dict(cfg)
    preset = cfg.get("preset")
    if preset is not None:
        if preset not in experiments.PRESETS:
            raise UsageError(f"unknown preset {preset!r}; choose from {sorted(experiments.PRESETS)}")
        p = experiments.PRESETS[preset]
        d1, d2, n1, n2 = p["dims"]
        for key, value in dict(d1=d1, d2=d2, n1=n1, n2=n2, r=p["r"], ratios=list(p["ratios"]),
                               trials=p["trials"]).items():
            cfg.setdefault(key, value)
    _require(cfg, "d1", "d2", "n1", "n2", "r", "ratios", "trials")
    threshold = cfg.get("threshold", 1e-6)
    solver_keys = {k: v for k, v in cfg.items() if k in SOLVER_KEYS}
    config = _solver_config(cfg, cfg["r"]) if solver_keys else None
    result = experiments.phase_transition(
        (cfg["d1"], cfg["d2"], cfg["n1"], cfg["n2"]), cfg["r"], cfg["ratios"], cfg["trials"],
        threshold=threshold, seed=cfg.get("seed", 0), config=config, workers=cfg.get("workers"))
    out = _out_dir(cfg)
    formats.write_csv(out / "phase_transition.csv", result.rows())
    _write_echo(out, cfg)
    return 0


def cmd_convergence(cfg):
    _require(cfg, "d1", "d2", "n1", "n2", "r", "p")
    config = _solver_config(cfg, cfg["r"])
    curve = experiments.convergence_curve((cfg["d1"], cfg["d2"], cfg["n1"], cfg["n2"]), cfg["r"], cfg["p"],
                                          seed=cfg.get("seed", 0), config=config)
    out = _out_dir(cfg)
    formats.write_csv(out / "convergence.csv", curve.rows())
    formats.save_report(curve.report, out, echo=cfg)
    return 0


def cmd_init_sweep(cfg):
    _require(cfg, "d1", "d2", "n1", "n2", "r")
    n = max(cfg["n1"], cfg["n2"])
    sizes = cfg.get("sizes", [2 * n * cfg["r"], 8 * n * cfg["r"], 32 * n * cfg["r"]])
    rows = experiments.init_quality_sweep((cfg["d1"], cfg["d2"], cfg["n1"], cfg["n2"]), cfg["r"], sizes,
                                          cfg.get("trials", 20), seed=cfg.get("seed", 0),
                                          workers=cfg.get("workers"))
    out = _out_dir(cfg)
    formats.write_csv(out / "init_sweep.csv", rows)
    _write_echo(out, cfg)
    return 0


HANDLERS = {
    "synth": cmd_synth,
    "solve": cmd_solve,
    "phase-transition": cmd_phase_transition,
    "convergence": cmd_convergence,
    "init-sweep": cmd_init_sweep,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"imcflow {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except formats.DataFormatError as exc:
        print(f"imcflow {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"imcflow {args.command}: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except IMCError as exc:
        print(f"imcflow {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"imcflow {args.command}: io error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
