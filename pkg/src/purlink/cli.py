"""Command-line front end: single runs, parameter sweeps, heatmap generation.

Exit codes: 0 success, 1 usage, 2 config/validation error, 3 runtime error.
All numeric CSV cells are written with repr(float(x)), so output is
byte-stable across runs and thread counts for a fixed seed.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import Estimates, estimate
from .config import Config, ConfigError, apply_axis, load_config
from .protocols import PROTOCOL_NAMES, ProtocolKind, Pumping, run_trial
from .purify import CircuitError

SWEEP_HEADER = "protocol,f0,t2_s,mu_hz,d_km,n_steps,fidelity,fidelity_ci,rate,rate_ci,skr,n_trials"
HEATMAP_HEADER = "f0,t2_s,best_protocol,best_skr,skr_nop,skr_base,skr_hopt,skr_opt"

_EVENT_TRIAL_INDEX = 2**62  # far outside any reachable trial index


def _fmt(x: float) -> str:
    return repr(float(x))


def _steps_of(cfg: Config) -> int:
    if isinstance(cfg.scheme, Pumping):
        return cfg.scheme.n_steps
    return cfg.scheme.circuit.num_pairs - 1


def _cell_seed(cfg: Config, name: str, cell_idx: int) -> tuple[int, int, int]:
    # Canonical protocol index, not the position in the requested subset:
    # this keeps per-protocol streams identical across subsets and layouts.
    return (cfg.seed, PROTOCOL_NAMES.index(name), cell_idx)


def _task(cfg: Config, name: str, cell_idx: int, mbc: bool):
    return (
        ProtocolKind(name, measure_before_confirm=mbc),
        cfg.scheme,
        cfg.link,
        cfg.noise,
        cfg.trials_min,
        _cell_seed(cfg, name, cell_idx),
        cfg.ci_target,
        cfg.max_trials,
        cfg.skf_mode,
    )


def _run_task(task) -> Estimates:
    kind, scheme, link, noise, n_min, seed, ci_target, max_trials, skf_mode = task
    return estimate(
        kind, scheme, link, noise, n_min, seed,
        ci_target=ci_target, max_trials=max_trials, skf_mode=skf_mode,
    )


def _run_all(tasks, threads: int) -> list[Estimates]:
    if threads <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_task, tasks))


def _write_events_log(path: str, cfg: Config, mbc: bool) -> None:
    """One fully traced extra trial per protocol, appended per section."""
    lines: list[str] = []
    for name in cfg.protocols:
        kind = ProtocolKind(name, measure_before_confirm=mbc)
        events: list[str] = []
        rng_seed = (*_cell_seed(cfg, name, 0), _EVENT_TRIAL_INDEX)
        run_trial(kind, cfg.scheme, cfg.link, cfg.noise,
                  np.random.default_rng(rng_seed), events=events)
        lines.append(f"# protocol {name}")
        lines.extend(events)
    Path(path).write_text("\n".join(lines) + "\n")


def _apply_flags(cfg: Config, args) -> Config:
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.trials_min is not None:
        if args.trials_min < 100:
            raise ConfigError("invalid value for 'trials_min': must be at least 100")
        cfg = replace(cfg, trials_min=args.trials_min)
    if args.ci_target is not None:
        if args.ci_target <= 0:
            raise ConfigError("invalid value for 'ci_target': must be positive")
        cfg = replace(cfg, ci_target=args.ci_target)
    if args.max_trials is not None:
        if args.max_trials < cfg.trials_min:
            raise ConfigError("invalid value for 'max_trials': must be at least trials_min")
        cfg = replace(cfg, max_trials=args.max_trials)
    return cfg


def _grid(cfg: Config) -> list[Config]:
    """Effective configs in lexicographic grid order (first axis slowest)."""
    points = [cfg]
    for param, values in cfg.axes:
        points = [apply_axis(p, param, v) for p in points for v in values]
    return points


def cmd_simulate(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    if cfg.axes:
        raise ConfigError("simulate takes no sweep axes; use the sweep command")
    tasks = [_task(cfg, name, 0, cfg.measure_before_confirm) for name in cfg.protocols]
    results = _run_all(tasks, args.threads)
    print("protocol fidelity fidelity_ci rate_per_s rate_ci skr_bits_per_s n_trials converged")
    for name, est in zip(cfg.protocols, results):
        print(
            f"{name} {_fmt(est.mean_fidelity)} {_fmt(est.ci_halfwidth_fidelity)} "
            f"{_fmt(est.rate)} {_fmt(est.ci_halfwidth_rate)} {_fmt(est.skr)} "
            f"{est.n_trials} {'yes' if est.converged else 'no'}"
        )
    if args.events_log:
        _write_events_log(args.events_log, cfg, cfg.measure_before_confirm)
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    if not cfg.axes:
        raise ConfigError("sweep requires at least 'sweep_param' and 'sweep_values'")
    points = _grid(cfg)
    names = [n for n in PROTOCOL_NAMES if n in cfg.protocols]
    tasks = [
        _task(point, name, idx, cfg.measure_before_confirm)
        for idx, point in enumerate(points)
        for name in names
    ]
    results = _run_all(tasks, args.threads)
    lines = [SWEEP_HEADER]
    it = iter(results)
    for idx, point in enumerate(points):
        for name in names:
            est = next(it)
            lines.append(",".join((
                name,
                _fmt(point.link.f0),
                _fmt(point.noise.t2),
                _fmt(point.link.mu),
                _fmt(point.link.d),
                str(_steps_of(point)),
                _fmt(est.mean_fidelity),
                _fmt(est.ci_halfwidth_fidelity),
                _fmt(est.rate),
                _fmt(est.ci_halfwidth_rate),
                _fmt(est.skr),
                str(est.n_trials),
            )))
    Path(args.out_csv).write_text("\n".join(lines) + "\n")
    if args.events_log:
        _write_events_log(args.events_log, points[0], cfg.measure_before_confirm)
    return 0


def cmd_heatmap(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    axis_names = tuple(name for name, _ in cfg.axes)
    if axis_names != ("f0", "t2_s"):
        raise ConfigError(
            "heatmap requires exactly sweep_param = f0 and sweep_param2 = t2_s"
        )
    points = _grid(cfg)
    # The heatmap scores QKD operation: every protocol measures before the
    # final confirmation, so delivery is filtered, never awaited.
    tasks = [
        _task(point, name, idx, True)
        for idx, point in enumerate(points)
        for name in PROTOCOL_NAMES
    ]
    results = _run_all(tasks, args.threads)
    lines = [HEATMAP_HEADER]
    it = iter(results)
    for point in points:
        skrs = [next(it).skr for _ in PROTOCOL_NAMES]
        best_skr = max(skrs)
        if best_skr <= 0.0:
            best = "N/A"
        else:
            best = PROTOCOL_NAMES[skrs.index(best_skr)]  # ties: canonical order
        lines.append(",".join((
            _fmt(point.link.f0),
            _fmt(point.noise.t2),
            best,
            _fmt(best_skr),
            *(_fmt(s) for s in skrs),
        )))
    Path(args.out_csv).write_text("\n".join(lines) + "\n")
    if args.events_log:
        _write_events_log(args.events_log, points[0], True)
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit 1, not 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="purlink",
        description="Monte Carlo purified-link simulator: estimate fidelity, rate, and secret-key rate per protocol.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, needs_out, blurb in (
        ("simulate", cmd_simulate, False, "estimate one configuration and print a table"),
        ("sweep", cmd_sweep, True, "sweep one or two parameters to CSV"),
        ("heatmap", cmd_heatmap, True, "best-protocol map over (f0, t2_s) to CSV"),
    ):
        p = sub.add_parser(name, help=blurb, description=blurb)
        p.add_argument("config", help="experiment config file")
        if needs_out:
            p.add_argument("out_csv", help="output CSV path")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--trials-min", type=int, default=None, help="override minimum trials per estimate")
        p.add_argument("--ci-target", type=float, default=None, help="override relative CI target")
        p.add_argument("--max-trials", type=int, default=None, help="override the trial cap")
        p.add_argument("--threads", type=int, default=1, help="worker processes for grid cells")
        p.add_argument("--events-log", default=None, metavar="PATH",
                       help="write one traced trial per protocol to PATH")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, CircuitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit code
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
