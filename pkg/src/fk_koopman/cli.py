"""Command-line front end.

Exit codes: 0 success, 1 validation error (bad config or arguments),
2 numerical failure (blow-up, Riccati failure, failed verification).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .baselines import CareError
from .experiments import collect_identification_data, identify, run_task, task_reference, identification_policy
from .integrator import IntegrationError, SimConfig, simulate
from .io import (
    ConfigError,
    RunConfig,
    config_hash,
    dump_config,
    load_config,
    read_predictor,
    seed_from_env,
    write_predictor,
    write_report,
    write_trajectory_csv,
)
from .model import build_coupling
from .plots import emit_plots

log = logging.getLogger("fk_koopman")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(p: argparse.ArgumentParser, task_positional: bool = False):
    if task_positional:
        p.add_argument("task", help="stable, swing-up or periodic")
    else:
        p.add_argument("--task", help="stable, swing-up or periodic")
    p.add_argument("--config", type=Path, help="INI run configuration")
    p.add_argument("--n", type=int, help="number of pendulums")
    p.add_argument("--seed", type=int, help="master seed (overrides FK_SEED and the config)")
    p.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fk-koopman", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="open-loop or identification-policy run")
    _common(p)
    p.add_argument("--policy", choices=("zero", "identification"), default="zero")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--ic-amplitude", type=float, default=0.5, help="uniform random initial angle amplitude [rad]")

    p = sub.add_parser("identify", help="collect data and fit the lifted predictor")
    _common(p)

    p = sub.add_parser("control", help="closed-loop run with a stored predictor")
    _common(p)
    p.add_argument("--predictor", type=Path, required=True)

    p = sub.add_parser("reproduce", help="identify and control end to end")
    _common(p, task_positional=True)

    p = sub.add_parser("verify", help="run the invariant and oracle checks")
    p.add_argument("--seed", type=int, default=0)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    changes = {}
    if getattr(args, "task", None):
        changes["task"] = args.task
    if getattr(args, "n", None) is not None:
        changes["n"] = args.n
    if getattr(args, "out", None) is not None:
        changes["output_dir"] = str(args.out)
    seed = seed_from_env(cfg.seed)
    if getattr(args, "seed", None) is not None:
        seed = args.seed
    changes["seed"] = seed
    return RunConfig(**{**cfg.__dict__, **changes})


def _metadata(cfg: RunConfig) -> dict:
    return {"task": cfg.task, "seed": cfg.seed, "config_hash": config_hash(cfg)}


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg), encoding="utf-8")
    return out


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    task, params = cfg.task_spec(), cfg.params()
    coupling = build_coupling(task.n, params)
    duration = args.duration or task.run_duration
    sim = SimConfig(control_dt=task.dt, substeps_per_control=task.substeps, duration=duration, seed=task.seed)
    rng = np.random.default_rng(task.seed)
    x0 = np.zeros(2 * task.n)
    x0[0::2] = rng.uniform(-args.ic_amplitude, args.ic_amplitude, task.n)
    ref = task_reference(task, params, duration)
    if args.policy == "zero":
        policy = lambda t, x, r: 0.0  # noqa: E731
    else:
        policy = identification_policy(task, params, coupling, task.seed, ref)
        if task.kind == "swing_up":
            x0[0::2] += np.pi
    traj = simulate(x0, policy, sim, params, coupling, reference=ref.samples)
    out = _outdir(cfg)
    meta = _metadata(cfg)
    write_trajectory_csv(traj, out / "trajectory.csv", meta)
    emit_plots(traj, None, out, u_bound=task.u_max, description=str(meta))
    if "error" in traj.metadata:
        log.error("simulation stopped: %s", traj.metadata["error"])
        return EXIT_NUMERICAL
    print(f"wrote {out / 'trajectory.csv'}")
    return EXIT_OK


def _identify(cfg: RunConfig):
    task, params = cfg.task_spec(), cfg.params()
    coupling = build_coupling(task.n, params)
    data = collect_identification_data(task, params, coupling)
    pred = identify(task, params, coupling, data)
    return task, params, coupling, pred


def cmd_identify(args) -> int:
    cfg = resolve_config(args)
    _, _, _, pred = _identify(cfg)
    out = _outdir(cfg)
    path = write_predictor(pred, out / "predictor.txt", _metadata(cfg))
    print(f"wrote {path} (residual {pred.report['residual']:.3g}, rank {pred.report['rank']})")
    return EXIT_OK


def _control(cfg: RunConfig, pred, task, params, coupling) -> int:
    if pred.n_pendulums != task.n:
        raise ConfigError(f"predictor is for {pred.n_pendulums} pendulums, config asks for {task.n}")
    traj, report = run_task(task, params, coupling, pred)
    out = _outdir(cfg)
    meta = _metadata(cfg)
    write_trajectory_csv(traj, out / "trajectory.csv", meta)
    write_report(report, out / "report.txt", meta)
    emit_plots(traj, report, out, u_bound=task.u_max, description=str(meta))
    log.info("closed loop took %.1f s", traj.metadata.get("wall_time", float("nan")))
    status = "synchronized" if report.synchronized else "not synchronized"
    print(f"{task.kind}: {status}, time to sync {report.time_to_sync:.3f} s; wrote {out}")
    if "error" in traj.metadata:
        log.error("closed loop stopped: %s", traj.metadata["error"])
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_control(args) -> int:
    cfg = resolve_config(args)
    task, params = cfg.task_spec(), cfg.params()
    coupling = build_coupling(task.n, params)
    try:
        pred, _ = read_predictor(args.predictor)
    except OSError as exc:
        raise ConfigError(f"cannot read predictor {args.predictor}: {exc}") from exc
    return _control(cfg, pred, task, params, coupling)


def cmd_reproduce(args) -> int:
    cfg = resolve_config(args)
    task, params, coupling, pred = _identify(cfg)
    write_predictor(pred, _outdir(cfg) / "predictor.txt", _metadata(cfg))
    return _control(cfg, pred, task, params, coupling)


def cmd_verify(args) -> int:
    from .verify import run_suite

    results = run_suite(args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail} ({r.seconds:.2f} s)")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


COMMANDS = {
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "control": cmd_control,
    "reproduce": cmd_reproduce,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (IntegrationError, CareError, FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
