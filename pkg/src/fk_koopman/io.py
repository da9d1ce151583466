"""Run configuration, trajectory CSV, predictor and report artifacts."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .edmd import LiftedPredictor
from .experiments import TASK_ALIASES, TASK_KINDS, TaskSpec, default_task
from .integrator import Trajectory
from .model import ChainParams

SEED_ENV = "FK_SEED"
MPC_PROFILES = {"simulation": 50, "hardware_budget": 20}

# section -> {config key: TaskSpec field}
_TASK_KEYS = {
    "sim": {"control_dt": "dt", "substeps": "substeps", "duration": "run_duration"},
    "edmd": {
        "n_traj": "n_traj",
        "traj_len": "traj_len",
        "ridge": "ridge",
        "ic_amplitude": "ident_ic_amplitude",
        "noise_std": "ident_noise_std",
    },
    "mpc": {
        "horizon": "horizon",
        "r_weight": "r_weight",
        "rate_weight": "rate_weight",
        "q_s": "q_s",
        "u_min": "u_min",
        "u_max": "u_max",
    },
    "task": {"epsilon": "epsilon", "ic_amplitude": "run_ic_amplitude", "sync_window": "sync_window"},
}
_RUN_KEYS = ("task", "n", "seed", "output_dir", "mpc_profile")
_CHAIN_KEYS = tuple(f.name for f in fields(ChainParams))
_FIELD_TYPES = {f.name: f.type for f in fields(TaskSpec)}


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


@dataclass
class RunConfig:
    """One reproducible experiment; unset overrides fall back to the task defaults."""

    task: str = "stable_eq"
    n: int = 5
    seed: int = 1
    output_dir: str = "out"
    mpc_profile: str = "simulation"
    chain: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.task = TASK_ALIASES.get(self.task, self.task)
        if self.task not in TASK_KINDS:
            raise ConfigError(f"run.task: unknown task {self.task!r}")
        if self.mpc_profile not in MPC_PROFILES:
            raise ConfigError(f"run.mpc_profile: expected one of {sorted(MPC_PROFILES)}")
        if self.n < 2:
            raise ConfigError("run.n: need at least 2 pendulums")
        for key in self.chain:
            if key not in _CHAIN_KEYS:
                raise ConfigError(f"chain.{key}: unknown key")

    def params(self) -> ChainParams:
        try:
            return ChainParams(**self.chain)
        except ValueError as exc:
            raise ConfigError(f"chain: {exc}") from exc

    def task_spec(self) -> TaskSpec:
        kw = {"seed": self.seed, "horizon": MPC_PROFILES[self.mpc_profile]}
        kw.update(self.overrides)
        try:
            return default_task(self.task, n=self.n, **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed))

    def dumps(self) -> str:
        return dump_config(self)

    def hash(self) -> str:
        return config_hash(self)


def _convert(section: str, key: str, raw: str):
    try:
        if section == "run":
            if key in ("n", "seed"):
                return int(raw)
            return raw.strip()
        if section == "chain":
            return float(raw)
        target = _TASK_KEYS[section][key]
        kind = _FIELD_TYPES[target]
        return int(raw) if kind in (int, "int") else float(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from exc


def parse_config(text: str) -> RunConfig:
    """Parse INI-style text; every section and key must be known. ``;`` starts an inline comment."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    run, chain, overrides = {}, {}, {}
    for section in cp.sections():
        if section == "run":
            allowed = _RUN_KEYS
        elif section == "chain":
            allowed = _CHAIN_KEYS
        elif section in _TASK_KEYS:
            allowed = tuple(_TASK_KEYS[section])
        else:
            raise ConfigError(f"[{section}]: unknown section")
        for key, raw in cp.items(section):
            if key not in allowed:
                raise ConfigError(f"{section}.{key}: unknown key")
            value = _convert(section, key, raw)
            if section == "run":
                run[key] = value
            elif section == "chain":
                chain[key] = value
            else:
                overrides[_TASK_KEYS[section][key]] = value
    return RunConfig(chain=chain, overrides=overrides, **run)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["run"] = {k: str(getattr(cfg, k)) for k in _RUN_KEYS}
    if cfg.chain:
        cp["chain"] = {k: repr(float(cfg.chain[k])) for k in _CHAIN_KEYS if k in cfg.chain}
    for section, keys in _TASK_KEYS.items():
        entries = {k: repr(cfg.overrides[f]) for k, f in keys.items() if f in cfg.overrides}
        if entries:
            cp[section] = entries
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_hash(cfg: RunConfig) -> str:
    """Digest of the experiment definition; the output location is not part of it."""
    canonical = dump_config(replace(cfg, output_dir=""))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def seed_from_env(default: int) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV}: not an integer: {raw!r}") from exc


def _fmt(v) -> str:
    return format(float(v), ".9g")


def write_trajectory_csv(traj: Trajectory, path, metadata: Optional[dict] = None) -> Path:
    """CSV with one row per control period.

    Leading ``#`` lines carry metadata (seed, config hash); the last input
    cell is left empty because no input is applied after the final state.
    """
    path = Path(path)
    n = traj.n_pendulums
    header = ["t", "u"]
    for i in range(1, n + 1):
        header += [f"phi_{i}", f"dphi_{i}"]
    has_ref = traj.references is not None
    if has_ref:
        header += ["ref_phi", "ref_dphi"]
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            for key, value in (metadata or {}).items():
                fh.write(f"# {key}={value}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            times = traj.times
            for k in range(len(traj.states)):
                u = _fmt(traj.inputs[k]) if k < len(traj.inputs) else ""
                row = [_fmt(times[k]), u] + [_fmt(v) for v in traj.states[k]]
                if has_ref:
                    row += [_fmt(v) for v in traj.references[k]]
                w.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc}") from exc
    return path


def read_trajectory_csv(path) -> tuple[Trajectory, dict]:
    path = Path(path)
    meta = {}
    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, value = ln[1:].strip().partition("=")
            meta[key] = value
        else:
            body.append(ln)
    reader = csv.reader(body)
    header = next(reader)
    for row in reader:
        rows.append(row)
    n = (len(header) - 2) // 2
    has_ref = header[-2:] == ["ref_phi", "ref_dphi"]
    if has_ref:
        n -= 1
    t = np.array([float(r[0]) for r in rows])
    u = np.array([float(r[1]) for r in rows if r[1] != ""])
    states = np.array([[float(v) for v in r[2 : 2 + 2 * n]] for r in rows])
    refs = np.array([[float(v) for v in r[2 + 2 * n :]] for r in rows]) if has_ref else None
    dt = float(t[1] - t[0]) if len(t) > 1 else 0.0
    return Trajectory(dt=dt, states=states, inputs=u, references=refs, metadata=meta), meta


def _write_matrix(fh, name: str, m: np.ndarray):
    m = np.atleast_2d(m)
    fh.write(f"{name} {m.shape[0]} {m.shape[1]}\n")
    for row in m:
        fh.write(" ".join(format(float(v), ".17g") for v in row) + "\n")


def write_predictor(pred: LiftedPredictor, path, metadata: Optional[dict] = None) -> Path:
    """Text artifact: a dimension header line, metadata lines, then row-major A, B, C blocks.

    Values use 17 significant digits so reading back is bit-exact.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"lifted_predictor n_pendulums={pred.n_pendulums} lifted_dim={pred.lifted_dim} "
                 f"outputs={pred.C.shape[0]} dt={pred.dt!r}\n")
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}={value}\n")
        _write_matrix(fh, "A", pred.A)
        _write_matrix(fh, "B", pred.B)
        _write_matrix(fh, "C", pred.C)
    return path


def read_predictor(path) -> tuple[LiftedPredictor, dict]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("lifted_predictor"):
        raise ConfigError(f"{path}: not a predictor artifact")
    head = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
    meta, mats = {}, {}
    i = 1
    while i < len(lines):
        ln = lines[i]
        if ln.startswith("#"):
            key, _, value = ln[1:].strip().partition("=")
            meta[key] = value
            i += 1
            continue
        name, rows, cols = ln.split()
        rows, cols = int(rows), int(cols)
        block = np.array([[float(v) for v in lines[i + 1 + r].split()] for r in range(rows)])
        if block.shape != (rows, cols):
            raise ConfigError(f"{path}: block {name} has shape {block.shape}, header says {(rows, cols)}")
        mats[name] = block
        i += 1 + rows
    missing = {"A", "B", "C"} - set(mats)
    if missing:
        raise ConfigError(f"{path}: missing blocks {sorted(missing)}")
    pred = LiftedPredictor(mats["A"], mats["B"], mats["C"], float(head["dt"]), int(head["n_pendulums"]))
    if pred.lifted_dim != int(head["lifted_dim"]):
        raise ConfigError(f"{path}: lifted_dim header does not match A")
    return pred, meta


def _report_value(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_report_value(x) for x in v)
    if isinstance(v, float):
        return format(v, ".9g")
    return str(v)


def write_report(report, path, metadata: Optional[dict] = None) -> Path:
    """``key = value`` lines; metadata first, then the synchronization metrics."""
    path = Path(path)
    entries = {"version": __version__}
    entries.update(metadata or {})
    entries.update(report.as_dict() if hasattr(report, "as_dict") else dict(report))
    entries["synchronized"] = bool(np.isfinite(entries.get("time_to_sync", np.inf)))
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {_report_value(value)}\n")
    return path


def read_report(path) -> dict:
    out = {}
    for ln in Path(path).read_text(encoding="utf-8").splitlines():
        key, sep, value = ln.partition(" = ")
        if sep:
            out[key] = value
    return out
