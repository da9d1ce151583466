"""The three synchronization tasks end to end: data, identification, closed loop, metrics."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Literal, Optional

import numpy as np

from .baselines import (
    linearize,
    lqr_identification_policy,
    proportional_identification_policy,
)
from .edmd import LiftedPredictor, assemble, fit
from .integrator import SimConfig, Trajectory, simulate
from .kmpc import MpcController, MpcWeights, condense
from .model import ChainParams, CouplingStructure, equilibrium, relative_dissipation
from .reference import ReferenceTrajectory, constant_reference, periodic_reference

log = logging.getLogger(__name__)

TaskKind = Literal["stable_eq", "swing_up", "periodic"]
TASK_KINDS = ("stable_eq", "swing_up", "periodic")
TASK_ALIASES = {"stable": "stable_eq", "swing-up": "swing_up", "swingup": "swing_up", "unstable": "swing_up"}

# per-task defaults that differ from the common ones
_TASK_DEFAULTS = {
    "stable_eq": dict(n_traj=200, traj_len=1000, ident_ic_amplitude=1.0, ident_noise_std=float(np.sqrt(0.1)),
                      run_duration=10.0, run_ic_amplitude=0.5, epsilon=0.05),
    "swing_up": dict(n_traj=200, traj_len=200, ident_ic_amplitude=0.2, ident_noise_std=float(np.sqrt(0.1)),
                     run_duration=20.0, run_ic_amplitude=0.0, epsilon=0.1),
    "periodic": dict(n_traj=100, traj_len=1000, ident_ic_amplitude=0.5, ident_noise_std=0.1,
                     run_duration=20.0, run_ic_amplitude=0.0, epsilon=0.3, rate_weight=1.0, q_s=100.0),
}


@dataclass(frozen=True)
class TaskSpec:
    """Everything needed to reproduce one synchronization experiment.

    ``traj_len`` counts recorded samples per identification run, so each
    run contributes ``traj_len - 1`` snapshot pairs.  Angles of random
    initial conditions are uniform in ``+-amplitude`` around the task
    equilibrium (identification) or the origin (closed-loop run); rates
    start at zero.
    """

    kind: TaskKind = "stable_eq"
    n: int = 5
    seed: int = 1
    dt: float = 0.005
    substeps: int = 10
    # identification
    n_traj: int = 200
    traj_len: int = 1000
    ident_ic_amplitude: float = 1.0
    ident_noise_std: float = float(np.sqrt(0.1))
    ident_u_max: float = 0.1
    lqr_angle_weight: float = 1000.0
    lqr_rate_weight: float = 0.01
    lqr_r: float = 0.1
    k_p: float = 0.2
    ridge: float = 0.0
    # MPC
    horizon: int = 50
    r_weight: float = 0.1
    rate_weight: float = 0.01
    q_s: float = 0.0
    u_min: float = -0.1
    u_max: float = 0.1
    # closed-loop run
    run_duration: float = 10.0
    run_ic_amplitude: float = 0.5
    leader_x0: tuple = (0.0, 17.0)
    epsilon: float = 0.05
    sync_window: float = 1.0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.n_traj < 1 or self.traj_len < 2:
            raise ValueError("need n_traj >= 1 and traj_len >= 2 samples")
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be < u_max")

    @property
    def equilibrium_kind(self):
        return "unstable" if self.kind == "swing_up" else "stable"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["leader_x0"] = list(self.leader_x0)
        return d


def default_task(kind: str, n: int = 5, **overrides) -> TaskSpec:
    kind = TASK_ALIASES.get(kind, kind)
    if kind not in TASK_KINDS:
        raise ValueError(f"unknown task kind {kind!r}")
    values = dict(_TASK_DEFAULTS[kind])
    values.update(overrides)
    return TaskSpec(kind=kind, n=n, **values)


@dataclass
class SyncReport:
    """Synchronization quality of one closed-loop run.

    ``time_to_sync`` is ``inf`` when the angle errors never stay inside
    ``epsilon`` for the whole remainder of the run (at least ``sync_window``
    seconds).
    """

    epsilon: float
    terminal_angle_error: np.ndarray
    terminal_rate_error: np.ndarray
    time_to_sync: float
    dissipation_integral: float
    max_abs_input: float
    baseline_time_to_sync: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def synchronized(self) -> bool:
        return bool(np.isfinite(self.time_to_sync))

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "terminal_angle_error": [float(v) for v in self.terminal_angle_error],
            "terminal_rate_error": [float(v) for v in self.terminal_rate_error],
            "time_to_sync": float(self.time_to_sync),
            "dissipation_integral": self.dissipation_integral,
            "max_abs_input": self.max_abs_input,
            "baseline_time_to_sync": self.baseline_time_to_sync,
            **self.extra,
        }


def build_weights(task: TaskSpec, params: ChainParams, coupling: CouplingStructure) -> MpcWeights:
    """Output weights ``blkdiag(diag(10 i^3, rate_weight))``, plus the relative-dissipation
    penalty ``q_s * b/2 * (L kron diag(0, 1))`` for the periodic task; ``Q_N = Q``."""
    n = task.n
    ramp = 10.0 * np.arange(1, n + 1) ** 3
    Q = np.kron(np.diag(ramp), np.diag([1.0, 0.0])) + np.kron(np.eye(n), np.diag([0.0, task.rate_weight]))
    if task.kind == "periodic" and task.q_s:
        Q = Q + task.q_s * 0.5 * params.spring_damping * np.kron(coupling.laplacian, np.diag([0.0, 1.0]))
    return MpcWeights(Q=Q, Q_N=Q.copy(), R=task.r_weight, horizon=task.horizon, u_min=task.u_min, u_max=task.u_max)


def task_reference(task: TaskSpec, params: ChainParams, duration: float) -> ReferenceTrajectory:
    n_samples = int(round(duration / task.dt)) + 1
    if task.kind == "stable_eq":
        return constant_reference("stable_eq", n_samples, task.dt)
    if task.kind == "swing_up":
        return constant_reference("unstable_eq", n_samples, task.dt)
    return periodic_reference(task.leader_x0, duration, task.dt, params)


def _streams(task: TaskSpec):
    """Independent generators for identification and the closed-loop run."""
    ident, run = np.random.SeedSequence(task.seed).spawn(2)
    return np.random.default_rng(ident), np.random.default_rng(run)


def _random_ics(rng, count: int, n: int, amplitude: float, center: float) -> np.ndarray:
    x0 = np.zeros((count, 2 * n))
    x0[:, 0::2] = center + rng.uniform(-amplitude, amplitude, size=(count, n))
    return x0


def identification_policy(task: TaskSpec, params, coupling, seeds, reference=None):
    if task.kind == "periodic":
        return proportional_identification_policy(
            task.k_p, reference, task.ident_noise_std, seed=seeds, u_max=task.ident_u_max
        )
    lin = linearize(params, coupling, task.equilibrium_kind)
    Q = np.kron(np.eye(task.n), np.diag([task.lqr_angle_weight, task.lqr_rate_weight]))
    return lqr_identification_policy(
        lin, Q, np.array([[task.lqr_r]]), task.ident_noise_std, seed=seeds, u_max=task.ident_u_max
    )


def collect_identification_data(
    task: TaskSpec, params: ChainParams, coupling: CouplingStructure, max_retries: int = 5
) -> list[Trajectory]:
    """Closed-loop identification runs with recorded per-trajectory noise seeds.

    All runs are simulated as one vectorised batch; a run that blows up is
    replaced by a fresh run with a new seed.
    """
    rng, _ = _streams(task)
    cfg = SimConfig(control_dt=task.dt, substeps_per_control=task.substeps,
                    duration=(task.traj_len - 1) * task.dt, seed=task.seed)
    center = np.pi if task.kind == "swing_up" else 0.0
    reference = None
    if task.kind == "periodic":
        reference = periodic_reference(task.leader_x0, cfg.duration, task.dt, params)

    kept: list[Trajectory] = []
    dropped = 0
    needed = task.n_traj
    for attempt in range(max_retries + 1):
        seeds = [int(s) for s in rng.integers(0, 2**63 - 1, size=needed)]
        x0 = _random_ics(rng, needed, task.n, task.ident_ic_amplitude, center)
        policy = identification_policy(task, params, coupling, seeds, reference)
        refs = None if reference is None else reference.samples
        trajs = simulate(x0, policy, cfg, params, coupling, reference=refs,
                         metadata={"task": task.kind, "role": "identification", "input_clamp": task.ident_u_max})
        for tr, s in zip(trajs, seeds):
            tr.metadata["noise_seed"] = s
            if "error" in tr.metadata:
                dropped += 1
            else:
                kept.append(tr)
        needed = task.n_traj - len(kept)
        if needed == 0:
            break
    if needed:
        raise RuntimeError(f"could not collect {task.n_traj} identification runs ({dropped} blew up)")
    if dropped:
        log.info("regenerated %d identification runs after blow-up", dropped)
    for tr in kept:
        tr.metadata["dropped_runs"] = dropped
    return kept


def identify(task: TaskSpec, params: ChainParams, coupling: CouplingStructure,
             trajectories: Optional[list[Trajectory]] = None) -> LiftedPredictor:
    if trajectories is None:
        trajectories = collect_identification_data(task, params, coupling)
    pred = fit(assemble(trajectories), task.dt, ridge=task.ridge)
    pred.report["task"] = task.kind
    pred.report["seed"] = task.seed
    return pred


def run_initial_condition(task: TaskSpec) -> np.ndarray:
    if task.kind != "stable_eq" or task.run_ic_amplitude == 0:
        return np.zeros(2 * task.n)
    _, rng = _streams(task)
    return _random_ics(rng, 1, task.n, task.run_ic_amplitude, 0.0)[0]


def sync_metrics(
    traj: Trajectory,
    reference,
    epsilon: float,
    params: Optional[ChainParams] = None,
    window: float = 1.0,
) -> SyncReport:
    """Angle-error synchronization metrics against a single-pendulum reference.

    ``reference`` is a :class:`ReferenceTrajectory` or an array of
    ``[phi*, dphi*]`` rows aligned with ``traj.states``.
    """
    params = params or ChainParams()
    ref = reference.samples if hasattr(reference, "samples") else np.asarray(reference, dtype=float)
    ref = ref[: len(traj.states)]
    if len(ref) < len(traj.states):
        raise ValueError("reference shorter than trajectory")
    ang_err = np.abs(traj.angles - ref[:, [0]])
    rate_err = np.abs(traj.rates - ref[:, [1]])
    ok = np.all(ang_err < epsilon, axis=1)
    if ok.all():
        first = 0
    else:
        first = int(np.flatnonzero(~ok)[-1]) + 1
    span = (len(ok) - 1 - first) * traj.dt
    if first < len(ok) and (span >= window - 1e-12 or first == 0):
        t_sync = first * traj.dt
    else:
        t_sync = float("inf")
    diss = relative_dissipation(traj.states, params)
    return SyncReport(
        epsilon=epsilon,
        terminal_angle_error=ang_err[-1],
        terminal_rate_error=rate_err[-1],
        time_to_sync=float(t_sync),
        dissipation_integral=float(np.sum(diss[:-1]) * traj.dt),
        max_abs_input=float(np.max(np.abs(traj.inputs), initial=0.0)),
    )


def run_task(
    task: TaskSpec,
    params: ChainParams,
    coupling: CouplingStructure,
    predictor: Optional[LiftedPredictor] = None,
    with_baseline: Optional[bool] = None,
) -> tuple[Trajectory, SyncReport]:
    """Closed-loop KMPC run from the task's initial condition.

    The stable task also simulates ``u = 0`` from the same initial condition
    and records its time-to-sync as ``baseline_time_to_sync``.
    """
    if predictor is None:
        predictor = identify(task, params, coupling)
    weights = build_weights(task, params, coupling)
    prob = condense(predictor, weights)
    reference = task_reference(task, params, task.run_duration)
    controller = MpcController(prob, reference, dt=task.dt)
    cfg = SimConfig(control_dt=task.dt, substeps_per_control=task.substeps, duration=task.run_duration, seed=task.seed)
    x0 = run_initial_condition(task)
    start = time.perf_counter()
    traj = simulate(x0, controller, cfg, params, coupling, reference=reference.samples,
                    metadata={"task": task.kind, "role": "control"})
    wall = time.perf_counter() - start
    report = sync_metrics(traj, reference, task.epsilon, params, task.sync_window)
    iters = [s["iterations"] for s in controller.stats]
    report.extra.update(
        {
            "qp_iterations_mean": float(np.mean(iters)) if iters else 0.0,
            "qp_iterations_max": int(max(iters)) if iters else 0,
            "qp_unsolved": sum(s["status"] != "solved" for s in controller.stats),
        }
    )
    traj.metadata["qp_events"] = list(controller.events)
    traj.metadata["wall_time"] = wall
    if with_baseline is None:
        with_baseline = task.kind == "stable_eq"
    if with_baseline:
        base = simulate(x0, lambda t, x, r: 0.0, cfg, params, coupling, reference=reference.samples)
        report.baseline_time_to_sync = sync_metrics(base, reference, task.epsilon, params, task.sync_window).time_to_sync
    return traj, report


def with_seed(task: TaskSpec, seed: int) -> TaskSpec:
    return replace(task, seed=int(seed))
