"""Loss, optimiser, growing-horizon schedule and the shared training loop."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dual
from .errors import EmptyHorizon, HudaError, NonFiniteGradient, TrainingError
from .model import HudaModel
from .solve import SolverOpts, integrate

HORIZON_EPS = 1e-9


@dataclass(frozen=True)
class LossSpec:
    """Scaled mean absolute error on selected flat state channels."""

    channels: tuple[int, ...] = (0, 1, 2, 3)
    scales: tuple[float, ...] = (0.5, 0.1, 0.5, 0.1)

    def __post_init__(self):
        if len(self.channels) != len(self.scales):
            raise ValueError("one scale per channel required")
        if any(s <= 0 for s in self.scales):
            raise ValueError("scales must be positive")


def _mean_abs(diff, scales):
    """Mean of ``|scales * diff|`` over a 2-D (plain or dual) array."""
    n, c = diff.shape
    w = np.asarray(scales, dtype=float)
    a = np.abs(diff) * w
    return (np.ones(n) @ a @ np.ones(c)) / (n * c)


def horizon_mask(t, t0, horizon):
    return np.asarray(t) <= t0 + horizon + HORIZON_EPS


def mae_loss(traj, data, spec: LossSpec = LossSpec(), horizon: float | None = None):
    """MAE between the trajectory's grid samples and ``data`` within ``horizon``.

    The trajectory must have been computed with ``data.t`` (up to the horizon)
    as its dense sampling grid.
    """
    t0 = float(data.t[0])
    horizon = math.inf if horizon is None else horizon
    keep = horizon_mask(data.t, t0, horizon)
    n = int(keep.sum())
    if n == 0:
        raise EmptyHorizon(f"no data sample within horizon {horizon}")
    states = traj.grid_states[:n]
    if len(states) < n:
        raise EmptyHorizon(f"trajectory has {len(states)} grid samples, {n} required")
    X = dual.stack(states)
    ch = list(spec.channels)
    pred = X[:, ch]
    ref = np.asarray(data.x, dtype=float)[:n][:, ch]
    return _mean_abs(pred - ref, spec.scales)


def simulate_on_data(model: HudaModel, data, p=None, horizon=None, opts: SolverOpts | None = None, channels=(0, 1, 2, 3), x0=None):
    """Simulate ``model`` from the data's start state up to the last data time
    inside ``horizon``, sampling on the data grid."""
    t0 = float(data.t[0])
    horizon = math.inf if horizon is None else horizon
    grid = np.asarray(data.t)[horizon_mask(data.t, t0, horizon)]
    if grid.size == 0:
        raise EmptyHorizon(f"no data sample within horizon {horizon}")
    tf = float(grid[-1])
    if tf <= t0:
        tf = float(data.t[1]) if len(data.t) > 1 else t0 + 1e-3
    opts = replace(opts or SolverOpts(), dense_sampling=grid)
    x_init = initial_state(model, data.x0 if x0 is None else x0, channels)
    return integrate(model, x_init, model.p0 if p is None else p, (t0, tf), opts)


def initial_state(model: HudaModel, x0_data, channels=(0, 1, 2, 3)):
    """The model's default flat start state with the data start state placed
    on the compared channels."""
    x = np.array(model.x0, dtype=float)
    x[list(channels)] = np.asarray(x0_data, dtype=float)
    return x


def scenario_loss(model, data, p, spec: LossSpec, horizon, opts):
    tr = simulate_on_data(model, data, p, horizon, opts, spec.channels)
    return mae_loss(tr, data, spec, horizon)


# ---- Adam ----------------------------------------------------------------------------


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, params, grad):
        params = np.asarray(params, dtype=float)
        grad = np.asarray(grad, dtype=float)
        if grad.shape != params.shape:
            raise ValueError(f"gradient has shape {grad.shape}, parameters {params.shape}")
        bad = np.flatnonzero(~np.isfinite(grad))
        if bad.size:
            raise NonFiniteGradient(int(bad[0]))
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def growing_horizon_update(horizon, worst_mae, span, threshold=0.05, increment=0.01):
    """Lengthen the horizon by ``increment`` once the worst scenario fits."""
    if worst_mae < threshold:
        return min(span, horizon + increment)
    return horizon


# ---- training loop ---------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000
    seed: int = 1
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 10
    threshold: float = 0.05
    increment: float = 0.01
    initial_fraction: float = 0.05
    # keep extending within one check while the worst scenario stays below
    # the threshold on the lengthened horizon
    extend_repeatedly: bool = False
    rel_tol: float = 1e-6
    abs_tol: float = 1e-8
    loss: LossSpec = field(default_factory=LossSpec)
    chunk: int | None = None

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")

    def solver_opts(self) -> SolverOpts:
        return SolverOpts(rel_tol=self.rel_tol, abs_tol=self.abs_tol)


@dataclass
class TrainState:
    params: np.ndarray
    adam: Adam
    horizon: float
    step: int
    seed: int
    rng: np.random.Generator
    span: float

    def to_json(self) -> str:
        doc = {
            "params": self.params.tolist(),
            "adam": {
                "lr": self.adam.lr,
                "beta1": self.adam.beta1,
                "beta2": self.adam.beta2,
                "eps": self.adam.eps,
                "m": None if self.adam.m is None else self.adam.m.tolist(),
                "v": None if self.adam.v is None else self.adam.v.tolist(),
                "t": self.adam.t,
            },
            "horizon": self.horizon,
            "step": self.step,
            "seed": self.seed,
            "span": self.span,
            "rng": self.rng.bit_generator.state,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "TrainState":
        doc = json.loads(text)
        a = doc["adam"]
        adam = Adam(a["lr"], a["beta1"], a["beta2"], a["eps"], None if a["m"] is None else np.array(a["m"]), None if a["v"] is None else np.array(a["v"]), a["t"])
        rng = np.random.default_rng()
        rng.bit_generator.state = doc["rng"]
        return cls(np.array(doc["params"], dtype=float), adam, doc["horizon"], doc["step"], doc["seed"], rng, doc["span"])

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "TrainState":
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class HistoryRow:
    step: int
    scenario: int
    horizon: float
    loss: float


def init_state(model: HudaModel, datasets, config: TrainConfig) -> TrainState:
    span = max(float(d.t[-1] - d.t[0]) for d in datasets)
    adam = Adam(config.lr, config.beta1, config.beta2, config.eps)
    return TrainState(
        np.array(model.p0, dtype=float), adam, config.initial_fraction * span, 0, config.seed, np.random.default_rng(config.seed), span
    )


def worst_mae(model, datasets, params, config: TrainConfig, horizon) -> float:
    opts = config.solver_opts()
    return max(float(scenario_loss(model, d, params, config.loss, horizon, opts)) for d in datasets)


def train(model: HudaModel, datasets, config: TrainConfig = TrainConfig(), state: TrainState | None = None, callback=None):
    """Run ``config.steps`` optimisation steps; returns ``(state, history)``.

    Each step draws one dataset uniformly at random, differentiates the loss
    over the current horizon and applies Adam. Every ``eval_every`` steps the
    worst loss over all datasets decides whether the horizon grows.
    """
    datasets = list(datasets)
    if not datasets:
        raise ValueError("at least one dataset is required")
    state = state or init_state(model, datasets, config)
    opts = config.solver_opts()
    history: list[HistoryRow] = []
    stop = state.step + config.steps
    while state.step < stop:
        step = state.step
        try:
            i = int(state.rng.integers(len(datasets)))
            data = datasets[i]
            h = state.horizon
            grad, loss = dual.gradient(
                lambda p: scenario_loss(model, data, p, config.loss, h, opts), state.params, config.chunk, return_value=True
            )
            state.params = state.adam.step(state.params, grad)
            history.append(HistoryRow(step, data.scenario if data.scenario is not None else i, h, loss))
            state.step += 1
            if state.step % config.eval_every == 0:
                _grow(model, datasets, state, config)
        except HudaError as exc:
            if isinstance(exc, TrainingError):
                raise
            raise TrainingError(step, exc) from exc
        if callback is not None:
            callback(state, history[-1])
    return state, history


def _grow(model, datasets, state: TrainState, config: TrainConfig):
    while True:
        w = worst_mae(model, datasets, state.params, config, state.horizon)
        new = growing_horizon_update(state.horizon, w, state.span, config.threshold, config.increment)
        if new == state.horizon:
            return
        state.horizon = new
        if not config.extend_repeatedly or new >= state.span:
            return


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "scenario", "horizon", "loss"])
        for r in history:
            w.writerow([r.step, r.scenario, format(r.horizon, ".17g"), format(r.loss, ".17g")])


def read_history_csv(path) -> list[HistoryRow]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [HistoryRow(int(r["step"]), int(r["scenario"]), float(r["horizon"]), float(r["loss"])) for r in rows]


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
