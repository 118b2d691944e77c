"""Concrete models and data for the bouncing-ball experiments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import dual
from .compose import CombinedModel, combine
from .connect import ConnDims, TopologyTag, init_connections
from .errors import UnknownKind, UnknownScenario
from .ffnn import FfnnSpec, ffnn_forward, init_ffnn
from .model import EMPTY, Dims, HudaModel
from .solve import SolverOpts, integrate, read_trajectory_csv, trajectory_to_csv

TSPAN = (0.0, 2.1)
TRAIN_SCENARIOS = (1, 2, 3, 4)
TEST_SCENARIO = 5

# Scenarios 3 and 5 are listed with a fifth component; only the first four
# entries belong to the state.
SCENARIOS = {
    1: (-0.25, -6.0, 0.5, 8.0),
    2: (0.5, 8.0, -0.25, -6.0),
    3: (0.0, 0.0, 0.0, 4.0),
    4: (-0.75, 4.0, -0.5, 6.0),
    5: (-0.5, 2.0, 0.5, 2.0),
}

# a drop from rest with a single floor contact
EASY_X0 = (0.0, 0.0, 0.0, 0.0)
EASY_TSPAN = (0.0, 0.8)
# the discrete variants observe the system at their own sampling rate
EASY_SAMPLE_HZ = 10.0


@dataclass(frozen=True)
class BallConsts:
    g: float = 9.81
    r: float = 0.1
    d: float = 0.1
    mu: float = 0.15
    m: float = 1.0

    def __post_init__(self):
        if not 0 < self.r < 1:
            raise ValueError("radius must lie in (0, 1)")
        if not 0 <= self.d < 1:
            raise ValueError("dissipation must lie in [0, 1)")
        if self.mu < 0 or self.m <= 0:
            raise ValueError("friction must be >= 0 and mass > 0")


# ---- ball pieces shared by several models ---------------------------------------------


def wall_distances(s_x, s_y, r):
    return dual.stack([1.0 + s_x - r, 1.0 - s_x - r, 1.0 + s_y - r, 1.0 - s_y - r])


def wall_affect(x, q, consts: BallConsts):
    """Bounce ``x = [s_x, v_x, s_y, v_y]`` off every flagged wall."""
    r, keep = consts.r, 1.0 - consts.d
    s_x, v_x, s_y, v_y = x[0], x[1], x[2], x[3]
    if q[0] or q[1]:
        s_x = (-1.0 + r) if q[0] else (1.0 - r)
        v_x = -v_x * keep
    if q[2] or q[3]:
        s_y = (-1.0 + r) if q[2] else (1.0 - r)
        v_y = -v_y * keep
    return dual.stack([s_x, v_x, s_y, v_y])


class BallModel(HudaModel):
    """Two-dimensional bouncing ball in the box ``[-1, 1]^2``.

    State ``[s_x, v_x, s_y, v_y]``; with ``friction`` the accelerations gain
    the quadratic drag ``-v_i |v| mu / m``.
    """

    def __init__(self, consts: BallConsts | None = None, friction: bool = False, x0=(0.0, 0.0, 0.0, 0.0)):
        self.consts = consts or BallConsts()
        self.friction = friction
        self.name = "ground_truth" if friction else "fpm"
        self.dims = Dims(n_xc=4, n_xd=0, n_u=0, n_y=0, n_z=4, n_p=0)
        self.p0 = np.zeros(0)
        self.x_c0 = np.asarray(x0, dtype=float)
        self.x_d0 = np.zeros(0)
        inc = np.zeros((4, 4), dtype=bool)
        inc[0, 1] = inc[2, 3] = True
        if friction:
            inc[1, [1, 3]] = inc[3, [1, 3]] = True
        self.incidence = inc

    def f_c(self, x_c, x_d, u, p, t):
        g = self.consts.g
        v_x, v_y = x_c[1], x_c[3]
        if not self.friction:
            if isinstance(x_c, dual.Dual):
                return dual.stack([v_x, 0.0, v_y, -g])
            return np.array([v_x, 0.0, v_y, -g])
        k = np.sqrt(v_x * v_x + v_y * v_y) * (self.consts.mu / self.consts.m)
        return dual.stack([v_x, -v_x * k, v_y, -g - v_y * k])

    def c(self, x_c, x_d, u, p, t):
        return wall_distances(x_c[0], x_c[2], self.consts.r)

    def a(self, x_c, x_d, u, p, t, q):
        return wall_affect(x_c, q, self.consts), x_d


def build_fpm(consts: BallConsts | None = None) -> BallModel:
    return BallModel(consts, friction=False)


def build_ground_truth(consts: BallConsts | None = None) -> BallModel:
    return BallModel(consts, friction=True)


# ---- scenarios and data ---------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    id: int
    x0: np.ndarray
    role: str
    tspan: tuple = TSPAN


_OVERRIDES: dict[int, tuple] = {}


def load_scenarios(path) -> None:
    """Replace scenario start states from a JSON object ``{"1": [..4..], ...}``."""
    with open(path) as fh:
        doc = json.load(fh)
    new = {}
    for k, v in doc.items():
        x = tuple(float(e) for e in v)
        if len(x) != 4:
            raise ValueError(f"scenario {k} needs four entries")
        new[int(k)] = x
    _OVERRIDES.update(new)


def clear_scenario_overrides() -> None:
    _OVERRIDES.clear()


def scenario(s: int, consts: BallConsts | None = None) -> Scenario:
    table = {**SCENARIOS, **_OVERRIDES}
    if s not in table:
        raise UnknownScenario(f"unknown scenario {s!r}; expected one of {sorted(table)}")
    x0 = np.array(table[s], dtype=float)
    lim = 1.0 - (consts or BallConsts()).r
    if not np.all(np.isfinite(x0)) or abs(x0[0]) > lim or abs(x0[2]) > lim:
        raise ValueError(f"scenario {s} starts outside the box")
    return Scenario(s, x0, "test" if s == TEST_SCENARIO else "train")


@dataclass
class Dataset:
    t: np.ndarray
    x: np.ndarray
    x0: np.ndarray
    scenario: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def tspan(self):
        return (float(self.t[0]), float(self.t[-1]))

    def to_csv(self, path):
        from .solve import Trajectory
        from .model import SuperDenseTime

        tr = Trajectory(n_xc=self.x.shape[1], n_xd=0)
        for t, x in zip(self.t, self.x):
            tr.add(SuperDenseTime(float(t), 0), x)
        trajectory_to_csv(tr, path)

    @classmethod
    def from_csv(cls, path, scenario=None):
        t, _, x = read_trajectory_csv(path)
        return cls(t, x, x[0].copy(), scenario)


def sample_grid(tspan, sample_hz: float) -> np.ndarray:
    if sample_hz <= 0:
        raise ValueError("sample_hz must be positive")
    t0, tf = tspan
    n = int(np.floor((tf - t0) * sample_hz + 1e-9)) + 1
    return t0 + np.arange(n) / sample_hz


def generate_dataset(sc: Scenario | int, sample_hz: float = 50.0, rel_tol: float = 1e-9, abs_tol: float = 1e-12, consts=None, x0=None, tspan=None) -> Dataset:
    """Ground-truth samples on a uniform grid."""
    if not isinstance(sc, Scenario):
        sc = scenario(sc, consts)
    x0 = sc.x0 if x0 is None else np.asarray(x0, dtype=float)
    tspan = sc.tspan if tspan is None else tspan
    grid = sample_grid(tspan, sample_hz)
    opts = SolverOpts(rel_tol=rel_tol, abs_tol=abs_tol, dense_sampling=grid)
    tr = integrate(build_ground_truth(consts), x0, None, tspan, opts)
    x = tr.grid_values()
    x[0] = x0
    return Dataset(grid, x, x0.copy(), sc.id, {"sample_hz": sample_hz, "rel_tol": rel_tol})


def easy_dataset(sample_hz: float | None = None, consts=None) -> Dataset:
    """The drop-and-bounce trajectory, sampled by default at the RNN rate."""
    sample_hz = EASY_SAMPLE_HZ if sample_hz is None else sample_hz
    sc = Scenario(0, np.array(EASY_X0, dtype=float), "train", EASY_TSPAN)
    return generate_dataset(sc, sample_hz, consts=consts)


# ---- experiment model -----------------------------------------------------------------


class FfnnModel(HudaModel):
    """A feed-forward network as a pure algebraic model ``y = FFNN(u)``."""

    def __init__(self, spec: FfnnSpec | None = None, seed: int = 0):
        self.spec = spec or FfnnSpec()
        self.name = "ffnn"
        self.dims = Dims(n_xc=0, n_xd=0, n_u=self.spec.n_in, n_y=self.spec.n_out, n_z=0, n_p=self.spec.n_params)
        self.p0 = init_ffnn(self.spec, seed)
        self.x_c0 = np.zeros(0)
        self.x_d0 = np.zeros(0)

    def g(self, x_c, x_d, u, p, t):
        return ffnn_forward(self.spec, p, u)


def build_cm(topology: str | TopologyTag, seed: int = 1, noise_scale: float = 0.05, x0=None, train_bias: bool = False) -> CombinedModel:
    """Ball model plus network under ``topology``.

    The ball is wired through its state, the network through its input and
    output; the combined state is the ball state.
    """
    tag = topology if isinstance(topology, TopologyTag) else TopologyTag.parse(topology)
    fpm = build_fpm()
    net = FfnnModel(seed=seed)
    dims = ConnDims(n_ua=4, n_ga=4, n_ub=net.spec.n_in, n_gb=net.spec.n_out, n_uz=4, n_gz=4)
    conn = init_connections(tag, dims, noise_scale=noise_scale, seed=seed, train_bias=train_bias)
    return combine(fpm, net, conn, profile_a="state", profile_b="output", x_c0=x0, name=f"cm[{tag.label}]")


# ---- model variants with the common interface -------------------------------------------

KINDS = ("continuous", "discrete", "continuous+event", "discrete+event")
VARIANT_LAYERS = ((4, 32), (32, 4))
VARIANT_ACTS = ("tanh", "identity")
# fixed output gain so that unit-scale network outputs can express m/s^2
OUTPUT_SCALE = 10.0
RNN_RATE = 10.0


class NeuralOde(HudaModel):
    """``dx/dt = scale * FFNN(x)``, optionally with the ball wall events."""

    def __init__(self, events: bool, seed: int = 0, scale: float = OUTPUT_SCALE, consts=None, x0=EASY_X0):
        self.spec = FfnnSpec(VARIANT_LAYERS, VARIANT_ACTS)
        self.scale = scale
        self.events = events
        self.consts = consts or BallConsts()
        self.name = "neural_ode" + ("+event" if events else "")
        self.dims = Dims(n_xc=4, n_xd=0, n_u=0, n_y=4, n_z=4 if events else 0, n_p=self.spec.n_params)
        self.p0 = init_ffnn(self.spec, seed)
        self.x_c0 = np.asarray(x0, dtype=float)
        self.x_d0 = np.zeros(0)

    def f_c(self, x_c, x_d, u, p, t):
        return ffnn_forward(self.spec, p, x_c) * self.scale

    def g(self, x_c, x_d, u, p, t):
        return x_c

    def c(self, x_c, x_d, u, p, t):
        return wall_distances(x_c[0], x_c[2], self.consts.r) if self.events else EMPTY

    def a(self, x_c, x_d, u, p, t, q):
        return wall_affect(x_c, q, self.consts), x_d


class Rnn(HudaModel):
    """Residual recurrent update of a 4-vector at a fixed sample rate.

    Discrete state ``[h_1..h_4, k]``; the time indicator ``k / rate - t``
    fires at ``t = k / rate`` and the affect performs
    ``h <- h + scale * FFNN(h)``, ``k <- k + 1``. With ``events`` the ball
    walls act on ``h`` and are re-checked right after each update.
    """

    def __init__(self, events: bool, seed: int = 0, scale: float = 1.0, rate: float = RNN_RATE, consts=None, x0=EASY_X0):
        self.spec = FfnnSpec(VARIANT_LAYERS, VARIANT_ACTS)
        self.scale = scale
        self.rate = rate
        self.events = events
        self.consts = consts or BallConsts()
        self.name = "rnn" + ("+event" if events else "")
        self.dims = Dims(n_xc=0, n_xd=5, n_u=0, n_y=4, n_z=5 if events else 1, n_p=self.spec.n_params)
        self.p0 = init_ffnn(self.spec, seed)
        self.x_c0 = np.zeros(0)
        self.x_d0 = np.concatenate([np.asarray(x0, dtype=float), [1.0]])

    def g(self, x_c, x_d, u, p, t):
        return x_d[:4]

    def c(self, x_c, x_d, u, p, t):
        k = float(dual.value(x_d[4]))
        tick = dual.stack([k / self.rate - t])
        if not self.events:
            return tick
        return dual.concat([tick, wall_distances(x_d[0], x_d[2], self.consts.r)])

    def a(self, x_c, x_d, u, p, t, q):
        h = x_d[:4]
        k = x_d[4]
        if q[0]:
            h = h + ffnn_forward(self.spec, p, h) * self.scale
            k = k + 1.0
        if self.events and np.any(q[1:]):
            h = wall_affect(h, q[1:], self.consts)
        return x_c, dual.concat([h, dual.stack([k])])

    def split_events(self, q):
        # the sample update comes first; walls are re-detected on its result
        q = np.asarray(q)
        if q[0] and np.any(q[1:]):
            first = np.zeros_like(q)
            first[0] = 1
            return [("tick", first)]
        return [("tick" if q[0] else "wall", q)]


def build_variant(kind: str, seed: int = 0, x0=EASY_X0) -> HudaModel:
    if kind == "continuous":
        return NeuralOde(False, seed, x0=x0)
    if kind == "continuous+event":
        return NeuralOde(True, seed, x0=x0)
    if kind == "discrete":
        return Rnn(False, seed, x0=x0)
    if kind == "discrete+event":
        return Rnn(True, seed, x0=x0)
    raise UnknownKind(f"unknown model kind {kind!r}; expected one of {KINDS}")
