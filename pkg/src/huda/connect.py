"""Affine connection equations between two submodels.

The unknowns of a combination are the submodel inputs ``u_a``, ``u_b`` and the
combined output ``y_z``; they are tied to the submodel outputs ``y_a``, ``y_b``
and the combined input ``u_z`` by

    u_a = W_aa y_a + W_ab y_b + W_az u_z + b_a
    u_b = W_ba y_a + W_bb y_b + W_bz u_z + b_b
    y_z = W_za y_a + W_zb y_b + W_zz u_z + b_z

Each of the nine blocks is either structurally zero, frozen, or trainable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import dual
from .errors import DimensionMismatch

SIDES = ("a", "b", "z")
BLOCKS = tuple(r + c for r in SIDES for c in SIDES)
# blocks that may be nonzero in a topology built from P, S and D patterns
TOPOLOGY_BLOCKS = ("az", "ba", "bz", "za", "zb", "zz")

DEFAULT_NOISE = 0.05
DEFAULT_SEED = 1234


class Mask(str, Enum):
    ZERO = "zero"
    FROZEN = "frozen"
    TRAINABLE = "trainable"


@dataclass(frozen=True)
class TopologyTag:
    parallel: bool = False
    sequential: bool = False
    dft: bool = False
    case: str = "a"
    generic: bool = False

    def __post_init__(self):
        if self.case not in ("a", "b"):
            raise ValueError(f"case must be 'a' or 'b', got {self.case!r}")
        if not self.sequential and self.case != "a":
            # evaluation order is free without the sequential pattern
            object.__setattr__(self, "case", "a")

    @classmethod
    def parse(cls, text: str) -> "TopologyTag":
        s = text.strip()
        if s.lower() == "generic":
            return cls(generic=True)
        if s.lower() in ("none", "empty", ""):
            return cls()
        case = "a"
        suffix = s[-1] in "ab"
        if suffix:
            case, s = s[-1], s[:-1]
        letters = set(s.upper())
        if not letters <= set("PSD") or len(letters) != len(s):
            raise ValueError(f"cannot parse topology {text!r}")
        if suffix and "S" not in letters:
            raise ValueError(f"case suffix only applies to sequential topologies: {text!r}")
        return cls(parallel="P" in letters, sequential="S" in letters, dft="D" in letters, case=case)

    @property
    def label(self) -> str:
        if self.generic:
            return "generic"
        s = "P" * self.parallel + "S" * self.sequential + "D" * self.dft
        if not s:
            return "none"
        return s + self.case if self.sequential else s

    def __str__(self):
        return self.label


def _mirror(name: str) -> str:
    swap = {"a": "b", "b": "a", "z": "z"}
    return swap[name[0]] + swap[name[1]]


def mask_for_topology(tag: TopologyTag) -> dict[str, bool]:
    """Which of the nine blocks may be nonzero for ``tag``.

    Case b mirrors case a by exchanging the roles of the two submodels, so
    ``W_ab`` replaces ``W_ba`` and the parallel/serial input and output blocks
    swap sides accordingly.
    """
    occ = dict.fromkeys(BLOCKS, False)
    if tag.generic:
        return dict.fromkeys(BLOCKS, True)
    if tag.parallel:
        for k in ("az", "bz", "za", "zb"):
            occ[k] = True
    if tag.sequential:
        for k in ("az", "ba", "zb"):
            occ[k] = True
    if tag.dft:
        occ["zz"] = True
    if tag.case == "b":
        occ = {_mirror(k): v for k, v in occ.items()}
    return occ


def _identity_blocks(tag: TopologyTag) -> set[str]:
    """Blocks initialised as a noisy identity (the rest start as noisy zeros)."""
    ident = {"az", "ba", "za"}
    if not tag.parallel and not tag.generic:
        # serial-only chains route s_b straight to the output
        ident.add("zb")
    if tag.case == "b":
        ident = {_mirror(k) for k in ident}
    return ident


def rect_eye(rows: int, cols: int) -> np.ndarray:
    return np.eye(rows, cols)


@dataclass(frozen=True)
class ConnDims:
    """Sizes of the six signal vectors around a combination."""

    n_ua: int
    n_ga: int
    n_ub: int
    n_gb: int
    n_uz: int
    n_gz: int

    def row(self, side: str) -> int:
        return {"a": self.n_ua, "b": self.n_ub, "z": self.n_gz}[side]

    def col(self, side: str) -> int:
        return {"a": self.n_ga, "b": self.n_gb, "z": self.n_uz}[side]

    def shape(self, name: str) -> tuple[int, int]:
        return self.row(name[0]), self.col(name[1])

    @property
    def n(self) -> int:
        return self.n_ua + self.n_ub + self.n_gz

    @property
    def m(self) -> int:
        return self.n_ga + self.n_gb + self.n_uz


@dataclass(frozen=True)
class ConnectionSet:
    dims: ConnDims
    blocks: dict
    biases: dict
    mask: dict
    bias_mask: dict
    topology: TopologyTag = field(default_factory=TopologyTag)
    rng_seed: int | None = None
    # optional per-entry trainability inside TRAINABLE blocks (gates)
    entry_mask: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in BLOCKS:
            w = self.blocks[name]
            if w.shape != self.dims.shape(name):
                raise DimensionMismatch(f"W_{name} has shape {w.shape}, expected {self.dims.shape(name)}")
            if self.mask[name] == Mask.ZERO and np.any(w != 0.0):
                raise ValueError(f"W_{name} is masked zero but has nonzero entries")
        for side in SIDES:
            if self.biases[side].shape != (self.dims.row(side),):
                raise DimensionMismatch(f"b_{side} has wrong length")

    def W(self) -> np.ndarray:
        """The full ``n x m`` connection matrix."""
        return np.block([[self.blocks[r + c] for c in SIDES] for r in SIDES])

    def b(self) -> np.ndarray:
        return np.concatenate([self.biases[s] for s in SIDES])

    def trainable_entries(self, name: str) -> np.ndarray:
        shape = self.dims.shape(name)
        if self.mask[name] != Mask.TRAINABLE:
            return np.zeros(shape, dtype=bool)
        em = self.entry_mask.get(name)
        return np.ones(shape, dtype=bool) if em is None else np.asarray(em, dtype=bool)

    def nonzero_blocks(self) -> dict[str, bool]:
        return {k: self.mask[k] != Mask.ZERO and self.blocks[k].size > 0 for k in BLOCKS}

    def with_blocks(self, **blocks) -> "ConnectionSet":
        new = dict(self.blocks)
        for k, v in blocks.items():
            new[k] = np.asarray(v, dtype=float)
        return replace(self, blocks=new)

    def with_params(self, flat, layout: "Layout") -> "ConnectionSet":
        blocks, biases, _ = layout.unflatten(flat, self)
        return replace(
            self,
            blocks={k: np.asarray(v, dtype=float) for k, v in blocks.items()},
            biases={k: np.asarray(v, dtype=float) for k, v in biases.items()},
        )


def make_connections(dims: ConnDims, blocks=None, biases=None, mask=None, bias_mask=None, **kw) -> ConnectionSet:
    """Build a ConnectionSet; unspecified blocks are structural zeros."""
    blocks = dict(blocks or {})
    full = {}
    masks = {}
    for name in BLOCKS:
        if name in blocks:
            full[name] = np.asarray(blocks[name], dtype=float).reshape(dims.shape(name))
            masks[name] = Mask.FROZEN
        else:
            full[name] = np.zeros(dims.shape(name))
            masks[name] = Mask.ZERO
    masks.update({k: Mask(v) for k, v in (mask or {}).items()})
    b = {s: np.zeros(dims.row(s)) for s in SIDES}
    for s, v in (biases or {}).items():
        b[s] = np.asarray(v, dtype=float)
    bm = {s: (Mask.FROZEN if np.any(b[s]) else Mask.ZERO) for s in SIDES}
    bm.update({k: Mask(v) for k, v in (bias_mask or {}).items()})
    return ConnectionSet(dims, full, b, masks, bm, **kw)


def init_connections(
    tag: TopologyTag,
    dims: ConnDims,
    noise_scale: float = DEFAULT_NOISE,
    seed: int = DEFAULT_SEED,
    train_bias: bool = False,
) -> ConnectionSet:
    """Initial connections for a topology.

    Occupied blocks are trainable and start either as a (rectangular) identity
    or as zeros, plus uniform noise in ``[-noise_scale, noise_scale]``.
    Unoccupied blocks are exact static zeros; biases start at zero.
    """
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    occ = mask_for_topology(tag)
    ident = _identity_blocks(tag)
    rng = np.random.default_rng(seed)
    blocks, masks = {}, {}
    for name in BLOCKS:
        shape = dims.shape(name)
        if occ[name]:
            w = rect_eye(*shape) if name in ident else np.zeros(shape)
            if noise_scale > 0:
                w = w + rng.uniform(-noise_scale, noise_scale, size=shape)
            blocks[name] = w
            masks[name] = Mask.TRAINABLE
        else:
            blocks[name] = np.zeros(shape)
            masks[name] = Mask.ZERO
    biases = {s: np.zeros(dims.row(s)) for s in SIDES}
    bm = {s: (Mask.TRAINABLE if train_bias else Mask.ZERO) for s in SIDES}
    return ConnectionSet(dims, blocks, biases, masks, bm, topology=tag, rng_seed=seed)


def concat_wiring(n_ga: int, n_gb: int, n_gz: int | None = None) -> dict[str, np.ndarray]:
    """``W_za``/``W_zb`` stacking ``y_a`` above ``y_b`` in the combined output."""
    if n_gz is None:
        n_gz = n_ga + n_gb
    if n_gz != n_ga + n_gb:
        raise DimensionMismatch(f"|y_z| = {n_gz} but |y_a| + |y_b| = {n_ga + n_gb}")
    w_za = np.zeros((n_gz, n_ga))
    w_za[:n_ga, :] = np.eye(n_ga)
    w_zb = np.zeros((n_gz, n_gb))
    w_zb[n_ga:, :] = np.eye(n_gb)
    return {"za": w_za, "zb": w_zb}


# ---- evaluation -------------------------------------------------------------------


def _affine(blocks, bias, row, y_a, y_b, u_z, active):
    out = bias[row]
    for col, sig in (("a", y_a), ("b", y_b), ("z", u_z)):
        name = row + col
        if active[name]:
            out = out + blocks[name] @ sig
    return out


def _check_signals(conn, y_a, y_b, u_z):
    d = conn.dims
    for label, v, n in (("y_a", y_a, d.n_ga), ("y_b", y_b, d.n_gb), ("u_z", u_z, d.n_uz)):
        if len(v) != n:
            raise DimensionMismatch(f"{label} has length {len(v)}, expected {n}")


def apply_ca(conn: ConnectionSet, y_a, y_b, u_z):
    _check_signals(conn, y_a, y_b, u_z)
    return _affine(conn.blocks, conn.biases, "a", y_a, y_b, u_z, conn.nonzero_blocks())


def apply_cb(conn: ConnectionSet, y_a, y_b, u_z):
    _check_signals(conn, y_a, y_b, u_z)
    return _affine(conn.blocks, conn.biases, "b", y_a, y_b, u_z, conn.nonzero_blocks())


def apply_cz(conn: ConnectionSet, y_a, y_b, u_z):
    _check_signals(conn, y_a, y_b, u_z)
    return _affine(conn.blocks, conn.biases, "z", y_a, y_b, u_z, conn.nonzero_blocks())


# ---- parameter flattening -----------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    kind: str  # "W", "b" or "p"
    name: str
    start: int
    stop: int
    entries: np.ndarray | None = None  # boolean entry mask for W/b segments


@dataclass(frozen=True)
class Layout:
    segments: tuple[Segment, ...]
    size: int

    def segment(self, kind: str, name: str) -> Segment:
        for s in self.segments:
            if s.kind == kind and s.name == name:
                return s
        raise KeyError((kind, name))

    def unflatten(self, flat, conn: ConnectionSet):
        """Rebuild ``(blocks, biases, [p_0, p_1, ...])`` from a flat vector.

        Non-trainable entries come from ``conn``; ``flat`` may be a dual.
        """
        if len(flat) != self.size:
            raise DimensionMismatch(f"flat vector has length {len(flat)}, expected {self.size}")
        blocks = dict(conn.blocks)
        biases = dict(conn.biases)
        params = []
        for s in self.segments:
            chunk = flat[s.start : s.stop]
            if s.kind == "W":
                if s.entries.all():
                    blocks[s.name] = chunk.reshape(s.entries.shape)
                else:
                    blocks[s.name] = dual.scatter(conn.blocks[s.name], s.entries, chunk)
            elif s.kind == "b":
                biases[s.name] = chunk
            else:
                params.append(chunk)
        return blocks, biases, params


def flatten_params(conn: ConnectionSet, *submodel_params):
    """Flat trainable vector: W entries (block order, row-major), trainable
    biases, then each submodel parameter vector; plus its layout."""
    parts, segs = [], []
    off = 0
    for name in BLOCKS:
        em = conn.trainable_entries(name)
        n = int(em.sum())
        if n == 0:
            continue
        parts.append(conn.blocks[name][em])
        segs.append(Segment("W", name, off, off + n, em))
        off += n
    for side in SIDES:
        if conn.bias_mask[side] == Mask.TRAINABLE and conn.biases[side].size:
            n = conn.biases[side].size
            parts.append(conn.biases[side])
            segs.append(Segment("b", side, off, off + n, np.ones(n, dtype=bool)))
            off += n
    for i, p in enumerate(submodel_params):
        p = np.asarray(p, dtype=float)
        parts.append(p)
        segs.append(Segment("p", str(i), off, off + p.size))
        off += p.size
    flat = np.concatenate(parts) if parts else np.zeros(0)
    return flat, Layout(tuple(segs), off)


# ---- serialisation ------------------------------------------------------------------


def to_json(conn: ConnectionSet) -> str:
    doc = {
        "dims": vars(conn.dims),
        "topology": conn.topology.label,
        "rng_seed": conn.rng_seed,
        "blocks": {
            k: {"shape": list(v.shape), "entries": v.ravel().tolist(), "mask": conn.mask[k].value}
            for k, v in conn.blocks.items()
        },
        "biases": {k: {"entries": v.tolist(), "mask": conn.bias_mask[k].value} for k, v in conn.biases.items()},
        "entry_mask": {k: np.asarray(v, dtype=bool).ravel().tolist() for k, v in conn.entry_mask.items()},
    }
    return json.dumps(doc, indent=1)


def from_json(text: str) -> ConnectionSet:
    doc = json.loads(text)
    dims = ConnDims(**doc["dims"])
    blocks = {k: np.array(v["entries"], dtype=float).reshape(v["shape"]) for k, v in doc["blocks"].items()}
    masks = {k: Mask(v["mask"]) for k, v in doc["blocks"].items()}
    biases = {k: np.array(v["entries"], dtype=float) for k, v in doc["biases"].items()}
    bm = {k: Mask(v["mask"]) for k, v in doc["biases"].items()}
    em = {k: np.array(v, dtype=bool).reshape(dims.shape(k)) for k, v in doc.get("entry_mask", {}).items()}
    return ConnectionSet(
        dims, blocks, biases, masks, bm, topology=TopologyTag.parse(doc["topology"]), rng_seed=doc["rng_seed"], entry_mask=em
    )
