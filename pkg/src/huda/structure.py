"""Structural analysis of a combination: incidence matrices, strongly
connected components and block-lower-triangular (BLT) orderings.

Equation blocks are ``s_a``, ``s_b`` (the submodels) and ``c_a``, ``c_b``,
``c_z`` (the connection equations). Unknown blocks are the submodel outputs
``y_a``, ``y_b``, the submodel inputs ``u_a``, ``u_b`` and the combined output
``y_z``. Analysis runs at block granularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connect import ConnDims, ConnectionSet, TopologyTag, init_connections, mask_for_topology
from .errors import DimensionMismatch, UnbalancedSystem

EQUATIONS = ("s_a", "s_b", "c_a", "c_b", "c_z")
UNKNOWNS = ("y_a", "y_b", "u_a", "u_b", "y_z")
ASSIGN = {"s_a": "y_a", "s_b": "y_b", "c_a": "u_a", "c_b": "u_b", "c_z": "y_z"}
# tie-break among simultaneously schedulable blocks
PRIORITY = ("c_a", "s_a", "c_b", "s_b", "c_z")

_W_COLS = {"a": "y_a", "b": "y_b"}
_W_ROWS = {"a": "c_a", "b": "c_b", "z": "c_z"}


@dataclass(frozen=True)
class IncidenceMatrix:
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    row_sizes: dict
    col_sizes: dict
    data: np.ndarray
    assign: dict

    def _offsets(self, labels, sizes):
        out, off = {}, 0
        for lab in labels:
            out[lab] = (off, off + sizes[lab])
            off += sizes[lab]
        return out

    def block(self, eq: str, unknown: str) -> np.ndarray:
        r0, r1 = self._offsets(self.rows, self.row_sizes)[eq]
        c0, c1 = self._offsets(self.cols, self.col_sizes)[unknown]
        return self.data[r0:r1, c0:c1]

    def depends(self, eq: str, unknown: str) -> bool:
        return bool(self.block(eq, unknown).any())

    def permuted(self, rows, cols) -> "IncidenceMatrix":
        ro = self._offsets(self.rows, self.row_sizes)
        co = self._offsets(self.cols, self.col_sizes)
        ri = np.concatenate([np.arange(*ro[r]) for r in rows]).astype(int)
        ci = np.concatenate([np.arange(*co[c]) for c in cols]).astype(int)
        return IncidenceMatrix(tuple(rows), tuple(cols), self.row_sizes, self.col_sizes, self.data[np.ix_(ri, ci)], self.assign)

    def ascii(self) -> str:
        """Scalar-level rendering with labelled block borders."""
        width = max(len(c) for c in self.cols)
        head = " " * 5
        for c in self.cols:
            n = self.col_sizes[c]
            cell = c.center(max(n * 2 - 1, width))
            head += "|" + cell
        lines = [head]
        for r in self.rows:
            blocks = [self.block(r, c) for c in self.cols]
            for i in range(self.row_sizes[r]):
                label = r if i == 0 else ""
                line = f"{label:<5}"
                for c, b in zip(self.cols, blocks):
                    cells = " ".join("x" if v else "." for v in b[i])
                    line += "|" + cells.center(max(self.col_sizes[c] * 2 - 1, width))
                lines.append(line)
            if self.row_sizes[r] == 0:
                lines.append(f"{r:<5}(empty)")
        return "\n".join(lines)


@dataclass(frozen=True)
class BltOrder:
    steps: tuple[tuple[str, str], ...]
    ok = True

    @property
    def equations(self) -> tuple[str, ...]:
        return tuple(e for e, _ in self.steps)


@dataclass(frozen=True)
class LoopReport:
    loops: tuple[frozenset, ...]
    components: tuple[frozenset, ...]
    ok = False

    def __str__(self):
        return "; ".join("{" + ", ".join(sorted(l)) + "}" for l in self.loops)


def binarize(conn: ConnectionSet, structural: bool = False) -> dict[str, np.ndarray]:
    """Boolean pattern of the blocks acting on unknowns (the ``u_z`` column is
    dropped since ``u_z`` is known). With ``structural`` trainable entries
    count as nonzero regardless of their current value."""
    out = {}
    for r in "abz":
        for c in "ab":
            name = r + c
            pat = conn.blocks[name] != 0.0
            if structural:
                pat = pat | conn.trainable_entries(name)
            out[name] = pat
    return out


def assemble_incidence(D_a, D_b, conn: ConnectionSet, structural: bool = False) -> IncidenceMatrix:
    d = conn.dims
    D_a = np.asarray(D_a, dtype=bool)
    D_b = np.asarray(D_b, dtype=bool)
    if D_a.shape != (d.n_ga, d.n_ua):
        raise DimensionMismatch(f"D_a has shape {D_a.shape}, expected {(d.n_ga, d.n_ua)}")
    if D_b.shape != (d.n_gb, d.n_ub):
        raise DimensionMismatch(f"D_b has shape {D_b.shape}, expected {(d.n_gb, d.n_ub)}")
    row_sizes = {"s_a": d.n_ga, "s_b": d.n_gb, "c_a": d.n_ua, "c_b": d.n_ub, "c_z": d.n_gz}
    col_sizes = {"y_a": d.n_ga, "y_b": d.n_gb, "u_a": d.n_ua, "u_b": d.n_ub, "y_z": d.n_gz}
    grid = {(r, c): np.zeros((row_sizes[r], col_sizes[c]), dtype=bool) for r in EQUATIONS for c in UNKNOWNS}
    for eq, unk in ASSIGN.items():
        grid[eq, unk] = np.eye(row_sizes[eq], dtype=bool)
    grid["s_a", "u_a"] = D_a
    grid["s_b", "u_b"] = D_b
    for name, pat in binarize(conn, structural).items():
        grid[_W_ROWS[name[0]], _W_COLS[name[1]]] = pat
    data = np.block([[grid[r, c] for c in UNKNOWNS] for r in EQUATIONS]) if sum(row_sizes.values()) else np.zeros((0, 0), bool)
    return IncidenceMatrix(EQUATIONS, UNKNOWNS, row_sizes, col_sizes, data, dict(ASSIGN))


def _graph(inc: IncidenceMatrix):
    if inc.data.shape[0] != inc.data.shape[1]:
        raise UnbalancedSystem(f"{inc.data.shape[0]} equations for {inc.data.shape[1]} unknowns")
    solver_of = {}
    for eq in inc.rows:
        unk = inc.assign[eq]
        if inc.row_sizes[eq] != inc.col_sizes[unk]:
            raise UnbalancedSystem(f"{eq} has {inc.row_sizes[eq]} rows but {unk} has {inc.col_sizes[unk]} entries")
        solver_of[unk] = eq
    edges = {eq: [] for eq in inc.rows}
    self_loop = set()
    for eq in inc.rows:
        for unk in inc.cols:
            b = inc.block(eq, unk)
            if not b.any():
                continue
            dep = solver_of[unk]
            if dep == eq:
                if (b & ~np.eye(*b.shape, dtype=bool)).any():
                    self_loop.add(eq)
            else:
                edges[eq].append(dep)
    return edges, self_loop


def tarjan_scc(inc: IncidenceMatrix) -> list[frozenset]:
    """Strongly connected components of the block dependency graph.

    An edge ``E -> F`` means equation block ``E`` needs the unknown solved by
    ``F``; components come out dependencies first.
    """
    edges, _ = _graph(inc)
    index, low, on_stack = {}, {}, set()
    stack, out = [], []
    counter = [0]

    def visit(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        for w in edges[v]:
            if w not in index:
                visit(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = set()
            while True:
                w = stack.pop()
                on_stack.discard(w)
                comp.add(w)
                if w == v:
                    break
            out.append(frozenset(comp))

    for v in sorted(inc.rows, key=_prio):
        if v not in index:
            visit(v)
    return out


def _prio(label):
    return PRIORITY.index(label) if label in PRIORITY else len(PRIORITY)


def algebraic_loops(inc: IncidenceMatrix) -> list[frozenset]:
    _, self_loop = _graph(inc)
    return [c for c in tarjan_scc(inc) if len(c) > 1 or next(iter(c)) in self_loop]


def blt_sort(inc: IncidenceMatrix) -> BltOrder | LoopReport:
    """Causal evaluation order, or the loop components if none exists."""
    comps = tarjan_scc(inc)
    loops = algebraic_loops(inc)
    if loops:
        return LoopReport(tuple(loops), tuple(comps))
    edges, _ = _graph(inc)
    done, order = set(), []
    remaining = set(inc.rows)
    while remaining:
        ready = [e for e in remaining if all(d in done for d in edges[e])]
        e = min(ready, key=_prio)
        order.append((e, inc.assign[e]))
        done.add(e)
        remaining.discard(e)
    return BltOrder(tuple(order))


def schedule_is_causal(inc: IncidenceMatrix, order: BltOrder) -> bool:
    """Replay ``order`` and check that every dependency is solved in time."""
    edges, self_loop = _graph(inc)
    solved = set()
    for eq, _ in order.steps:
        if eq in self_loop or any(d not in solved for d in edges[eq]):
            return False
        solved.add(eq)
    return solved == set(inc.rows)


def loop_free(tag: TopologyTag) -> bool:
    """True iff the topology cannot form algebraic loops for any submodels."""
    occ = mask_for_topology(tag)
    return not occ["aa"] and not occ["bb"] and not (occ["ab"] and occ["ba"])


def worst_case_incidence(tag: TopologyTag, dims: ConnDims | None = None) -> IncidenceMatrix:
    """Incidence of ``tag`` with fully dense submodel dependencies."""
    dims = dims or ConnDims(4, 4, 4, 2, 4, 4)
    conn = init_connections(tag, dims)
    D_a = np.ones((dims.n_ga, dims.n_ua), dtype=bool)
    D_b = np.ones((dims.n_gb, dims.n_ub), dtype=bool)
    return assemble_incidence(D_a, D_b, conn, structural=True)
