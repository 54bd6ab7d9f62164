"""Typed-node DAG view of a circuit, the autoencoder's input representation.

Every wire (plus one extra *fake* wire) is threaded input -> gate nodes ->
output.  A CNOT becomes a ctrl_op node on its control wire and a trgt_op node
on its target wire; the fake wire connects ctrl -> trgt within each CNOT and
chains consecutive CNOTs, which keeps predecessor and successor counts equal
on every gate node.  When a fake-wire edge would duplicate an existing edge
between the same node pair (consecutive CNOTs whose target and control share
a wire), a helper node is inserted on that fake edge so the DAG stays free of
parallel edges.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .circuit import Circuit


class NodeType(Enum):
    # values are the one-hot feature indices
    INPUT = 0
    OUTPUT = 1
    HADAMARD = 2
    CTRL_OP = 3
    TRGT_OP = 4
    HELPER = 5

    @property
    def label(self) -> str:
        return self.name.lower()


_TYPE_BY_LABEL = {t.label: t for t in NodeType}
N_NODE_TYPES = len(NodeType)


@dataclass(frozen=True, slots=True)
class CircuitDag:
    """Nodes are ids 0..n-1 with a type each; edges are ordered pairs.

    ``wire_of_edge`` labels each edge with its wire (real wires 0..n-1, fake
    wire n) when the DAG came from a circuit; structure-only DAGs produced by
    the decoder leave it empty.  ``order_hints`` carries (wire, program
    position) per node for deterministic topological tie-breaking.
    """

    types: tuple[NodeType, ...]
    edges: tuple[tuple[int, int], ...]
    wire_of_edge: dict = field(default_factory=dict)
    order_hints: tuple | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.types)

    def successors(self) -> list[list[int]]:
        out = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            out[u].append(v)
        return out

    def predecessors(self) -> list[list[int]]:
        out = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            out[v].append(u)
        return out

    def permuted(self, perm: list[int]) -> "CircuitDag":
        """Relabel node ids: node i becomes perm[i]."""
        n = self.n_nodes
        types = [NodeType.INPUT] * n
        hints = [None] * n if self.order_hints is not None else None
        for i, t in enumerate(self.types):
            types[perm[i]] = t
            if hints is not None:
                hints[perm[i]] = self.order_hints[i]
        edges = tuple(sorted((perm[u], perm[v]) for u, v in self.edges))
        wires = {(perm[u], perm[v]): w for (u, v), w in self.wire_of_edge.items()}
        return CircuitDag(
            tuple(types), edges, wires, tuple(hints) if hints is not None else None
        )


def to_dag(c: Circuit) -> CircuitDag:
    """Convert a circuit to its typed-node DAG (always passes validate)."""
    n = c.n_wires
    fake = n
    types: list[NodeType] = []
    hints: list[tuple[int, int]] = []
    edges: list[tuple[int, int]] = []
    wires: dict[tuple[int, int], int] = {}

    def add_node(t: NodeType, wire: int, pos: int) -> int:
        types.append(t)
        hints.append((wire, pos))
        return len(types) - 1

    def add_edge(u: int, v: int, wire: int):
        edges.append((u, v))
        wires[(u, v)] = wire

    last = [add_node(NodeType.INPUT, w, -1) for w in range(n + 1)]
    fake_last = last[fake]

    for pos, g in enumerate(c.gates):
        if g.is_cx:
            cq, tq = g.qubits
            if fake_last == last[cq]:
                # fake edge would parallel the real edge into the ctrl node
                helper = add_node(NodeType.HELPER, fake, pos)
                add_edge(fake_last, helper, fake)
                fake_last = helper
            ctrl = add_node(NodeType.CTRL_OP, cq, pos)
            add_edge(last[cq], ctrl, cq)
            add_edge(fake_last, ctrl, fake)
            trgt = add_node(NodeType.TRGT_OP, tq, pos)
            add_edge(last[tq], trgt, tq)
            add_edge(ctrl, trgt, fake)
            last[cq] = ctrl
            last[tq] = trgt
            fake_last = trgt
        else:
            q = g.qubits[0]
            node = add_node(NodeType.HADAMARD, q, pos)
            add_edge(last[q], node, q)
            last[q] = node

    last[fake] = fake_last
    for w in range(n + 1):
        out = add_node(NodeType.OUTPUT, w, len(c.gates))
        add_edge(last[w], out, w)

    return CircuitDag(tuple(types), tuple(edges), wires, tuple(hints))


def validate(d: CircuitDag) -> list[str]:
    """Check all structural invariants; an empty list means the DAG is valid."""
    violations: list[str] = []
    n = d.n_nodes
    indeg = [0] * n
    outdeg = [0] * n
    seen = set()
    for e in d.edges:
        u, v = e
        if not (0 <= u < n and 0 <= v < n):
            violations.append(f"edge {e} references unknown node")
            continue
        if e in seen:
            violations.append(f"parallel edge {e}")
        seen.add(e)
        outdeg[u] += 1
        indeg[v] += 1

    for i, t in enumerate(d.types):
        if t is NodeType.INPUT:
            if indeg[i] != 0 or outdeg[i] != 1:
                violations.append(
                    f"input node {i} has degree ({indeg[i]}, {outdeg[i]})"
                )
        elif t is NodeType.OUTPUT:
            if indeg[i] != 1 or outdeg[i] != 0:
                violations.append(
                    f"output node {i} has degree ({indeg[i]}, {outdeg[i]})"
                )
        elif indeg[i] != outdeg[i]:
            violations.append(f"degree imbalance at node {i} ({indeg[i]} != {outdeg[i]})")

    # Kahn sweep for acyclicity
    deg = list(indeg)
    succ = d.successors()
    stack = [i for i in range(n) if deg[i] == 0]
    visited = 0
    while stack:
        u = stack.pop()
        visited += 1
        for v in succ[u]:
            deg[v] -= 1
            if deg[v] == 0:
                stack.append(v)
    if visited != n:
        violations.append("cycle")

    if d.wire_of_edge:
        for e in d.edges:
            if e not in d.wire_of_edge:
                violations.append(f"edge {e} missing wire label")

    return violations


def topo_order(d: CircuitDag) -> list[int]:
    """Deterministic topological order.

    Ties are broken by the (wire, program position) node hints, compared
    position-first so that all inputs precede all outputs on the empty
    circuit; DAGs without hints fall back to node-id order.
    """
    n = d.n_nodes
    indeg = [0] * n
    succ = d.successors()
    for _, v in d.edges:
        indeg[v] += 1

    if d.order_hints is not None:
        key = lambda i: (d.order_hints[i][1], d.order_hints[i][0], i)
    else:
        key = lambda i: (i,)

    heap = [(key(i), i) for i in range(n) if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, u = heapq.heappop(heap)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, (key(v), v))
    if len(order) != n:
        raise ValueError("cycle detected in DAG")
    return order


def node_features(t: NodeType) -> np.ndarray:
    """One-hot feature vector of length 6 (fixed index assignment)."""
    v = np.zeros(N_NODE_TYPES)
    v[t.value] = 1.0
    return v


# --- isomorphism -----------------------------------------------------------


def _joint_refine(a: CircuitDag, b: CircuitDag, rounds: int):
    """Colour refinement on (colour, pred colours, succ colours), interned
    jointly so ids are comparable across the two DAGs."""
    pa, sa = a.predecessors(), a.successors()
    pb, sb = b.predecessors(), b.successors()
    ca = [t.value for t in a.types]
    cb = [t.value for t in b.types]

    def signature(colors, pred, succ, i):
        return (
            colors[i],
            tuple(sorted(colors[p] for p in pred[i])),
            tuple(sorted(colors[s] for s in succ[i])),
        )

    for _ in range(rounds):
        table: dict[tuple, int] = {}
        na = [
            table.setdefault(signature(ca, pa, sa, i), len(table))
            for i in range(a.n_nodes)
        ]
        nb = [
            table.setdefault(signature(cb, pb, sb, i), len(table))
            for i in range(b.n_nodes)
        ]
        if na == ca and nb == cb:
            break
        ca, cb = na, nb
    return ca, cb


def is_isomorphic(a: CircuitDag, b: CircuitDag) -> bool:
    """True iff a type- and edge-preserving bijection of node ids exists.

    Colour refinement prunes, exact backtracking decides; intended for the
    small DAGs of this artifact (<= ~60 nodes).  With equal edge counts it is
    enough to check that every a-edge maps onto a b-edge: node injectivity
    makes the induced edge map injective, so it is onto as well.
    """
    if a.n_nodes != b.n_nodes or len(a.edges) != len(b.edges):
        return False
    if sorted(t.value for t in a.types) != sorted(t.value for t in b.types):
        return False

    n = a.n_nodes
    ca, cb = _joint_refine(a, b, rounds=max(4, n))
    if sorted(ca) != sorted(cb):
        return False

    cand: dict[int, list[int]] = {}
    for j in range(n):
        cand.setdefault(cb[j], []).append(j)

    adj_a_out = [set(s) for s in a.successors()]
    adj_a_in = [set(s) for s in a.predecessors()]
    adj_b_out = [set(s) for s in b.successors()]
    adj_b_in = [set(s) for s in b.predecessors()]
    # most-constrained-first: rarest colour class, then high degree
    order = sorted(
        range(n),
        key=lambda i: (len(cand[ca[i]]), -(len(adj_a_out[i]) + len(adj_a_in[i]))),
    )

    mapping = [-1] * n
    used = [False] * n

    def extend(k: int) -> bool:
        if k == n:
            return True
        u = order[k]
        for v in cand[ca[u]]:
            if used[v]:
                continue
            ok = all(
                mapping[w] == -1 or mapping[w] in adj_b_out[v] for w in adj_a_out[u]
            ) and all(
                mapping[w] == -1 or mapping[w] in adj_b_in[v] for w in adj_a_in[u]
            )
            if ok:
                mapping[u] = v
                used[v] = True
                if extend(k + 1):
                    return True
                mapping[u] = -1
                used[v] = False
        return False

    return extend(0)


# --- debug export ----------------------------------------------------------


def dag_to_debug_text(d: CircuitDag) -> str:
    """`node <id> <type>` lines then `edge <src> <dst> <wire>` lines."""
    lines = [f"node {i} {t.label}" for i, t in enumerate(d.types)]
    for u, v in sorted(d.edges):
        lines.append(f"edge {u} {v} {d.wire_of_edge.get((u, v), -1)}")
    return "\n".join(lines) + "\n"


def dag_from_debug_text(text: str) -> CircuitDag:
    types: list[NodeType] = []
    edges: list[tuple[int, int]] = []
    wires: dict[tuple[int, int], int] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "node":
            idx, label = int(parts[1]), parts[2]
            if idx != len(types):
                raise ValueError(f"node ids must be dense and ordered, got {idx}")
            if label not in _TYPE_BY_LABEL:
                raise ValueError(f"unknown node type {label!r}")
            types.append(_TYPE_BY_LABEL[label])
        elif parts[0] == "edge":
            u, v, w = int(parts[1]), int(parts[2]), int(parts[3])
            edges.append((u, v))
            if w >= 0:
                wires[(u, v)] = w
        else:
            raise ValueError(f"unknown debug line {line!r}")
    return CircuitDag(tuple(types), tuple(edges), wires, None)
