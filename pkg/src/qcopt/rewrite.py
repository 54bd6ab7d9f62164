"""The four rewrite templates, applied forward (simplify) or in reverse (expand).

    HH      two Hadamards on one wire cancel
    CXCX    two identical CNOTs cancel
    CX_PAR  a CNOT moves up next to an earlier CNOT sharing its control
    CX_REV  CNOT(c,t) <-> H(c) H(t) CNOT(t,c) H(c) H(t)

Match enumeration over a circuit defines the RL action space.  Every action
is unitary-preserving; sites carry enough indices to re-apply the action, and
each action has a stable text key ``<KIND>.<fwd|rev>@<site>`` used by the
Q-table (sites render as ``i-j``, ``q:p``, ``all:p``, ``c-t:p`` or ``i``).
"""

from __future__ import annotations

from enum import Enum
from typing import NamedTuple

from .circuit import Circuit, Gate, GateKind

FORWARD = "fwd"
REVERSE = "rev"


class TemplateKind(Enum):
    HH = "HH"
    CXCX = "CXCX"
    CX_PAR = "CX_PAR"
    CX_REV = "CX_REV"


# Site variants, as tagged tuples:
#   ("pair", i, j)       gate-index pair (HH/CXCX forward, CX_PAR)
#   ("ins", q, p)        insert on wire q at gate-list position p (HH reverse)
#   ("all", p)           insert an H pair on every wire at position p
#   ("cxins", c, t, p)   insert a CNOT(c,t) pair at position p (CXCX reverse)
#   ("rev", i)           CNOT at gate index i (CX_REV)
Site = tuple


class Action(NamedTuple):
    kind: TemplateKind
    direction: str
    site: Site


class StaleSiteError(ValueError):
    """The site does not match the circuit it is being applied to."""


def _site_str(site: Site) -> str:
    tag = site[0]
    if tag == "pair":
        return f"{site[1]}-{site[2]}"
    if tag == "ins":
        return f"{site[1]}:{site[2]}"
    if tag == "all":
        return f"all:{site[1]}"
    if tag == "cxins":
        return f"{site[1]}-{site[2]}:{site[3]}"
    if tag == "rev":
        return str(site[1])
    raise ValueError(f"unknown site {site!r}")


def action_key(a: Action) -> str:
    return f"{a.kind.value}.{a.direction}@{_site_str(a.site)}"


def commutes(a: Gate, b: Gate) -> bool:
    """Sound commutation rule: disjoint supports, or CNOTs sharing only a control."""
    if a.is_cx and b.is_cx:
        if a.control == b.control and a.target != b.target:
            return True
        return a.target not in b.qubits and a.control not in b.qubits
    sa, sb = set(a.qubits), set(b.qubits)
    return not (sa & sb)


def _touches(g: Gate, wire: int) -> bool:
    return wire in g.qubits


# --- forward matches ---------------------------------------------------------


def _matches_hh_fwd(c: Circuit) -> list[Site]:
    # consecutive H pairs per wire <=> no intervening gate touches the wire
    sites = []
    last_h = [-1] * c.n_wires
    for i, g in enumerate(c.gates):
        if g.is_cx:
            last_h[g.control] = -1
            last_h[g.target] = -1
        else:
            q = g.qubits[0]
            if last_h[q] >= 0:
                sites.append(("pair", last_h[q], i))
            last_h[q] = i
    sites.sort()
    return sites


def _matches_cxcx_fwd(c: Circuit) -> list[Site]:
    sites = []
    gates = c.gates
    for i, g in enumerate(gates):
        if not g.is_cx:
            continue
        for j in range(i + 1, len(gates)):
            other = gates[j]
            if not (_touches(other, g.control) or _touches(other, g.target)):
                continue
            if other.is_cx and other.qubits == g.qubits:
                sites.append(("pair", i, j))
            break
    return sites


def _matches_cx_par(c: Circuit) -> list[Site]:
    # pairs (i, j), i < j, same control, distinct targets, where every gate
    # crossed when j moves to position i+1 commutes with gate j
    sites = []
    gates = c.gates
    for j, gj in enumerate(gates):
        if not gj.is_cx:
            continue
        for k in range(j - 1, -1, -1):
            gk = gates[k]
            if gk.is_cx and gk.control == gj.control and gk.target != gj.target:
                sites.append(("pair", k, j))
            if not commutes(gk, gj):
                break
    sites.sort(key=lambda s: (s[1], s[2]))
    return sites


def _matches_cx_rev_fwd(c: Circuit) -> list[Site]:
    return [("rev", i) for i, g in enumerate(c.gates) if g.is_cx]


# --- reverse matches ---------------------------------------------------------


def _insert_positions(c: Circuit, relevant: tuple[int, ...]) -> list[int]:
    # positions adjacent to gates touching any relevant wire, plus position 0
    pos = {0}
    for k, g in enumerate(c.gates):
        if any(_touches(g, w) for w in relevant):
            pos.add(k)
            pos.add(k + 1)
    return sorted(pos)


def _matches_hh_rev(c: Circuit) -> list[Site]:
    sites: list[Site] = []
    for q in range(c.n_wires):
        sites.extend(("ins", q, p) for p in _insert_positions(c, (q,)))
    sites.extend(("all", p) for p in range(len(c.gates) + 1))
    return sites


def _matches_cxcx_rev(c: Circuit) -> list[Site]:
    # duplicate an existing CNOT next to itself; on a CNOT-free circuit any
    # ordered wire pair may seed a pair at position 0 (keeps the inverse of
    # CXCX-forward available everywhere without exploding the action space)
    sites = set()
    for k, g in enumerate(c.gates):
        if g.is_cx:
            sites.add(("cxins", g.control, g.target, k))
            sites.add(("cxins", g.control, g.target, k + 1))
    if not sites:
        for ctrl in range(c.n_wires):
            for tgt in range(c.n_wires):
                if ctrl != tgt:
                    sites.add(("cxins", ctrl, tgt, 0))
    return sorted(sites)


def _matches_cx_rev_rev(c: Circuit) -> list[Site]:
    # No reverse matcher: a reversal is undone by matching CX_REV forward on
    # the flanked CNOT and cancelling the Hadamard pairs.  (A one-step undo
    # would also poison Q-learning with a reverse/unreverse oscillation that
    # shadows the productive cancellations.)  apply() still accepts the
    # explicit 5-gate unreversal pattern for callers that build it by hand.
    return []


_MATCHERS = {
    (TemplateKind.HH, FORWARD): _matches_hh_fwd,
    (TemplateKind.HH, REVERSE): _matches_hh_rev,
    (TemplateKind.CXCX, FORWARD): _matches_cxcx_fwd,
    (TemplateKind.CXCX, REVERSE): _matches_cxcx_rev,
    (TemplateKind.CX_PAR, FORWARD): _matches_cx_par,
    (TemplateKind.CX_REV, FORWARD): _matches_cx_rev_fwd,
    (TemplateKind.CX_REV, REVERSE): _matches_cx_rev_rev,
}


def find_matches(c: Circuit, kind: TemplateKind, direction: str) -> list[Site]:
    """All sites where the template applies, in deterministic order."""
    matcher = _MATCHERS.get((kind, direction))
    if matcher is None:
        raise ValueError(f"{kind.value} has no {direction} direction")
    return matcher(c)


# --- application -------------------------------------------------------------


def _check(cond: bool, why: str):
    if not cond:
        raise StaleSiteError(why)


def _segment_clear(gates, i, j, wires) -> bool:
    return not any(
        _touches(gates[k], w) for k in range(i + 1, j) for w in wires
    )


def apply(c: Circuit, a: Action) -> Circuit:
    """Apply one action; the result has exactly the same unitary.

    Raises StaleSiteError when the site does not fit the circuit (the action
    was enumerated on a different circuit).
    """
    gates = c.gates
    kind, direction, site = a

    if kind is TemplateKind.HH and direction == FORWARD:
        _, i, j = site
        _check(0 <= i < j < len(gates), "gate index out of range")
        gi, gj = gates[i], gates[j]
        _check(
            not gi.is_cx and not gj.is_cx and gi.qubits == gj.qubits,
            "site is not an H pair on one wire",
        )
        _check(_segment_clear(gates, i, j, gi.qubits), "a gate blocks the wire")
        return c.with_gates(gates[:i] + gates[i + 1 : j] + gates[j + 1 :])

    if kind is TemplateKind.HH and direction == REVERSE:
        if site[0] == "all":
            p = site[1]
            _check(0 <= p <= len(gates), "position out of range")
            layer = tuple(Gate.h(w) for w in range(c.n_wires))
            return c.with_gates(gates[:p] + layer + layer + gates[p:])
        _, q, p = site
        _check(0 <= q < c.n_wires and 0 <= p <= len(gates), "site out of range")
        return c.with_gates(gates[:p] + (Gate.h(q), Gate.h(q)) + gates[p:])

    if kind is TemplateKind.CXCX and direction == FORWARD:
        _, i, j = site
        _check(0 <= i < j < len(gates), "gate index out of range")
        gi, gj = gates[i], gates[j]
        _check(
            gi.is_cx and gj.is_cx and gi.qubits == gj.qubits,
            "site is not an identical CNOT pair",
        )
        _check(_segment_clear(gates, i, j, gi.qubits), "a gate blocks the wires")
        return c.with_gates(gates[:i] + gates[i + 1 : j] + gates[j + 1 :])

    if kind is TemplateKind.CXCX and direction == REVERSE:
        _, ctrl, tgt, p = site
        _check(
            0 <= ctrl < c.n_wires and 0 <= tgt < c.n_wires and ctrl != tgt,
            "bad wire pair",
        )
        _check(0 <= p <= len(gates), "position out of range")
        pair = (Gate.cx(ctrl, tgt), Gate.cx(ctrl, tgt))
        return c.with_gates(gates[:p] + pair + gates[p:])

    if kind is TemplateKind.CX_PAR and direction == FORWARD:
        _, i, j = site
        _check(0 <= i < j < len(gates), "gate index out of range")
        gi, gj = gates[i], gates[j]
        _check(
            gi.is_cx and gj.is_cx and gi.control == gj.control and gi.target != gj.target,
            "site is not a same-control CNOT pair",
        )
        _check(
            all(commutes(gates[k], gj) for k in range(i + 1, j)),
            "a crossed gate does not commute",
        )
        return c.with_gates(
            gates[: i + 1] + (gj,) + gates[i + 1 : j] + gates[j + 1 :]
        )

    if kind is TemplateKind.CX_REV and direction == FORWARD:
        _, i = site
        _check(0 <= i < len(gates) and gates[i].is_cx, "site is not a CNOT")
        cq, tq = gates[i].qubits
        block = (Gate.h(cq), Gate.h(tq), Gate.cx(tq, cq), Gate.h(cq), Gate.h(tq))
        return c.with_gates(gates[:i] + block + gates[i + 1 :])

    if kind is TemplateKind.CX_REV and direction == REVERSE:
        _, i = site
        _check(
            2 <= i < len(gates) - 2 and gates[i].is_cx, "no reversal pattern at site"
        )
        cq, tq = gates[i].target, gates[i].control
        flank = (Gate.h(cq), Gate.h(tq))
        _check(
            (gates[i - 2], gates[i - 1]) == flank
            and (gates[i + 1], gates[i + 2]) == flank,
            "no reversal pattern at site",
        )
        return c.with_gates(gates[: i - 2] + (Gate.cx(cq, tq),) + gates[i + 3 :])

    raise StaleSiteError(f"unsupported action {a!r}")


_ACTION_ORDER = [
    (TemplateKind.HH, FORWARD),
    (TemplateKind.HH, REVERSE),
    (TemplateKind.CXCX, FORWARD),
    (TemplateKind.CXCX, REVERSE),
    (TemplateKind.CX_PAR, FORWARD),
    (TemplateKind.CX_REV, FORWARD),
    (TemplateKind.CX_REV, REVERSE),
]


def gate_count_delta(a: Action, n_wires: int) -> int:
    """How many gates the action adds (negative for cancellations)."""
    kind, direction, site = a
    if direction == FORWARD:
        if kind in (TemplateKind.HH, TemplateKind.CXCX):
            return -2
        if kind is TemplateKind.CX_REV:
            return 4
        return 0
    if kind is TemplateKind.CX_REV:
        return -4
    if site[0] == "all":
        return 2 * n_wires
    return 2


def enumerate_actions(c: Circuit) -> list[Action]:
    """Union of all template matches, deterministic order, unique keys."""
    actions: list[Action] = []
    for kind, direction in _ACTION_ORDER:
        actions.extend(
            Action(kind, direction, s) for s in _MATCHERS[(kind, direction)](c)
        )
    return actions
