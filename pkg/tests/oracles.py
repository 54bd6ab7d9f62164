"""Shared test oracles: forward-action BFS to a target depth.

The search is restricted to the gate-count-nonincreasing or structurally
necessary directions (all four templates forward, plus CX_REV reverse which
undoes a reversal).  Any path found here is a valid path in the full action
space, so a radius bound certifies reachability for the unrestricted agent.
"""

from __future__ import annotations

from qcopt.circuit import Circuit, depth, state_string
from qcopt.rewrite import REVERSE, Action, TemplateKind, apply, enumerate_actions


def _oracle_actions(c: Circuit) -> list[Action]:
    return [
        a
        for a in enumerate_actions(c)
        if a.direction != REVERSE or a.kind is TemplateKind.CX_REV
    ]


def bfs_optimize(
    start: Circuit, target_depth: int = 3, max_radius: int = 8
) -> tuple[int, Circuit, list[Action]] | None:
    """Shortest forward-action path to depth <= target_depth.

    Returns (number of actions, final circuit, action path), or None when no
    circuit within max_radius reaches the target.
    """
    if depth(start) <= target_depth:
        return 0, start, []
    start_key = state_string(start)
    parents: dict[str, tuple[str, Action]] = {}
    circuits = {start_key: start}
    frontier = [start]
    for radius in range(1, max_radius + 1):
        next_frontier = []
        for c in frontier:
            c_key = state_string(c)
            for a in _oracle_actions(c):
                nxt = apply(c, a)
                key = state_string(nxt)
                if key in circuits:
                    continue
                circuits[key] = nxt
                parents[key] = (c_key, a)
                if depth(nxt) <= target_depth:
                    path = []
                    k = key
                    while k != start_key:
                        k, act = parents[k]
                        path.append(act)
                    path.reverse()
                    return radius, nxt, path
                next_frontier.append(nxt)
        frontier = next_frontier
    return None
