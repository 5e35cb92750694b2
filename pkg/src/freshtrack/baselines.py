"""Naive consensus observers used to reproduce the divergence phenomenon.

Both strategies push neighbor estimates through a convex combination and then
the plant dynamics.  Oracle nodes are clamped to the true state each round,
isolating the diffusion instability from estimation error at the source.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_seq import Digraph


@dataclass(frozen=True)
class WeightStrategy:
    """Consensus weight rule: ``uniform`` or ``tree_rooted`` (with a root)."""

    kind: str
    root: int | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "tree_rooted"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "tree_rooted" and self.root is None:
            raise ValueError("tree_rooted strategy requires a root")


def _bfs_parents(g: Digraph, root: int):
    """Parent of each node in a BFS tree rooted at ``root``; smallest-id parents."""
    parents = {root: None}
    frontier = [root]
    while frontier:
        next_frontier = []
        for node in sorted(frontier):
            for child in g.out_neighbors(node):
                if child not in parents:
                    parents[child] = node
                    next_frontier.append(child)
        frontier = next_frontier
    return parents


def round_weights(g: Digraph, node: int, strategy: WeightStrategy):
    """Stochastic weight vector over in-neighbors and self for one round."""
    neighbors = g.in_neighbors(node)
    if strategy.kind == "uniform":
        pool = neighbors + [node]
        return {l: 1.0 / len(pool) for l in pool}
    parents = _bfs_parents(g, strategy.root)
    parent = parents.get(node)
    if node == strategy.root or parent is None:
        return {node: 1.0}
    return {parent: 1.0}


def baseline_round(estimates, graph_k, strategy, a_matrix, oracle_nodes, truth_k):
    """One consensus round: convex combination of neighbors, then the dynamics.

    ``estimates`` maps node id -> current estimate; oracle nodes are clamped
    to ``truth_k`` before mixing and again after the update.
    """
    a = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    current = {
        i: (np.asarray(truth_k, dtype=float) if i in oracle_nodes else est)
        for i, est in estimates.items()
    }
    new = {}
    for i in current:
        if i in oracle_nodes:
            new[i] = a @ np.asarray(truth_k, dtype=float)
            continue
        weights = round_weights(graph_k, i, strategy)
        mix = sum(w * current[l] for l, w in weights.items())
        new[i] = a @ mix
    return new


def detect_divergence(error_norms, threshold):
    """First time-step where the max-node error norm crosses the threshold.

    ``error_norms`` is a (horizon+1, n_nodes) array.  Returns None if the
    threshold is never reached.
    """
    maxed = np.max(np.asarray(error_norms), axis=1)
    hits = np.nonzero(maxed >= threshold)[0]
    return int(hits[0]) if hits.size else None
