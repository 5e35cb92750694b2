"""The freshness-index distributed observer.

Each node keeps, per substate, an estimate and a freshness index: either the
distinguished OMEGA ("never informed") or the age, in rounds, of its
information relative to the substate's source node.  Rounds are strictly
synchronous: every right-hand-side quantity is a start-of-round snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OMEGA = None          # "infinite delay" marker for freshness indices
OPEN_LOOP = None      # donor marker when no informative neighbor exists


@dataclass
class NodeState:
    """Per-node observer state: one entry per nonempty substate.

    ``taus[j]`` is OMEGA or a nonnegative int; ``estimates[j]`` is the n_j
    estimate vector; ``last_donor[j]`` records the donor node id of the most
    recent round (OPEN_LOOP when the node ran open-loop), for lineage
    reconstruction only.
    """

    node_id: int
    taus: dict
    estimates: dict
    last_donor: dict = field(default_factory=dict)

    def snapshot(self):
        return NodeState(
            node_id=self.node_id,
            taus=dict(self.taus),
            estimates={j: z.copy() for j, z in self.estimates.items()},
            last_donor=dict(self.last_donor),
        )


def init_states(ts, initial_estimates=None):
    """Initial node states: the source's own index is 0, all others OMEGA.

    ``initial_estimates`` are per-node n-vectors in transformed coordinates
    (default all zeros); they are sliced into substates per the block layout.
    """
    n_nodes = ts.n_nodes
    if initial_estimates is None:
        initial_estimates = [np.zeros(ts.n) for _ in range(n_nodes)]
    states = []
    for i in range(1, n_nodes + 1):
        z0 = np.asarray(initial_estimates[i - 1], dtype=float)
        taus = {}
        estimates = {}
        for j in range(1, n_nodes + 1):
            if ts.block_dims[j - 1] == 0:
                continue
            taus[j] = 0 if i == j else OMEGA
            estimates[j] = z0[ts.block_slice(j)].copy()
        states.append(NodeState(node_id=i, taus=taus, estimates=estimates))
    return states


def source_step(j, state, y_j, ts, gains):
    """Source update for substate j; the source's index stays pinned at 0."""
    a_jj = ts.a_block(j, j)
    c_jj = ts.c_block(j, j)
    l_j = gains.gain(j)
    new = (a_jj - l_j @ c_jj) @ state.estimates[j]
    for q in range(1, j):
        if ts.block_dims[q - 1] == 0:
            continue
        new = new + (ts.a_block(j, q) - l_j @ ts.c_block(j, q)) @ state.estimates[q]
    new = new + l_j @ np.atleast_1d(y_j)
    return new


def select_donor(own_tau, neighbor_taus):
    """Donor choice among in-neighbors, given their freshness indices.

    ``neighbor_taus`` maps node id -> index.  A never-informed node takes the
    freshest informed neighbor; an informed node only accepts a strictly
    fresher one.  Ties break toward the smallest node id.
    """
    informed = {l: m for l, m in neighbor_taus.items() if m is not OMEGA}
    if own_tau is not OMEGA:
        informed = {l: m for l, m in informed.items() if m < own_tau}
    if not informed:
        return None
    return min(informed, key=lambda l: (informed[l], l))


def nonsource_step(j, state, donor, donor_estimate, ts):
    """Non-source update for substate j: adopt the donor or run open-loop.

    Cross-substate terms always use the node's own start-of-round estimates.
    Returns (new index, new estimate).
    """
    a_jj = ts.a_block(j, j)
    base = donor_estimate if donor is not None else state.estimates[j]
    new = a_jj @ base
    for q in range(1, j):
        if ts.block_dims[q - 1] == 0:
            continue
        new = new + ts.a_block(j, q) @ state.estimates[q]
    if donor is not None:
        return donor[1] + 1, new
    if state.taus[j] is OMEGA:
        return OMEGA, new
    return state.taus[j] + 1, new


def protocol_round(states, graph_k, measurements_k, ts, gains):
    """One synchronous round of the source and non-source update rules.

    ``measurements_k`` maps 1-indexed node id to its measurement at this round.
    All nodes read start-of-round snapshots; donor ids are recorded on the new
    states for lineage reconstruction.
    """
    snapshots = {s.node_id: s for s in states}
    new_states = []
    for state in states:
        i = state.node_id
        neighbors = graph_k.in_neighbors(i)
        new = state.snapshot()
        new.last_donor = {}
        for j in sorted(state.estimates):
            if i == j:
                new.taus[j] = 0
                new.estimates[j] = source_step(j, state, measurements_k[i], ts, gains)
                new.last_donor[j] = OPEN_LOOP
                continue
            neighbor_taus = {l: snapshots[l].taus[j] for l in neighbors}
            u = select_donor(state.taus[j], neighbor_taus)
            if u is None:
                tau, est = nonsource_step(j, state, None, None, ts)
                new.last_donor[j] = OPEN_LOOP
            else:
                tau, est = nonsource_step(
                    j, state, (u, snapshots[u].taus[j]), snapshots[u].estimates[j], ts)
                new.last_donor[j] = u
            new.taus[j] = tau
            new.estimates[j] = est
        new_states.append(new)
    return new_states


def check_delayed_form(trace, ts, j, k, i):
    """Residual of the delayed-error identity for node i, substate j, time k.

    A finite index tau means the estimate equals the source's estimate from
    tau rounds ago pushed through the substate dynamics, plus cross-substate
    feed-ins collected along the recorded donor lineage.  Returns the relative
    residual ||lhs - rhs|| / max(1, ||lhs||).
    """
    tau = trace.tau(k, i, j)
    if tau is OMEGA or tau == 0:
        return 0.0
    a_jj = ts.a_block(j, j)
    lhs = trace.estimate(k, i, j)
    rhs = np.linalg.matrix_power(a_jj, tau) @ trace.estimate(k - tau, j, j)

    # Walk the donor chain backwards: the node holding the lineage value at
    # time t+1 got it from its recorded donor during round t.
    node = i
    lineage = {}
    for t in range(k - 1, k - tau - 1, -1):
        lineage[t] = node
        donor = trace.donor(t, node, j)
        if donor is not OPEN_LOOP:
            node = donor
    if node != j:
        raise ValueError(
            f"lineage for node {i}, substate {j} at k={k} does not reach the source")

    for q in range(1, j):
        if ts.block_dims[q - 1] == 0:
            continue
        a_jq = ts.a_block(j, q)
        for t in range(k - tau, k):
            v = lineage[t]
            rhs = rhs + np.linalg.matrix_power(a_jj, k - t - 1) @ (
                a_jq @ trace.estimate(t, v, q))
    return float(np.linalg.norm(lhs - rhs) / max(1.0, np.linalg.norm(lhs)))
