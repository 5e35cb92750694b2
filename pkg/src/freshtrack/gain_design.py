"""Output-injection gain synthesis and convergence-envelope constants.

Spectral mode places distinct real closed-loop eigenvalues with a prescribed
spectral radius per block; deadbeat mode makes every closed-loop block
nilpotent so the observer converges in finitely many steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_sylvester

from .decomposition import TransformedSystem
from .system_model import default_rank_tol, numerical_rank, observability_matrix

DEADBEAT = "deadbeat"

_PLACEMENT_RETRIES = 8


class GainDesignError(ValueError):
    """Raised when a gain cannot be synthesized for a block pair."""


@dataclass(frozen=True)
class GainSet:
    """Per-block output-injection gains plus the targeted spectral radii.

    ``target_radii`` holds each block's radius in (0, 1), or the string
    ``"deadbeat"`` for nilpotent designs.  Blocks with dimension zero carry an
    empty gain.
    """

    gains: tuple
    target_radii: tuple

    @property
    def mode(self):
        return DEADBEAT if DEADBEAT in self.target_radii else "spectral"

    def gain(self, j):
        """Gain L_j for 1-indexed block j."""
        return self.gains[j - 1]

    def to_jsonable(self):
        return {
            "gains": [g.tolist() for g in self.gains],
            "target_radii": list(self.target_radii),
        }


@dataclass(frozen=True)
class BoundConstants:
    """Constants of the per-substate exponential error envelopes.

    For each block j: ||(A_jj - L_j C_jj)^k|| <= alpha[j] * radii[j]^k, and
    ||A_jj^k|| <= beta[j] * gamma[j]^k.  ``c`` and ``c_bar`` are the envelope
    amplitudes built recursively from coupling norms g and h; ``t_bar`` is the
    window constant (N-1)T.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    g: np.ndarray
    h: np.ndarray
    c: np.ndarray
    c_bar: np.ndarray
    radii: np.ndarray
    t_bar: int

    def to_jsonable(self):
        return {
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "g": self.g.tolist(),
            "h": self.h.tolist(),
            "c": self.c.tolist(),
            "c_bar": self.c_bar.tolist(),
            "radii": self.radii.tolist(),
            "t_bar": self.t_bar,
        }


def choose_radii(rho: float, n_blocks: int):
    """Strictly increasing per-block radii inside (rho/2, rho)."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    return [rho * (0.5 + j / (2.0 * (n_blocks + 1))) for j in range(1, n_blocks + 1)]


def _spectral_targets(rho_j: float, nj: int):
    # All targets positive, distinct, with exact maximum rho_j.
    return np.array([rho_j * (1.0 - (m - 1) / (2.0 * nj)) for m in range(1, nj + 1)])


def _check_observable(a, c):
    n = a.shape[0]
    if n >= 1 and (c.shape[0] == 0 or
                   numerical_rank(observability_matrix(a, c), default_rank_tol(n)) != n):
        raise GainDesignError("block pair is not observable; cannot place poles")


def _refine_placement(a, c, l0, targets):
    """Newton-polish a gain so eig(A - L C) lands on the sorted targets.

    Uses first-order eigenvalue sensitivities; returns (residual, gain) for
    the best iterate seen, where the residual also penalizes imaginary parts.
    """
    n, r = a.shape[0], c.shape[0]
    targets = np.sort(targets)
    l = l0
    best = (np.inf, l0)
    for _ in range(10):
        vals, vecs = np.linalg.eig(a - l @ c)
        try:
            left = np.linalg.inv(vecs)
        except np.linalg.LinAlgError:
            break
        order = np.argsort(vals.real)
        res = vals.real[order] - targets
        metric = np.max(np.abs(res)) + 1e6 * np.max(np.abs(vals.imag))
        if metric < best[0]:
            best = (metric, l.copy())
        if metric < 1e-10:
            break
        jac = np.zeros((n, n * r))
        for row, i in enumerate(order):
            jac[row] = -np.real(np.outer(left[i], c @ vecs[:, i])).ravel()
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        l = l + step.reshape(n, r)
    return best


def place_spectral(a_jj, c_jj, rho_j: float, seed: int = 0):
    """Gain L with eig(A - L C) real, distinct, and spectral radius rho_j.

    Uses eigenstructure assignment on the dual pair: solve the Sylvester
    equation A^T X - X D = C^T G for a seeded random G, then L = (G X^-1)^T,
    polished by a Newton pass on the eigenvalue residuals.  Keeps the best
    result over several random G's.
    """
    a = np.atleast_2d(np.asarray(a_jj, dtype=float))
    c = np.atleast_2d(np.asarray(c_jj, dtype=float))
    _check_observable(a, c)
    n, r = a.shape[0], c.shape[0]
    targets = _spectral_targets(rho_j, n)
    d = np.diag(targets)
    rng = np.random.default_rng(seed)
    best = (np.inf, None)
    for _ in range(_PLACEMENT_RETRIES):
        g = rng.standard_normal((r, n))
        try:
            x = solve_sylvester(a.T, -d, c.T @ g)
            l0 = (g @ np.linalg.inv(x)).T
        except Exception:
            continue
        if not np.all(np.isfinite(l0)):
            continue
        candidate = _refine_placement(a, c, l0, targets)
        if candidate[0] < best[0]:
            best = candidate
        if best[0] < 1e-10:
            break
    metric, l = best
    if l is None or metric > 1e-7 * max(1.0, rho_j):
        raise GainDesignError(
            f"spectral placement failed after {_PLACEMENT_RETRIES} retries "
            f"(best residual = {metric})")
    return l


def _ackermann_deadbeat(a, c_row):
    """Single-output deadbeat gain: L = A^n * O^-1 * e_n."""
    n = a.shape[0]
    obs = observability_matrix(a, c_row)
    e_n = np.zeros(n)
    e_n[-1] = 1.0
    x = np.linalg.solve(obs, e_n)
    return (np.linalg.matrix_power(a, n) @ x).reshape(n, 1)


def place_deadbeat(a_jj, c_jj, seed: int = 0):
    """Gain L making A - L C nilpotent.

    Single-output blocks use the observer-form Ackermann construction.  For
    multiple outputs, a seeded random output combination eta^T C drives a
    Kalman-decomposition deflation: the combination's observable part is
    dead-beaten via Ackermann, the unobservable remainder is handled
    recursively, and the block-triangular assembly stays nilpotent.
    """
    a = np.atleast_2d(np.asarray(a_jj, dtype=float))
    c = np.atleast_2d(np.asarray(c_jj, dtype=float))
    _check_observable(a, c)
    rng = np.random.default_rng(seed)
    return _deadbeat_recursive(a, c, rng)


def _deadbeat_recursive(a, c, rng):
    n, r = a.shape[0], c.shape[0]
    if n == 0:
        return np.zeros((0, r))
    tol = default_rank_tol(n)

    # Pick the output combination whose single-row pair sees the most of the
    # state; a random combination is generically maximal.
    best = None
    for _ in range(_PLACEMENT_RETRIES):
        eta = rng.standard_normal(r)
        row = (eta @ c).reshape(1, n)
        d = numerical_rank(observability_matrix(a, row), tol)
        if best is None or d > best[0]:
            best = (d, eta, row)
        if d == n:
            break
    d, eta, row = best
    if d == 0:
        raise GainDesignError("no output combination observes any direction")

    if d == n:
        return _ackermann_deadbeat(a, row) @ eta.reshape(1, r)

    # Kalman decomposition w.r.t. the combined row: observable part first.
    obs = observability_matrix(a, row)
    _, sv, vt = np.linalg.svd(obs)
    v_obs = vt[:d].T
    v_un = vt[d:].T
    t = np.hstack([v_obs, v_un])
    a_t = t.T @ a @ t
    c_t = c @ t
    a11 = a_t[:d, :d]
    row1 = (eta @ c_t[:, :d]).reshape(1, d)
    l1 = _ackermann_deadbeat(a11, row1) @ eta.reshape(1, r)
    l2 = _deadbeat_recursive(a_t[d:, d:], c_t[:, d:], rng)
    return t @ np.vstack([l1, l2])


def design_gains(ts: TransformedSystem, rho: float | None = None,
                 deadbeat: bool = False, seed: int = 0) -> GainSet:
    """Synthesize gains for every nonempty block of a transformed system."""
    n_blocks = ts.n_nodes
    gains = []
    radii = []
    if deadbeat:
        radii = [DEADBEAT] * n_blocks
    else:
        if rho is None:
            raise ValueError("rho is required for spectral gain design")
        radii = choose_radii(rho, n_blocks)
    for j in range(1, n_blocks + 1):
        nj = ts.block_dims[j - 1]
        rj = ts.c_bar[j - 1].shape[0]
        if nj == 0:
            gains.append(np.zeros((0, rj)))
            continue
        a_jj = ts.a_block(j, j)
        c_jj = ts.c_block(j, j)
        if deadbeat:
            gains.append(place_deadbeat(a_jj, c_jj, seed=seed + j))
        else:
            gains.append(place_spectral(a_jj, c_jj, radii[j - 1], seed=seed + j))
    return GainSet(gains=tuple(gains), target_radii=tuple(radii))


def closed_loop_block(ts: TransformedSystem, gains: GainSet, j: int):
    """A_jj - L_j C_jj for 1-indexed block j."""
    return ts.a_block(j, j) - gains.gain(j) @ ts.c_block(j, j)


def compute_bound_constants(ts: TransformedSystem, gains: GainSet, radii,
                            e0_source_norms, t_bar: int) -> BoundConstants:
    """Envelope constants for spectral-mode gains.

    ``e0_source_norms[j-1]`` is the measured norm of the source node's own
    substate-j error at that block's reference time: time 0 for j = 1, and
    time (2j-3)*t_bar for j >= 2.  Blocks of dimension zero contribute zero
    amplitudes and drop out of the recursion.
    """
    if gains.mode == DEADBEAT:
        raise ValueError("bound constants are defined for spectral-mode gains")
    n_blocks = ts.n_nodes
    n = ts.n
    radii = np.asarray(radii, dtype=float)
    k_cap = 4 * n + 4 * t_bar

    alpha = np.zeros(n_blocks)
    beta = np.zeros(n_blocks)
    gamma = np.zeros(n_blocks)
    g = np.zeros((n_blocks, n_blocks))
    h = np.zeros((n_blocks, n_blocks))
    for j in range(1, n_blocks + 1):
        nj = ts.block_dims[j - 1]
        if nj == 0:
            alpha[j - 1] = 1.0
            beta[j - 1] = 1.0
            gamma[j - 1] = 1.0
            continue
        cl = closed_loop_block(ts, gains, j)
        eigvals, eigvecs = np.linalg.eig(cl)
        if np.max(np.abs(eigvals.imag)) > 1e-8:
            raise GainDesignError(f"closed-loop block {j} has complex eigenvalues")
        alpha[j - 1] = np.linalg.cond(eigvecs)
        a_jj = ts.a_block(j, j)
        gamma[j - 1] = max(1.0, np.max(np.abs(np.linalg.eigvals(a_jj)))) * 1.01
        power = np.eye(nj)
        best = 0.0
        for k in range(k_cap + 1):
            best = max(best, np.linalg.norm(power, 2) / gamma[j - 1] ** k)
            power = a_jj @ power
        beta[j - 1] = best
        lj = gains.gain(j)
        for q in range(1, j):
            if ts.block_dims[q - 1] == 0:
                continue
            g[j - 1, q - 1] = np.linalg.norm(
                ts.a_block(j, q) - lj @ ts.c_block(j, q), 2)
            h[j - 1, q - 1] = np.linalg.norm(ts.a_block(j, q), 2)

    c = np.zeros(n_blocks)
    c_bar = np.zeros(n_blocks)
    for j in range(1, n_blocks + 1):
        if ts.block_dims[j - 1] == 0:
            continue
        rho_j = radii[j - 1]
        a_j = alpha[j - 1]
        ref_norm = float(e0_source_norms[j - 1])
        if j == 1:
            c[0] = a_j * ref_norm
            c_bar[0] = c[0] * beta[0] * (gamma[0] / rho_j) ** (2 * t_bar)
            continue
        ref_time = (2 * j - 3) * t_bar
        coupling = sum(
            g[j - 1, q - 1] * c_bar[q - 1] / (rho_j - radii[q - 1])
            * radii[q - 1] ** ref_time
            for q in range(1, j) if ts.block_dims[q - 1] > 0)
        c[j - 1] = a_j / rho_j ** ref_time * (ref_norm + coupling)
        tail = sum(
            h[j - 1, q - 1] * c_bar[q - 1] / (gamma[j - 1] - radii[q - 1])
            * (gamma[j - 1] / radii[q - 1]) ** (2 * t_bar)
            for q in range(1, j) if ts.block_dims[q - 1] > 0)
        c_bar[j - 1] = beta[j - 1] * (
            c[j - 1] * (gamma[j - 1] / rho_j) ** (2 * t_bar) + tail)

    return BoundConstants(alpha=alpha, beta=beta, gamma=gamma, g=g, h=h,
                          c=c, c_bar=c_bar, radii=radii, t_bar=t_bar)
