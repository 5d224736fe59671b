"""Exact discrete optimal transport solvers with dual potentials.

Three routes:

* ``solve_assignment``: uniform equal-size marginals.  Dense shortest
  augmenting path (Jonker-Volgenant style) in O(n^3) worst case; produces
  an optimal permutation together with feasible duals at zero gap.
* ``solve_general``: arbitrary discrete marginals via primal network
  simplex on the bipartite transportation graph (northwest-corner start,
  Dantzig pricing, Bland's rule after a stall budget of 10(m+n) degenerate
  pivots).
* ``brute_force``: permutation enumeration for n <= 9, the test oracle.

Every returned plan satisfies, and is checked for, marginal feasibility,
complementary slackness, dual feasibility, and strong duality.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numba import njit

from .costs import CostSpec, cost_matrix, eval_cost
from .errors import NumericalError, UsageError
from .measures import DiscreteMeasure

__all__ = [
    "TransportPlan",
    "solve_assignment",
    "solve_general",
    "brute_force",
    "plan_cost_under",
    "validate_plan",
]


@dataclass(frozen=True)
class TransportPlan:
    i: np.ndarray        # source indices of positive-mass entries
    j: np.ndarray        # target indices
    mass: np.ndarray     # masses, all > 0
    value: float
    dual_mu: np.ndarray  # one per source atom
    dual_nu: np.ndarray  # one per target atom
    method: str          # assignment | network_simplex | brute_force

    @property
    def entries(self):
        return list(zip(self.i.tolist(), self.j.tolist(), self.mass.tolist()))


# ---------------------------------------------------------------------------
# assignment: dense shortest augmenting path
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _jv(C):
    """Optimal assignment of the square cost matrix C.

    Returns (col4row, u, v) with u[i] + v[j] <= C[i, j] for all (i, j) and
    equality whenever j == col4row[i].  Ties in the Dijkstra scan resolve
    to the lowest column index (first strict improvement wins).
    """
    n = C.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, np.int64)
    row4col = np.full(n, -1, np.int64)
    shortest = np.empty(n)
    path = np.empty(n, np.int64)
    SR = np.empty(n, np.bool_)
    SC = np.empty(n, np.bool_)
    for cur_row in range(n):
        for j in range(n):
            shortest[j] = np.inf
            path[j] = -1
            SR[j] = False
            SC[j] = False
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            SR[i] = True
            lowest = np.inf
            index = -1
            for j in range(n):
                if not SC[j]:
                    r = min_val + C[i, j] - u[i] - v[j]
                    if r < shortest[j]:
                        shortest[j] = r
                        path[j] = i
                    if shortest[j] < lowest:
                        lowest = shortest[j]
                        index = j
            min_val = lowest
            if index == -1 or not np.isfinite(min_val):
                return col4row, u, v  # non-finite cost; caller validates
            j = index
            SC[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
        u[cur_row] += min_val
        for k in range(n):
            if SR[k] and k != cur_row:
                u[k] += min_val - shortest[col4row[k]]
        for j in range(n):
            if SC[j]:
                v[j] -= min_val - shortest[j]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur_row:
                break
    return col4row, u, v


def solve_assignment(X: np.ndarray, Y: np.ndarray, cost: CostSpec) -> TransportPlan:
    """Optimal coupling of two uniform empirical measures of equal size."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = X.shape[0]
    if Y.shape[0] != n:
        raise UsageError(f"assignment needs equal sizes, got {n} vs {Y.shape[0]}")
    if n < 1:
        raise UsageError("need at least one point")
    C = cost_matrix(cost, X, Y)
    col4row, u, v = _jv(C)
    if np.any(col4row < 0):
        raise NumericalError("assignment solver failed (non-finite cost?)")
    ii = np.arange(n)
    jj = col4row
    value = float(C[ii, jj].mean())
    # Shift-normalize: sum of target duals = 0 (duals are shift-ambiguous).
    a = float(v.mean())
    plan = TransportPlan(i=ii, j=jj, mass=np.full(n, 1.0 / n), value=value,
                         dual_mu=u + a, dual_nu=v - a, method="assignment")
    validate_plan(plan, C, np.full(n, 1.0 / n), np.full(n, 1.0 / n))
    return plan


# ---------------------------------------------------------------------------
# general marginals: transportation network simplex
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _net_simplex(C, a, b):
    """Primal network simplex on the dense bipartite transportation problem.

    Basis is a spanning tree of m + n - 1 arcs, started from the
    northwest-corner rule.  Pricing is Dantzig (most negative reduced
    cost); after 10 (m + n) consecutive degenerate pivots it switches to
    Bland's rule (first negative arc, smallest leaving index) for the
    anti-cycling guarantee.

    Returns (status, flow, bi, bj, u, v): status 0 ok, 1 pivot limit hit.
    """
    m, n = C.shape
    N = m + n
    B = N - 1
    bi = np.empty(B, np.int64)
    bj = np.empty(B, np.int64)
    flow = np.zeros(B)
    # --- northwest-corner start -------------------------------------------
    arem = a.copy()
    brem = b.copy()
    i = 0
    j = 0
    k = 0
    while True:
        bi[k] = i
        bj[k] = j
        t = arem[i] if arem[i] < brem[j] else brem[j]
        flow[k] = t
        arem[i] -= t
        brem[j] -= t
        k += 1
        if i == m - 1 and j == n - 1:
            break
        if i < m - 1 and arem[i] <= brem[j]:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    # --- simplex state -----------------------------------------------------
    u = np.zeros(m)
    v = np.zeros(n)
    parent = np.empty(N, np.int64)
    parent_arc = np.empty(N, np.int64)
    depth = np.empty(N, np.int64)
    order = np.empty(N, np.int64)
    adj_ptr = np.empty(N + 1, np.int64)
    adj_arc = np.empty(2 * B, np.int64)
    deg = np.empty(N, np.int64)
    cmax = 0.0
    for p in range(m):
        for q in range(n):
            cp = abs(C[p, q])
            if cp > cmax:
                cmax = cp
    tol = 1e-11 * (1.0 + cmax)
    stall_budget = 10 * N
    max_pivots = 500 * N + 10000
    stalled = 0
    bland = False
    pivots = 0
    cyc_aru = np.empty(N, np.int64)   # arcs on the two tree paths
    cyc_sgu = np.empty(N, np.int64)
    cyc_arw = np.empty(N, np.int64)
    cyc_sgw = np.empty(N, np.int64)
    while True:
        # -- duals and tree structure by BFS from node 0 --------------------
        for p in range(N):
            deg[p] = 0
        for k in range(B):
            deg[bi[k]] += 1
            deg[m + bj[k]] += 1
        adj_ptr[0] = 0
        for p in range(N):
            adj_ptr[p + 1] = adj_ptr[p] + deg[p]
            deg[p] = 0
        for k in range(B):
            p = bi[k]
            q = m + bj[k]
            adj_arc[adj_ptr[p] + deg[p]] = k
            deg[p] += 1
            adj_arc[adj_ptr[q] + deg[q]] = k
            deg[q] += 1
        for p in range(N):
            parent[p] = -2
        parent[0] = -1
        parent_arc[0] = -1
        depth[0] = 0
        u[0] = 0.0
        order[0] = 0
        head = 0
        tail = 1
        while head < tail:
            node = order[head]
            head += 1
            for t_ in range(adj_ptr[node], adj_ptr[node + 1]):
                k = adj_arc[t_]
                # arc k joins source node bi[k] and sink node m + bj[k]
                if node < m:
                    other = m + bj[k]
                else:
                    other = bi[k]
                if parent[other] == -2:
                    parent[other] = node
                    parent_arc[other] = k
                    depth[other] = depth[node] + 1
                    if other >= m:
                        v[other - m] = C[bi[k], bj[k]] - u[bi[k]]
                    else:
                        u[other] = C[bi[k], bj[k]] - v[bj[k]]
                    order[tail] = other
                    tail += 1
        # -- pricing --------------------------------------------------------
        ei = -1
        ej = -1
        best = -tol
        done = True
        for p in range(m):
            up = u[p]
            for q in range(n):
                rc = C[p, q] - up - v[q]
                if rc < best:
                    done = False
                    best = rc
                    ei = p
                    ej = q
                    if bland:
                        break
            if bland and ei >= 0:
                break
        if done:
            return 0, flow, bi, bj, u, v
        pivots += 1
        if pivots > max_pivots:
            return 1, flow, bi, bj, u, v
        # -- cycle: tree paths from both endpoints up to their LCA ----------
        s = ei
        w = m + ej
        nu_ = 0
        nw_ = 0
        # Signs: pushing theta along the entering arc (s -> w) makes the
        # first tree arc out of each endpoint a decreasing arc, then signs
        # alternate along each path.
        while depth[s] > depth[w]:
            cyc_aru[nu_] = parent_arc[s]
            cyc_sgu[nu_] = -1 if (nu_ % 2 == 0) else 1
            s = parent[s]
            nu_ += 1
        while depth[w] > depth[s]:
            cyc_arw[nw_] = parent_arc[w]
            cyc_sgw[nw_] = -1 if (nw_ % 2 == 0) else 1
            w = parent[w]
            nw_ += 1
        while s != w:
            cyc_aru[nu_] = parent_arc[s]
            cyc_sgu[nu_] = -1 if (nu_ % 2 == 0) else 1
            s = parent[s]
            nu_ += 1
            cyc_arw[nw_] = parent_arc[w]
            cyc_sgw[nw_] = -1 if (nw_ % 2 == 0) else 1
            w = parent[w]
            nw_ += 1
        # -- leaving arc: min flow among decreasing arcs --------------------
        theta = np.inf
        leave = -1
        for t_ in range(nw_ + nu_):
            if t_ < nw_:
                sg = cyc_sgw[t_]
                k = cyc_arw[t_]
            else:
                sg = cyc_sgu[t_ - nw_]
                k = cyc_aru[t_ - nw_]
            if sg == -1:
                if flow[k] < theta:
                    theta = flow[k]
                    leave = k
                elif flow[k] == theta and k < leave:
                    leave = k
        # -- pivot ----------------------------------------------------------
        for t_ in range(nw_):
            flow[cyc_arw[t_]] += cyc_sgw[t_] * theta
        for t_ in range(nu_):
            flow[cyc_aru[t_]] += cyc_sgu[t_] * theta
        bi[leave] = ei
        bj[leave] = ej
        flow[leave] = theta
        if theta <= 1e-15:
            stalled += 1
            if stalled > stall_budget:
                bland = True
        else:
            stalled = 0


def validate_plan(plan: TransportPlan, C: np.ndarray, a: np.ndarray,
                  b: np.ndarray) -> None:
    """Check marginals, complementary slackness, dual feasibility, and gap.

    Raises NumericalError on violation; called on every solver output.
    """
    m, n = C.shape
    row = np.zeros(m)
    col = np.zeros(n)
    np.add.at(row, plan.i, plan.mass)
    np.add.at(col, plan.j, plan.mass)
    if np.abs(row - a).max() > 1e-10 or np.abs(col - b).max() > 1e-10:
        raise NumericalError(
            f"plan marginals off by {max(np.abs(row - a).max(), np.abs(col - b).max()):.3g}")
    if plan.mass.min(initial=0.0) < 0:
        raise NumericalError("negative mass in plan")
    scale = 1.0 + abs(plan.value)
    cs = np.abs(plan.dual_mu[plan.i] + plan.dual_nu[plan.j] - C[plan.i, plan.j])
    if cs.size and cs.max() > 1e-8 * scale:
        raise NumericalError(f"complementary slackness violated by {cs.max():.3g}")
    feas = (plan.dual_mu[:, None] + plan.dual_nu[None, :] - C).max()
    if feas > 1e-9 * scale:
        raise NumericalError(f"dual feasibility violated by {feas:.3g}")
    gap = abs(plan.value - (a @ plan.dual_mu + b @ plan.dual_nu))
    if gap > 1e-8 * scale:
        raise NumericalError(f"duality gap {gap:.3g}")


def solve_general(mu: DiscreteMeasure, nu: DiscreteMeasure,
                  cost: CostSpec) -> TransportPlan:
    """Optimal coupling of two weighted discrete measures (network simplex)."""
    if abs(mu.weights.sum() - 1.0) > 1e-12 or abs(nu.weights.sum() - 1.0) > 1e-12:
        raise UsageError("marginal weights must each sum to 1")
    C = cost_matrix(cost, mu.points, nu.points)
    status, flow, bi, bj, u, v = _net_simplex(C, mu.weights.astype(float),
                                              nu.weights.astype(float))
    if status != 0:
        raise NumericalError(
            f"network simplex exceeded its pivot limit on a {mu.n}x{nu.n} "
            "instance (degenerate pivot cycle limit)")
    keep = flow > 0.0
    shift = float(v.mean())
    plan = TransportPlan(i=bi[keep], j=bj[keep], mass=flow[keep],
                         value=float((flow[keep] * C[bi[keep], bj[keep]]).sum()),
                         dual_mu=u + shift, dual_nu=v - shift,
                         method="network_simplex")
    validate_plan(plan, C, mu.weights, nu.weights)
    return plan


def brute_force(X: np.ndarray, Y: np.ndarray, cost: CostSpec) -> TransportPlan:
    """Exact minimum over all n! permutations (n <= 9); the value oracle.

    The optimal value and matching come from exhaustive enumeration; the
    dual potentials (not part of the oracle contract) are taken from the
    augmenting-path solver and cross-checked against the enumerated
    matching by the plan validator.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = X.shape[0]
    if Y.shape[0] != n:
        raise UsageError(f"brute_force needs equal sizes, got {n} vs {Y.shape[0]}")
    if n > 9:
        raise UsageError(f"brute_force is capped at n = 9, got n = {n}")
    C = cost_matrix(cost, X, Y)
    rows = np.arange(n)
    best_val = np.inf
    best_perm = rows
    for perm in itertools.permutations(range(n)):
        val = C[rows, perm].sum()
        if val < best_val:
            best_val = val
            best_perm = np.asarray(perm)
    col4row, u, v = _jv(C)
    shift = float(v.mean())
    plan = TransportPlan(i=rows, j=best_perm, mass=np.full(n, 1.0 / n),
                         value=float(best_val) / n,
                         dual_mu=u + shift, dual_nu=v - shift,
                         method="brute_force")
    validate_plan(plan, C, np.full(n, 1.0 / n), np.full(n, 1.0 / n))
    return plan


def plan_cost_under(plan: TransportPlan, X: np.ndarray, Y: np.ndarray,
                    alt_cost: CostSpec) -> float:
    """Evaluate a fixed coupling under another cost (no optimality claim)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if plan.i.max(initial=-1) >= X.shape[0] or plan.j.max(initial=-1) >= Y.shape[0]:
        raise UsageError("plan entry indexes out of range for the given points")
    return float((plan.mass * eval_cost(alt_cost, X[plan.i], Y[plan.j])).sum())
