"""Integer coalition selection: turn a target task-trait matrix into robots.

Phase ``strict`` minimizes ``||X Qn - Y||_F`` over assignments whose trait
totals cover the target entrywise; if none exists, phase ``fallback`` drops
the covering requirement and only keeps the robot-count limits.  Both phases
are solved exactly by depth-first branch-and-bound over the entries
``x[m, s]`` (task-major), children visited in order of their bound.

Bound for a partial assignment with residual ``R = Y - X Qn``: contributions
are nonnegative, so negative entries of ``R`` are locked in, and positive
entries can shrink by at most the trait mass the undecided robots could still
bring to that entry (per entry) or to that column (per trait).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from cmtab.problem import FEAS_TOL, Team, normalize

DEFAULT_NODE_BUDGET = 1_000_000
TIE_TOL = 1e-12
ORACLE_BUDGET = 1_000_000
SWEEPS = 4


@dataclass(frozen=True)
class SolveResult:
    X: np.ndarray
    residual: float
    phase: str  # "strict" | "fallback"
    nodes: int = 0
    approximate: bool = False


@njit(cache=True)
def _lex_less(A, B):
    M, S = A.shape
    for m in range(M):
        for s in range(S):
            if A[m, s] != B[m, s]:
                return A[m, s] < B[m, s]
    return False


@njit(cache=True)
def _child_bound(R, m, v, qrow, row_cap, later_cap, last_row, M, U, strict, tol):
    # Bound after fixing x[m, s] = v.  Row m of R is shifted by v*q on the fly.
    # row_cap[u]: mass still addable to row m (species after s);
    # later_cap[u]: mass addable to each later row (all remaining robots).
    total = 0.0
    for u in range(U):
        col_cap = row_cap[u] if last_row else later_cap[u]
        over = 0.0
        entry_def = 0.0
        deficit = 0.0
        n_def = 0
        for mm in range(m, M):
            r = R[mm, u]
            if mm == m:
                r -= v * qrow[u]
            if r < 0.0:
                over += r * r
            elif r > 0.0:
                deficit += r
                n_def += 1
                cap = row_cap[u] if mm == m else later_cap[u]
                if r > cap:
                    e = r - cap
                    if strict and e > tol:
                        return np.inf
                    entry_def += e * e
        col = 0.0
        if deficit > col_cap:
            if strict and deficit - col_cap > tol:
                return np.inf
            col = (deficit - col_cap) ** 2 / n_def
        total += over + (entry_def if entry_def > col else col)
    return total


@njit(cache=True)
def _row_relaxation(R, row, v, qrow, Qn, ub, s_from, sweeps):
    # Lower bound on min ||r - z Qn[s_from:]||^2 over 0 <= z <= ub, where r is
    # row `row` of R shifted by v*qrow.  Coordinate descent gives a feasible z;
    # convexity turns its Frank-Wolfe gap into a valid lower bound.
    S, U = Qn.shape
    res = np.empty(U)
    for u in range(U):
        res[u] = R[row, u] - v * qrow[u]
    z = np.zeros(S)
    for _ in range(sweeps):
        for t in range(s_from, S):
            if ub[t] <= 0:
                continue
            qq = 0.0
            qr = 0.0
            for u in range(U):
                qq += Qn[t, u] * Qn[t, u]
                qr += Qn[t, u] * res[u]
            if qq <= 0.0:
                continue
            znew = z[t] + qr / qq
            if znew < 0.0:
                znew = 0.0
            elif znew > ub[t]:
                znew = ub[t]
            dz = znew - z[t]
            if dz != 0.0:
                for u in range(U):
                    res[u] -= dz * Qn[t, u]
                z[t] = znew
    f = 0.0
    for u in range(U):
        f += res[u] * res[u]
    lb = f
    for t in range(s_from, S):
        g = 0.0
        for u in range(U):
            g -= 2.0 * Qn[t, u] * res[u]
        lb -= g * z[t]
        if g < 0.0:
            lb += g * ub[t]
    return lb if lb > 0.0 else 0.0


@njit(cache=True)
def _bnb(Qn, counts, Y, strict, node_budget, tol):
    S, U = Qn.shape
    M = Y.shape[0]
    K = S * M
    maxc = 0
    for s in range(S):
        if counts[s] > maxc:
            maxc = counts[s]
    nv = maxc + 1

    X = np.zeros((M, S), dtype=np.int64)
    R = Y.copy()
    rem = counts.copy()
    best = np.inf
    Xbest = np.zeros((M, S), dtype=np.int64)
    found = False
    # squared residual of rows already closed (exact)
    closed = np.zeros(M + 1)

    order = np.zeros((K, nv), dtype=np.int64)
    nchild = np.zeros(K, dtype=np.int64)
    ptr = np.zeros(K, dtype=np.int64)
    bounds = np.empty(nv)
    row_cap = np.empty(U)
    later_cap = np.empty(U)
    ub = np.empty(S)
    nodes = 0
    exhausted = False

    level = 0
    expand = True
    while True:
        if expand:
            nodes += 1
            if nodes > node_budget:
                exhausted = True
                break
            m = level // S
            s = level % S
            if s == 0:
                acc = 0.0
                if m > 0:
                    for u in range(U):
                        acc += R[m - 1, u] * R[m - 1, u]
                closed[m] = closed[m - 1] + acc if m > 0 else 0.0
            qrow = Qn[s]
            rs = rem[s]
            for u in range(U):
                a = 0.0
                for t in range(s + 1, S):
                    a += rem[t] * Qn[t, u]
                row_cap[u] = a
            last_row = m == M - 1
            cnt = 0
            for v in range(rs + 1):
                if not last_row:
                    for u in range(U):
                        a = 0.0
                        for t in range(S):
                            a += (rem[t] - v if t == s else rem[t]) * Qn[t, u]
                        later_cap[u] = a
                b = closed[m] + _child_bound(R, m, v, qrow, row_cap, later_cap,
                                             last_row, M, U, strict, tol)
                if b <= best + TIE_TOL and level < K - 1:
                    # tighten with per-row continuous relaxations
                    for t in range(S):
                        ub[t] = rem[t] - v if t == s else rem[t]
                    b2 = closed[m] + _row_relaxation(R, m, v, qrow, Qn, ub, s + 1, SWEEPS)
                    for mm in range(m + 1, M):
                        b2 += _row_relaxation(R, mm, 0, qrow, Qn, ub, 0, SWEEPS)
                    if b2 > b:
                        b = b2
                if b == np.inf or b > best + TIE_TOL:
                    continue
                if level == K - 1:
                    # leaf: the bound is the exact squared residual
                    X[m, s] = v
                    if b < best - TIE_TOL or not found or _lex_less(X, Xbest):
                        best = b
                        Xbest[:, :] = X
                        found = True
                    X[m, s] = 0
                    continue
                # insertion sort by bound, then by value
                j = cnt
                while j > 0 and bounds[j - 1] > b:
                    bounds[j] = bounds[j - 1]
                    order[level, j] = order[level, j - 1]
                    j -= 1
                bounds[j] = b
                order[level, j] = v
                cnt += 1
            nchild[level] = cnt if level < K - 1 else 0
            ptr[level] = 0
            expand = False

        # advance to the next untried child of `level`, backtracking as needed
        m = level // S
        s = level % S
        if ptr[level] > 0:
            v_prev = X[m, s]
            X[m, s] = 0
            rem[s] += v_prev
            for u in range(U):
                R[m, u] += v_prev * Qn[s, u]
        if ptr[level] < nchild[level]:
            v = order[level, ptr[level]]
            ptr[level] += 1
            X[m, s] = v
            rem[s] -= v
            for u in range(U):
                R[m, u] -= v * Qn[s, u]
            level += 1
            expand = True
        else:
            if level == 0:
                break
            level -= 1
    return found, best, Xbest, nodes, exhausted


def _prepare(Y_target, team: Team):
    Y = np.asarray(Y_target, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != team.n_traits:
        raise ValueError(f"target must be M x {team.n_traits}, got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("target has non-finite entries")
    return np.ascontiguousarray(Y), np.ascontiguousarray(team.normalized_traits)


def solve_allocation(Y_target, team: Team, node_budget: int = DEFAULT_NODE_BUDGET) -> SolveResult:
    """Closest deployable assignment to a normalized target ``Y_target``.

    Tries the covering (strict) phase first and falls back to the plain
    least-squares phase when no covering assignment exists.  Ties in residual
    go to the lexicographically smallest ``X`` (row-major).
    """
    Y, Qn = _prepare(Y_target, team)
    counts = np.ascontiguousarray(team.counts, dtype=np.int64)
    nodes_total = 0
    for strict, phase in ((True, "strict"), (False, "fallback")):
        found, best, X, nodes, exhausted = _bnb(Qn, counts, Y, strict, node_budget, FEAS_TOL)
        nodes_total += nodes
        if found:
            residual = float(np.linalg.norm(X @ Qn - Y))
            return SolveResult(X, residual, phase, nodes_total, bool(exhausted))
        if exhausted and strict:
            # Strict search ran out of budget without an incumbent; we cannot
            # tell infeasible from unexplored, so take the fallback optimum.
            continue
    # both searches ran dry before any incumbent: idle everyone (always valid)
    X = np.zeros((Y.shape[0], counts.shape[0]), dtype=np.int64)
    return SolveResult(X, float(np.linalg.norm(Y)), "fallback", nodes_total, True)


def _distributions(n: int, M: int) -> np.ndarray:
    """All ways to place at most ``n`` robots on ``M`` tasks, lexicographic."""
    rows = [c for c in itertools.product(range(n + 1), repeat=M) if sum(c) <= n]
    return np.array(rows, dtype=np.int64).reshape(-1, M)


def enumerate_assignments(team: Team, M: int, budget: int = ORACLE_BUDGET) -> np.ndarray:
    """Every valid ``M x S`` assignment, in row-major lexicographic order."""
    sizes = [math.comb(int(n) + M, M) for n in team.counts]
    total = math.prod(sizes)
    if total > budget:
        raise ValueError(f"{total} assignments exceed the enumeration budget {budget}")
    per_species = [_distributions(int(n), M) for n in team.counts]
    idx = np.array(list(itertools.product(*[range(k) for k in sizes])), dtype=np.int64)
    idx = idx.reshape(total, len(sizes))
    X = np.stack([per_species[s][idx[:, s]] for s in range(team.n_species)], axis=2)
    flat = X.reshape(total, -1)
    order = np.lexsort(flat.T[::-1])
    return X[order]


def exhaustive_oracle(Y_target, team: Team, budget: int = ORACLE_BUDGET) -> SolveResult:
    """Brute-force reference for :func:`solve_allocation` on tiny instances."""
    Y, Qn = _prepare(Y_target, team)
    Xs = enumerate_assignments(team, Y.shape[0], budget)
    achieved = Xs @ Qn
    sq = np.sum((achieved - Y) ** 2, axis=(1, 2))
    strict = np.all(achieved >= Y - FEAS_TOL, axis=(1, 2))
    if strict.any():
        phase, pool = "strict", np.flatnonzero(strict)
    else:
        phase, pool = "fallback", np.arange(len(Xs))
    best = sq[pool].min()
    # enumeration order is lexicographic, so the first tie wins
    winner = pool[np.flatnonzero(sq[pool] <= best + TIE_TOL)[0]]
    X = Xs[winner]
    return SolveResult(X, float(np.linalg.norm(X @ Qn - Y)), phase, len(Xs), False)


def achieved_for(X, team: Team) -> np.ndarray:
    return normalize(np.asarray(X) @ team.traits, team)
