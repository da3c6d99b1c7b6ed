"""Exhaustive ground-truth computations on small instances.

Everything here is exact (subject only to eigenvalue tolerance where noted),
deterministic, and witness-producing. Budgets guard runtime, they never trade
away exactness.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import BudgetExceeded, SolverFailure
from .lp_geometry import is_l2_isometric
from .metric_core import Graph, MetricSpace, from_graph, restrict


@dataclass(frozen=True)
class OracleBudget:
    max_nodes: int = 16
    max_subset_size: Optional[int] = None
    max_columns: Optional[int] = None
    time_cap: Optional[float] = None  # seconds

    def deadline(self) -> Optional[float]:
        return None if self.time_cap is None else time.monotonic() + self.time_cap


DEFAULT_BUDGET = OracleBudget()


def _check_deadline(deadline: Optional[float]) -> None:
    if deadline is not None and time.monotonic() > deadline:
        raise BudgetExceeded("time cap exhausted")


def min_vertex_cover(g: Graph, budget: OracleBudget = DEFAULT_BUDGET) -> tuple[int, tuple[int, ...]]:
    """Exact minimum vertex cover by subset enumeration in increasing size."""
    if g.n > budget.max_nodes:
        raise BudgetExceeded(f"{g.n} nodes exceeds max_nodes={budget.max_nodes}")
    if not g.edges:
        return 0, ()
    deadline = budget.deadline()
    for size in range(1, g.n + 1):
        for cand in combinations(range(g.n), size):
            _check_deadline(deadline)
            cset = set(cand)
            if all(u in cset or v in cset for u, v in g.edges):
                return size, tuple(cand)
    raise SolverFailure("unreachable: the full vertex set covers all edges")


def min_outlier_isometric_l2(m: MetricSpace, budget: OracleBudget = DEFAULT_BUDGET,
                             tol_eig: float = 1e-8) -> tuple[int, tuple[int, ...]]:
    """Smallest K such that the metric minus K embeds isometrically into l2.

    Enumerates candidate outlier sets in increasing size, lexicographic order,
    so the witness is the lexicographically first of minimum size.
    """
    if m.n > budget.max_nodes:
        raise BudgetExceeded(f"{m.n} nodes exceeds max_nodes={budget.max_nodes}")
    limit = m.n - 1 if budget.max_subset_size is None else min(budget.max_subset_size, m.n - 1)
    deadline = budget.deadline()
    for size in range(0, limit + 1):
        for cand in combinations(range(m.n), size):
            _check_deadline(deadline)
            sub, _ = restrict(m, cand)
            if is_l2_isometric(sub, tol_eig=tol_eig):
                return size, tuple(cand)
    raise BudgetExceeded(f"no outlier set of size <= {limit} found within budget")


def optimal_distortion_l2(m: MetricSpace, tol: float = 1e-3) -> float:
    """Smallest c (within tol) for which the outlier-free distortion-c SDP is
    feasible, by binary search over c.

    The bracket starts at [1, measured Bourgain distortion].
    """
    from .bourgain import BourgainParams, bourgain_embed  # local import: heavy neighbors
    from .outlier_sdp import SolveOpts, distortion_feasible

    if m.n < 2 or is_l2_isometric(m):
        return 1.0
    _, stats = bourgain_embed(m, BourgainParams(seed=0, p=2.0))
    hi = max(stats.distortion, 1.0 + 10 * tol)
    opts = SolveOpts()
    feasible_hi, _ = distortion_feasible(m, hi, opts)
    if not feasible_hi:
        hi *= 2.0
        feasible_hi, _ = distortion_feasible(m, hi, opts)
        if not feasible_hi:
            raise SolverFailure(f"feasibility solver rejected the bracket top c={hi:g}")
    lo = 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        ok, _ = distortion_feasible(m, mid, opts)
        if ok:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# hypercube embeddings at integer scale
# ---------------------------------------------------------------------------

def _column_cap(dist: np.ndarray, scale: int) -> tuple[int, int]:
    """(root, cap): root minimizing the total-ones bound scale * sum d(root, .).

    With the root row all zeros and no constant columns, every column carries
    at least one 1 and the total number of 1s is scale * sum d(root, .), so
    the search below the cap is complete.
    """
    sums = dist.sum(axis=1)
    root = int(np.argmin(sums))
    return root, int(round(scale * sums[root]))


def hypercube_embeddable(g: Graph, scale: int, budget: OracleBudget = DEFAULT_BUDGET
                         ) -> tuple[bool, Optional[np.ndarray]]:
    """Decide whether binary codewords exist whose Hamming distances equal
    scale times the graph distances; returns a witness codeword matrix if so.

    Backtracks node by node over column-pattern groups (columns with equal
    prefixes are interchangeable, which quotients away column order), with the
    first row normalized to all zeros. False with the default column budget is
    a complete refutation.
    """
    if scale < 1:
        raise ValueError("scale must be a positive integer")
    if g.n > budget.max_nodes:
        raise BudgetExceeded(f"{g.n} nodes exceeds max_nodes={budget.max_nodes}")
    metric = from_graph(g)
    dist = np.rint(metric.dist).astype(int)
    root, complete_cap = _column_cap(dist, scale)
    max_cols = complete_cap if budget.max_columns is None else min(budget.max_columns, complete_cap)
    order = [root] + [v for v in range(g.n) if v != root]
    targets = [[scale * int(dist[order[r], order[j]]) for j in range(r)] for r in range(g.n)]
    deadline = budget.deadline()

    def place_row(r: int, groups: dict[tuple[int, ...], int], used_cols: int) -> Optional[dict]:
        if r == g.n:
            return groups
        _check_deadline(deadline)
        req = targets[r]
        items = sorted(groups.items())

        def assign(gi: int, acc: list[int], chosen: list[int]) -> Optional[dict]:
            if gi == len(items):
                need = set(req[j] - acc[j] for j in range(r))
                if len(need) > 1:
                    return None
                y = need.pop() if need else 0
                if y < 0 or used_cols + y > max_cols:
                    return None
                new_groups: dict[tuple[int, ...], int] = {}
                for (pat, cnt), x in zip(items, chosen):
                    if cnt - x:
                        new_groups[pat + (0,)] = new_groups.get(pat + (0,), 0) + (cnt - x)
                    if x:
                        new_groups[pat + (1,)] = new_groups.get(pat + (1,), 0) + x
                if y:
                    fresh = (0,) * r + (1,)
                    new_groups[fresh] = new_groups.get(fresh, 0) + y
                return place_row(r + 1, new_groups, used_cols + y)
            pat, cnt = items[gi]
            rem_after = sum(c for _, c in items[gi + 1:]) + (max_cols - used_cols)
            for x in range(cnt + 1):
                nacc = list(acc)
                ok = True
                for j in range(r):
                    nacc[j] += x if pat[j] == 0 else cnt - x
                    if nacc[j] > req[j] or nacc[j] + rem_after < req[j]:
                        ok = False
                        break
                if not ok:
                    continue
                found = assign(gi + 1, nacc, chosen + [x])
                if found is not None:
                    return found
            return None

        return assign(0, [0] * r, [])

    solution = place_row(1, {}, 0)
    if solution is None:
        return False, None
    cols = []
    for pat, cnt in sorted(solution.items()):
        cols.extend([pat] * cnt)
    matrix = np.array(cols, dtype=int).T if cols else np.zeros((g.n, 0), dtype=int)
    witness = np.zeros((g.n, matrix.shape[1]), dtype=int)
    for r, v in enumerate(order):
        witness[v] = matrix[r]
    return True, witness


# ---------------------------------------------------------------------------
# Graham-Winkler theta relation
# ---------------------------------------------------------------------------

def dw_edge_classes(g: Graph) -> list[list[tuple[int, int]]]:
    """Equivalence classes of the transitive closure of the theta relation.

    Edges ab and cd are theta-related iff
    [d(a,c) - d(a,d)] - [d(b,c) - d(b,d)] != 0.
    """
    metric = from_graph(g)
    d = metric.dist
    edges = list(g.edges)
    parent = list(range(len(edges)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in combinations(range(len(edges)), 2):
        a, b = edges[i]
        c, e = edges[j]
        if (d[a, c] - d[a, e]) - (d[b, c] - d[b, e]) != 0:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

    classes: dict[int, list[tuple[int, int]]] = {}
    for i in range(len(edges)):
        classes.setdefault(find(i), []).append(edges[i])
    return [classes[r] for r in sorted(classes)]
