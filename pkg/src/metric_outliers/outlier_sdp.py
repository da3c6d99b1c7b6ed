"""The outlier SDP: build, solve, round, and the k-search loop.

Variables are a Gram matrix G (PSD) and outlier weights delta in [0,1]^n;
for every pair (x,y) with squared distance d2:

    (1 - dx - dy) * d2  <=  G_xx + G_yy - 2 G_xy  <=  (c^2 + (dx + dy) * f) * d2

minimizing sum(delta). The solver is a first-order splitting: damped
simultaneous corrections for the linear pair constraints, exact projection of
delta onto the box intersected with an objective level set, and projection of
G onto the PSD cone by eigendecomposition with negative eigenvalues clamped.
The objective is minimized by bisecting the level sum(delta) <= s, and the
returned delta is polished by a small LP (G held fixed), which snaps
unnecessary weights to exact zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .bourgain import BourgainParams, bourgain_embed
from .errors import Exhausted, GammaNotAboveOne, MissingZetaK, NumericalBreakdown
from .lp_geometry import PointSet, points_from_gram, sorted_eigh
from .metric_core import MetricSpace, distortion_stats, restrict
from .nested_composition import harmonic_number


# ---------------------------------------------------------------------------
# f(k) and the bicriteria bound
# ---------------------------------------------------------------------------

def weak_g(k: int) -> float:
    """Explicit envelope of the close-pair expected-expansion multiplier:
    g(k) = 190 * H_k + 1 (the c_S and c_X coefficients summed, plus one)."""
    return float(190 * harmonic_number(k) + 1)


def f_of_k(k: int, zeta: float, g_mode: str = "weak_factor",
           zeta_k: Optional[float] = None) -> float:
    """Pair-constraint relaxation coefficient f(k).

    weak_factor: (g(k) * zeta)^2 with zeta the outlier-free distortion.
    strong_subset: (382 * H_{k+1} * zeta_k)^2 with zeta_k the worst subset
    distortion at size k+1.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if zeta < 1.0 and g_mode == "weak_factor":
        raise ValueError(f"zeta must be >= 1, got {zeta}")
    if g_mode == "weak_factor":
        return (weak_g(k) * zeta) ** 2
    if g_mode == "strong_subset":
        if zeta_k is None:
            raise MissingZetaK("strong_subset mode requires zeta_k")
        return (382.0 * float(harmonic_number(k + 1)) * zeta_k) ** 2
    raise ValueError(f"unknown g_mode {g_mode!r}")


def bicriteria_bound(k: int, c: float, gamma: float, g_value: float, zeta: float) -> float:
    """Cap on the rounded outlier set size: 2 (g^2 zeta^2 / c^2 + gamma^2)
    / (gamma^2 - 1) * k."""
    _check_gamma(gamma)
    return 2.0 * ((g_value * zeta) ** 2 / c ** 2 + gamma ** 2) / (gamma ** 2 - 1.0) * k


def bicriteria_bound_eps(k: int, c: float, eps: float, g_value: float, zeta: float) -> float:
    """The gamma = 1 + eps form of the cap."""
    if eps <= 0:
        raise GammaNotAboveOne("eps must be positive")
    return bicriteria_bound(k, c, 1.0 + eps, g_value, zeta)


def _check_gamma(gamma: float) -> None:
    if not gamma > 1.0:
        raise GammaNotAboveOne(f"gamma must be strictly above 1, got {gamma}")


# ---------------------------------------------------------------------------
# instances and solutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SdpInstance:
    m: MetricSpace
    c: float
    f_k: float

    def __post_init__(self):
        if self.c < 1.0:
            raise ValueError(f"target distortion must be >= 1, got {self.c}")
        if self.f_k < 0.0:
            raise ValueError(f"f_k must be >= 0, got {self.f_k}")

    @property
    def num_pairs(self) -> int:
        return self.m.n * (self.m.n - 1) // 2

    @property
    def num_inequalities(self) -> int:
        return 2 * self.num_pairs


def build_instance(m: MetricSpace, c: float, f_k: float) -> SdpInstance:
    return SdpInstance(m=m, c=c, f_k=f_k)


@dataclass(frozen=True)
class SolveOpts:
    eps_feas: float = 1e-6   # relative to d^2 per pair constraint
    eps_obj: float = 1e-3
    max_iters: int = 50_000
    seed: int = 0


@dataclass(frozen=True)
class SdpSolution:
    instance: SdpInstance
    gram: np.ndarray
    delta: np.ndarray
    objective: float
    max_violation: float
    iterations: int
    feasible: bool


@dataclass(frozen=True)
class OutlierResult:
    outliers: tuple[int, ...]
    embedding: PointSet
    gamma: float
    achieved_distortion: float
    certified_bound: float
    metadata: dict = field(compare=False)


# ---------------------------------------------------------------------------
# feasibility core
# ---------------------------------------------------------------------------

class _Work:
    """Precomputed index arrays for one instance."""

    def __init__(self, inst: SdpInstance):
        n = inst.m.n
        self.n = n
        xs, ys = np.triu_indices(n, k=1)
        self.xs, self.ys = xs, ys
        self.d2 = inst.m.dist[xs, ys] ** 2
        self.c2 = inst.c ** 2
        self.f = inst.f_k
        self.low_norm2 = 4.0 + 2.0 * self.d2 ** 2
        self.up_norm2 = 4.0 + 2.0 * (self.f * self.d2) ** 2
        self.deg = max(n - 1, 1)

    def pair_r(self, g: np.ndarray) -> np.ndarray:
        diag = np.diag(g)
        return diag[self.xs] + diag[self.ys] - 2.0 * g[self.xs, self.ys]

    def violations(self, g: np.ndarray, delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        r = self.pair_r(g)
        sdel = delta[self.xs] + delta[self.ys]
        low_gap = (1.0 - sdel) * self.d2 - r
        up_gap = r - (self.c2 + sdel * self.f) * self.d2
        return low_gap, up_gap

    def residual(self, g: np.ndarray, delta: np.ndarray) -> float:
        low_gap, up_gap = self.violations(g, delta)
        rel = np.maximum(low_gap, up_gap) / self.d2
        return float(max(rel.max(initial=0.0), 0.0))


def _project_level_box(delta: np.ndarray, level: float) -> np.ndarray:
    """Projection onto {0 <= delta <= 1, sum(delta) <= level}."""
    out = np.clip(delta, 0.0, 1.0)
    if out.sum() <= level + 1e-15:
        return out
    lo_t, hi_t = 0.0, float(delta.max())
    for _ in range(60):
        theta = (lo_t + hi_t) / 2.0
        if np.clip(delta - theta, 0.0, 1.0).sum() > level:
            lo_t = theta
        else:
            hi_t = theta
    return np.clip(delta - hi_t, 0.0, 1.0)


def _psd_project(g: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((g + g.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    out = (vecs * vals) @ vecs.T
    return (out + out.T) / 2.0


def _probe(work: _Work, level: float, g0: np.ndarray, delta0: np.ndarray,
           opts: SolveOpts, iters_cap: int, pin_delta: bool = False,
           omega: float = 1.6) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Run the splitting iteration at a fixed objective level.

    Returns (G, delta, residual, iterations) for the best iterate seen.
    """
    n = work.n
    g = _psd_project(g0.copy())
    delta = np.zeros(n) if pin_delta else _project_level_box(delta0.copy(), level)
    best = (g.copy(), delta.copy(), work.residual(g, delta), 0)
    if best[2] <= opts.eps_feas:
        return best
    stall = 0
    milestone = best[2]
    for it in range(1, iters_cap + 1):
        low_gap, up_gap = work.violations(g, delta)
        wl = np.clip(low_gap, 0.0, None) / work.low_norm2
        wu = np.clip(up_gap, 0.0, None) / work.up_norm2
        net = wl - wu
        # G corrections: +w on both diagonal entries, -w on the off-diagonal pair
        diag_corr = np.zeros(n)
        np.add.at(diag_corr, work.xs, net)
        np.add.at(diag_corr, work.ys, net)
        g[work.xs, work.ys] -= omega * net
        g[work.ys, work.xs] -= omega * net
        g[np.diag_indices(n)] += omega * diag_corr / work.deg
        if not pin_delta:
            dd = wl * work.d2 + wu * work.f * work.d2
            delta_corr = np.zeros(n)
            np.add.at(delta_corr, work.xs, dd)
            np.add.at(delta_corr, work.ys, dd)
            delta = _project_level_box(delta + omega * delta_corr / work.deg, level)
        g = _psd_project(g)
        res = work.residual(g, delta)
        if res < best[2]:
            best = (g.copy(), delta.copy(), res, it)
            if res <= opts.eps_feas:
                return best
        # progress gate: require a 5% residual drop every 400 iterations, else
        # call the level infeasible (a conservative objective, never a wrong one)
        if res < milestone * 0.95:
            milestone = res
            stall = 0
        else:
            stall += 1
        if stall > 400 and best[2] > 5 * opts.eps_feas:
            break
    return best[0], best[1], best[2], iters_cap


def _lp_polish(work: _Work, g: np.ndarray, opts: SolveOpts) -> Optional[np.ndarray]:
    """Minimal-weight delta for a fixed Gram matrix: a tiny LP over the pair
    constraints delta_x + delta_y >= needed relaxation."""
    r = work.pair_r(g)
    need_low = 1.0 - r / work.d2
    if work.f > 0:
        need_up = (r / work.d2 - work.c2) / work.f
    else:
        need_up = np.where(r / work.d2 - work.c2 > opts.eps_feas, np.inf, -np.inf)
    need = np.maximum(np.maximum(need_low, need_up), 0.0)
    if np.isinf(need).any():
        return None
    mask = need > 0
    n = work.n
    if not mask.any():
        return np.zeros(n)
    rows = np.flatnonzero(mask)
    a_ub = np.zeros((len(rows), n))
    a_ub[np.arange(len(rows)), work.xs[rows]] = -1.0
    a_ub[np.arange(len(rows)), work.ys[rows]] = -1.0
    b_ub = -need[rows]
    res = linprog(c=np.ones(n), A_ub=a_ub, b_ub=b_ub, bounds=[(0.0, 1.0)] * n,
                  method="highs")
    if not res.success:
        return None
    out = np.clip(res.x, 0.0, 1.0)
    out[out == 0.0] = 0.0  # normalize any -0.0 from the LP
    return out


def _solution_from(inst: SdpInstance, work: _Work, g: np.ndarray, delta: np.ndarray,
                   iters: int, opts: SolveOpts) -> SdpSolution:
    polished = _lp_polish(work, g, opts)
    if polished is not None and work.residual(g, polished) <= opts.eps_feas \
            and polished.sum() <= delta.sum() + 1e-12:
        delta = polished
    res = work.residual(g, delta)
    return SdpSolution(
        instance=inst,
        gram=g,
        delta=delta,
        objective=float(delta.sum()),
        max_violation=res,
        iterations=iters,
        feasible=bool(res <= opts.eps_feas),
    )


def _initial_gram(m: MetricSpace) -> np.ndarray:
    """PSD-clamped centered Gram, rescaled so no pair contracts.

    Starting expanding means initial violations sit on the upper constraints,
    which the delta weights can absorb; that keeps the iteration out of the
    contracted basin where lower constraints must be bought back.
    """
    from .lp_geometry import centered_gram
    b = _psd_project(centered_gram(m))
    n = m.n
    if n < 2:
        return b
    xs, ys = np.triu_indices(n, k=1)
    diag = np.diag(b)
    r = diag[xs] + diag[ys] - 2.0 * b[xs, ys]
    ratio = r / (m.dist[xs, ys] ** 2)
    rmin = float(ratio.min())
    if rmin <= 1e-6:
        return b  # clamping collapsed a pair; scaling cannot fix that
    if rmin < 1.0:
        b = b / rmin
    return b


def _polished_sum(work: _Work, g: np.ndarray, delta: np.ndarray, opts: SolveOpts
                  ) -> tuple[np.ndarray, float]:
    """delta minimized by LP for this G when that stays feasible."""
    polished = _lp_polish(work, g, opts)
    if polished is not None and work.residual(g, polished) <= opts.eps_feas \
            and polished.sum() <= delta.sum() + 1e-12:
        return polished, float(polished.sum())
    return delta, float(delta.sum())


def _minimize_levels(inst: SdpInstance, work: _Work, opts: SolveOpts,
                     g0: np.ndarray, budget: int) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Bisect the objective level, LP-tightening the upper end after every
    feasible probe. Returns (G, delta, iterations, hit_budget)."""
    n = work.n
    per_probe = max(2000, opts.max_iters // 12)
    total = 0

    # level 0 first: many instances are feasible with no outlier weight at all
    cap = min(per_probe, budget)
    g, delta, res, it = _probe(work, 0.0, g0, np.zeros(n), opts, cap, pin_delta=True)
    total += it
    if res <= opts.eps_feas:
        return g, delta, total, False

    # level n is always feasible (delta = 1, G = 0)
    best = (np.zeros((n, n)), np.ones(n))
    lo, hi = 0.0, float(n)
    warm_g, warm_d = g0, np.full(n, 0.5)
    while hi - lo > opts.eps_obj and total < budget:
        mid = (lo + hi) / 2.0
        cap = min(per_probe, budget - total)
        g, delta, res, it = _probe(work, mid, warm_g, warm_d, opts, cap)
        total += it
        if res <= opts.eps_feas:
            delta, level = _polished_sum(work, g, delta, opts)
            best = (g, delta)
            warm_g, warm_d = g, delta
            hi = min(mid, level)
        else:
            lo = mid
    return best[0], best[1], total, total >= budget


def solve_sdp(inst: SdpInstance, opts: SolveOpts = SolveOpts()) -> SdpSolution:
    """Minimize sum(delta) subject to the pair, box, and PSD constraints.

    Bisects the objective level, running the splitting iteration at each
    level; on iteration exhaustion the best iterate found so far is returned,
    flagged infeasible if it misses the feasibility tolerance.
    """
    n = inst.m.n
    work = _Work(inst)
    if n < 2:
        return SdpSolution(inst, np.zeros((n, n)), np.zeros(n), 0.0, 0.0, 0, True)
    g0 = _initial_gram(inst.m)
    g, delta, total, _ = _minimize_levels(inst, work, opts, g0, opts.max_iters)
    sol = _solution_from(inst, work, g, delta, total, opts)
    if not sol.feasible and n >= 2:
        raise NumericalBreakdown("the always-feasible level n certificate was lost")
    return sol


def distortion_feasible(m: MetricSpace, c: float, opts: SolveOpts = SolveOpts(),
                        iters_cap: Optional[int] = None) -> tuple[bool, Optional[np.ndarray]]:
    """Plain outlier-free feasibility: does a Gram matrix with distortion <= c
    exist? Used by the optimal-distortion oracle's binary search."""
    if m.n < 2:
        return True, np.zeros((m.n, m.n))
    inst = build_instance(m, c, 0.0)
    work = _Work(inst)
    cap = iters_cap if iters_cap is not None else max(2000, opts.max_iters // 12)
    g, _, res, _ = _probe(work, 0.0, _initial_gram(m), np.zeros(m.n), opts, cap, pin_delta=True)
    return (res <= opts.eps_feas), (g if res <= opts.eps_feas else None)


# ---------------------------------------------------------------------------
# rounding and the k-search loop
# ---------------------------------------------------------------------------

def round_solution(sol: SdpSolution, c: float, gamma: float, f_k: float,
                   k: Optional[int] = None) -> OutlierResult:
    """Threshold the outlier weights at Delta = c^2 (gamma^2 - 1) /
    (2 f_k + 2 c^2 gamma^2), extract survivor vectors from the Gram matrix,
    and rescale by 1/sqrt(1 - 2 Delta)."""
    _check_gamma(gamma)
    m = sol.instance.m
    delta_cut = c ** 2 * (gamma ** 2 - 1.0) / (2.0 * f_k + 2.0 * c ** 2 * gamma ** 2)
    outliers = tuple(int(i) for i in np.flatnonzero(sol.delta >= delta_cut))
    survivors = [i for i in range(m.n) if i not in set(outliers)]
    scale = 1.0 / math.sqrt(1.0 - 2.0 * delta_cut)
    sub_gram = sol.gram[np.ix_(survivors, survivors)]
    pts = points_from_gram(sub_gram, tol_eig=1e-7)
    embedding = PointSet(points=pts.points * scale, p=2.0)
    if len(survivors) >= 2:
        sub_metric, _ = restrict(m, outliers)
        achieved = distortion_stats(sub_metric, embedding).distortion
    else:
        achieved = 1.0
    if k is not None:
        certified = (2.0 * f_k / c ** 2 + 2.0 * gamma ** 2) / (gamma ** 2 - 1.0) * k
    else:
        certified = sol.objective / delta_cut
    return OutlierResult(
        outliers=outliers,
        embedding=embedding,
        gamma=gamma,
        achieved_distortion=float(achieved),
        certified_bound=float(certified),
        metadata={
            "delta_cut": delta_cut,
            "k": k,
            "f_k": f_k,
            "c": c,
            "objective": sol.objective,
            "max_violation": sol.max_violation,
            "iterations": sol.iterations,
            "feasible": sol.feasible,
            "delta": [float(v) for v in sol.delta],
        },
    )


def _reclaim_outliers(sol: SdpSolution, result: OutlierResult, c: float,
                      gamma: float) -> OutlierResult:
    """Return thresholded points to the survivor set when their Gram rows
    already satisfy the survivor sandwich against everything kept.

    The thresholded set can carry solver dust just above the (tiny) cutoff;
    re-adding is checked pair by pair against d <= scaled distance <=
    gamma * c * d, so the result's guarantees are verified rather than
    inherited. Outliers are retried in increasing weight order.
    """
    if not result.outliers:
        return result
    m = sol.instance.m
    delta_cut = result.metadata["delta_cut"]
    scale = 1.0 / math.sqrt(1.0 - 2.0 * delta_cut)
    diag = np.diag(sol.gram)
    r = diag[:, None] + diag[None, :] - 2.0 * sol.gram
    dist = scale * np.sqrt(np.clip(r, 0.0, None))
    tol = 1e-6
    kept = [i for i in range(m.n) if i not in set(result.outliers)]
    still_out = []
    for x in sorted(result.outliers, key=lambda i: (sol.delta[i], i)):
        ok = all(
            m.dist[x, y] * (1.0 - tol) <= dist[x, y] <= gamma * c * m.dist[x, y] * (1.0 + tol)
            for y in kept)
        if ok:
            kept.append(x)
        else:
            still_out.append(x)
    if len(still_out) == len(result.outliers):
        return result
    kept = sorted(kept)
    pts = points_from_gram(sol.gram[np.ix_(kept, kept)], tol_eig=1e-7)
    embedding = PointSet(points=pts.points * scale, p=2.0)
    if len(kept) >= 2:
        sub_metric, _ = restrict(m, still_out)
        achieved = distortion_stats(sub_metric, embedding).distortion
    else:
        achieved = 1.0
    metadata = dict(result.metadata)
    metadata["reclaimed"] = len(result.outliers) - len(still_out)
    return OutlierResult(
        outliers=tuple(sorted(still_out)),
        embedding=embedding,
        gamma=result.gamma,
        achieved_distortion=float(achieved),
        certified_bound=result.certified_bound,
        metadata=metadata,
    )


def search_min_outliers(m: MetricSpace, c: float, gamma: float,
                        mode: str = "weak_factor",
                        opts: SolveOpts = SolveOpts(),
                        zeta: Optional[float] = None,
                        zeta_k: Optional[float] = None) -> OutlierResult:
    """Try k = 0, 1, 2, ... until the SDP with f(k) admits value <= k; round.

    k = 0 runs the plain distortion-c feasibility step so isometric-enough
    inputs exit with an empty outlier set. zeta defaults to the measured
    distortion of a seeded Bourgain run (recorded in the metadata); in
    strong_subset mode zeta_k defaults to that same measured value.
    """
    _check_gamma(gamma)
    zeta_source = "supplied"
    if zeta is None:
        if m.n >= 2:
            _, stats = bourgain_embed(m, BourgainParams(seed=opts.seed, p=2.0))
            zeta = max(stats.distortion, 1.0)
        else:
            zeta = 1.0
        zeta_source = f"bourgain(seed={opts.seed})"
    if mode == "strong_subset" and zeta_k is None:
        zeta_k = zeta
    n = m.n
    per_probe = max(2000, opts.max_iters // 12)
    g0 = _initial_gram(m)
    # a Gram feasible at the target distortion gamma*c concentrates the weight
    # needs on genuinely bad points; well worth one extra feasibility run
    target_ok, g_target = distortion_feasible(m, gamma * c, opts)
    candidates = [g0] + ([g_target] if target_ok and g_target is not None else [])
    g_warm = g0
    for k in range(0, n + 1):
        f_k = f_of_k(k, zeta, mode, zeta_k=zeta_k)
        inst = build_instance(m, c, f_k)
        work = _Work(inst)
        level = k + opts.eps_obj / 2.0
        iters = 0
        # LP fast path: a known Gram may already admit a cheap enough delta
        g, delta, res = None, None, np.inf
        for cand in candidates + [g_warm]:
            quick = _lp_polish(work, cand, opts)
            if quick is None or quick.sum() > level:
                continue
            cand_res = work.residual(cand, quick)
            if cand_res <= opts.eps_feas and quick.sum() < (delta.sum() if delta is not None else np.inf):
                g, delta, res = cand.copy(), quick, cand_res
        if g is None:
            g, delta, res, iters = _probe(work, level, g_warm,
                                          np.full(n, min(1.0, level / max(n, 1))),
                                          opts, per_probe, pin_delta=(n < 2))
        if res <= opts.eps_feas:
            # accepted at this k: descend toward the true minimum before rounding
            delta, level = _polished_sum(work, g, delta, opts)
            while level > opts.eps_obj / 4.0:
                target = level / 2.0
                g2, d2, res2, it2 = _probe(work, target, g, delta, opts, per_probe)
                iters += it2
                if res2 > opts.eps_feas:
                    break
                d2, new_level = _polished_sum(work, g2, d2, opts)
                g, delta = g2, d2
                if new_level > 0.9 * level:
                    level = new_level
                    break
                level = new_level
            sol = _solution_from(inst, work, g, delta, iters, opts)
            if sol.objective <= k + opts.eps_obj and sol.feasible:
                result = round_solution(sol, c, gamma, f_k, k=k)
                result.metadata.update({
                    "mode": mode,
                    "g_value": weak_g(k) if mode == "weak_factor"
                               else 382.0 * float(harmonic_number(k + 1)),
                    "zeta": zeta,
                    "zeta_k": zeta_k,
                    "zeta_source": zeta_source,
                    "seed": opts.seed,
                })
                return _reclaim_outliers(sol, result, c, gamma)
        g_warm = g
    raise Exhausted("no k <= n admitted an SDP value <= k; this should be unreachable")
