"""Composition of nested embeddings.

Given a metric on X, a subset S with low-distortion expanding embedding
alpha_S, and a coarser expanding embedding alpha_X of all of X, a random draw
clusters the outliers K = X minus S around permutation-ordered centers and
concatenates one block per cluster behind an alpha_S-derived block. Pairs
inside S keep exactly their alpha_S distances; all other pairs expand by at
most case-specific multiples of (c_S, c_X), in expectation for mutually close
outlier pairs and in the worst case otherwise.

Cluster loop semantics: the i-th center is the i-th element of the
permutation even if it was already swallowed by an earlier cluster, so
clusters can be empty; the loop stops once every outlier is assigned. The
block for outlier v in cluster i uses the anchor of the *center* u_i, not of
v itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .bourgain import BourgainParams, bourgain_embed
from .errors import (
    CallbackNotExpanding,
    EmptyS,
    InconsistentTranscript,
    InvalidCase,
    KappaOutOfRange,
    NotExpanding,
    SizeMismatch,
)
from .lp_geometry import PointSet
from .metric_core import MetricSpace, distortion_stats, restrict

EXPANDING_TOL = 1e-9


# ---------------------------------------------------------------------------
# inputs and transcripts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompositionInputs:
    """Validated inputs: metric, subset S, host p, the two expanding embeddings.

    alpha_s rows follow sorted(S); alpha_x rows follow 0..n-1. Measured
    distortions c_s <= c_x are cached at construction.
    """

    m: MetricSpace
    s: tuple[int, ...]
    p: float
    alpha_s: PointSet
    alpha_x: PointSet
    tau: float = 2.0

    def __post_init__(self):
        s_sorted = tuple(sorted(set(int(i) for i in self.s)))
        if not s_sorted:
            raise EmptyS("S must be nonempty")
        if s_sorted[0] < 0 or s_sorted[-1] >= self.m.n:
            raise SizeMismatch(f"S contains indices outside 0..{self.m.n - 1}")
        object.__setattr__(self, "s", s_sorted)
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.alpha_x.n != self.m.n:
            raise SizeMismatch(f"alpha_x has {self.alpha_x.n} rows, metric has {self.m.n}")
        if self.alpha_s.n != len(s_sorted):
            raise SizeMismatch(f"alpha_s has {self.alpha_s.n} rows, |S|={len(s_sorted)}")
        if not (self.alpha_s.p == self.alpha_x.p == self.p):
            raise SizeMismatch("alpha_s.p, alpha_x.p and p must agree")
        c_s = _require_expanding(self.m, s_sorted, self.alpha_s, "alpha_s")
        c_x = _require_expanding(self.m, tuple(range(self.m.n)), self.alpha_x, "alpha_x")
        if c_s > c_x * (1.0 + EXPANDING_TOL):
            raise ValueError(f"c_S={c_s:g} exceeds c_X={c_x:g}; the finer embedding must not be coarser")
        object.__setattr__(self, "_c_s", c_s)
        object.__setattr__(self, "_c_x", c_x)

    @property
    def c_s(self) -> float:
        return self._c_s

    @property
    def c_x(self) -> float:
        return self._c_x

    @cached_property
    def outliers(self) -> tuple[int, ...]:
        in_s = set(self.s)
        return tuple(i for i in range(self.m.n) if i not in in_s)

    @property
    def k(self) -> int:
        return self.m.n - len(self.s)

    @cached_property
    def s_row(self) -> dict[int, int]:
        return {orig: row for row, orig in enumerate(self.s)}

    @cached_property
    def gamma(self) -> dict[int, int]:
        return nearest_anchors(self.m, self.s)


def _require_expanding(m: MetricSpace, subset: tuple[int, ...], emb: PointSet, name: str) -> float:
    if len(subset) < 2:
        return 1.0
    sub, _ = restrict(m, set(range(m.n)) - set(subset))
    stats = distortion_stats(sub, emb)
    if stats.min_ratio < 1.0 - EXPANDING_TOL:
        raise NotExpanding(f"{name} contracts some pair (min ratio {stats.min_ratio:.12g})")
    return max(stats.max_ratio, 1.0)


def nearest_anchors(m: MetricSpace, s: Sequence[int]) -> dict[int, int]:
    """gamma(u) = the closest point of S to each u outside S, lowest index on ties."""
    s_sorted = tuple(sorted(set(int(i) for i in s)))
    if not s_sorted:
        raise EmptyS("S must be nonempty")
    cols = np.asarray(s_sorted, dtype=int)
    in_s = set(s_sorted)
    gamma = {}
    for u in range(m.n):
        if u in in_s:
            continue
        row = m.dist[u, cols]
        gamma[u] = int(cols[int(np.argmin(row))])  # argmin returns the first minimum
    return gamma


@dataclass(frozen=True)
class CompositionTranscript:
    """One random draw: the threshold b, the permutation of K, and the greedy
    clusters (center, members) in formation order."""

    b: float
    pi: tuple[int, ...]
    clusters: tuple[tuple[int, tuple[int, ...]], ...]
    gamma: dict[int, int] = field(compare=False)

    @property
    def t(self) -> int:
        return len(self.clusters)

    def cluster_of(self) -> dict[int, int]:
        owner = {}
        for i, (_, members) in enumerate(self.clusters):
            for v in members:
                owner[v] = i
        return owner

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "pi": list(self.pi),
            "clusters": [{"center": c, "members": list(ms)} for c, ms in self.clusters],
            "gamma": {str(u): g for u, g in sorted(self.gamma.items())},
        }

    @staticmethod
    def from_dict(data: dict) -> "CompositionTranscript":
        return CompositionTranscript(
            b=float(data["b"]),
            pi=tuple(int(v) for v in data["pi"]),
            clusters=tuple((int(c["center"]), tuple(int(v) for v in c["members"]))
                           for c in data["clusters"]),
            gamma={int(u): int(g) for u, g in data["gamma"].items()},
        )


def sample_transcript(inputs: CompositionInputs, rng: np.random.Generator) -> CompositionTranscript:
    """Draw b uniform on [2, tau+2], a Fisher-Yates permutation of K, and run
    the greedy cluster loop."""
    b = 2.0 + inputs.tau * float(rng.random())
    outliers = inputs.outliers
    pi = tuple(int(v) for v in rng.permutation(np.asarray(outliers, dtype=int))) if outliers else ()
    return _greedy_clusters(inputs.m, inputs.gamma, b, pi)


def _greedy_clusters(m: MetricSpace, gamma: dict[int, int], b: float,
                     pi: tuple[int, ...]) -> CompositionTranscript:
    remaining = set(pi)
    clusters = []
    i = 0
    while remaining:
        center = pi[i]
        members = tuple(v for v in pi if v in remaining
                        and m.dist[v, center] <= b * m.dist[v, gamma[v]])
        members = tuple(sorted(members))
        clusters.append((center, members))
        remaining.difference_update(members)
        i += 1
    return CompositionTranscript(b=b, pi=pi, clusters=tuple(clusters), gamma=dict(gamma))


def _check_transcript(inputs: CompositionInputs, tr: CompositionTranscript) -> None:
    if tuple(sorted(tr.pi)) != inputs.outliers:
        raise InconsistentTranscript("pi is not a permutation of X minus S")
    assigned: set[int] = set()
    for idx, (center, members) in enumerate(tr.clusters):
        if center != tr.pi[idx]:
            raise InconsistentTranscript("cluster centers must follow pi order")
        for v in members:
            if v in assigned:
                raise InconsistentTranscript(f"outlier {v} assigned twice")
            scale = max(inputs.m.dist[v, inputs.gamma[v]], 1.0)
            if inputs.m.dist[v, center] > tr.b * inputs.m.dist[v, inputs.gamma[v]] + 1e-9 * scale:
                raise InconsistentTranscript(f"outlier {v} violates the grab rule of its cluster")
            assigned.add(v)
    if assigned != set(inputs.outliers):
        raise InconsistentTranscript("clusters do not partition X minus S")


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComposedEmbedding:
    """A composed embedding plus the transcripts that produced it."""

    embedding: PointSet
    transcripts: tuple[CompositionTranscript, ...]
    alpha_prime_dims: int


def _alpha_prime(inputs: CompositionInputs, tr: CompositionTranscript) -> np.ndarray:
    """alpha' rows: alpha_S on S, alpha_S(gamma(center)) on each cluster."""
    out = np.zeros((inputs.m.n, inputs.alpha_s.dims))
    for orig, row in inputs.s_row.items():
        out[orig] = inputs.alpha_s.points[row]
    for center, members in tr.clusters:
        anchor_row = inputs.s_row[inputs.gamma[center]]
        for v in members:
            out[v] = inputs.alpha_s.points[anchor_row]
    return out


def _cluster_blocks(inputs: CompositionInputs, tr: CompositionTranscript) -> np.ndarray:
    """Concatenated per-cluster blocks: alpha_X on members, alpha_X(gamma(center)) elsewhere."""
    n, dims_x = inputs.m.n, inputs.alpha_x.dims
    out = np.zeros((n, tr.t * dims_x))
    for i, (center, members) in enumerate(tr.clusters):
        block = out[:, i * dims_x:(i + 1) * dims_x]
        block[:] = inputs.alpha_x.points[inputs.gamma[center]]
        for v in members:
            block[v] = inputs.alpha_x.points[v]
    return out


def compose_once(inputs: CompositionInputs, transcript: CompositionTranscript) -> ComposedEmbedding:
    """Materialize one draw: alpha(v) = alpha'(v) | alpha_1(v) | ... | alpha_t(v)."""
    _check_transcript(inputs, transcript)
    coords = np.hstack([_alpha_prime(inputs, transcript), _cluster_blocks(inputs, transcript)])
    return ComposedEmbedding(
        embedding=PointSet(points=coords, p=inputs.p),
        transcripts=(transcript,),
        alpha_prime_dims=inputs.alpha_s.dims,
    )


def compose_deterministic(inputs: CompositionInputs, m_samples: int,
                          rng: np.random.Generator) -> ComposedEmbedding:
    """Scaled concatenation of m_samples independent draws.

    Each draw contributes its full coordinate block: the cluster part at
    weight 1/m_samples (the empirical draw probability) and the alpha' part at
    weight m_samples^(-1/p), so that pairs inside S keep exactly their alpha_S
    distance for every p. For p=1 the result's distance on every pair equals
    the arithmetic mean of the per-draw distances.
    """
    if m_samples < 1:
        raise ValueError("m_samples must be >= 1")
    transcripts = tuple(sample_transcript(inputs, rng) for _ in range(m_samples))
    w_prime = m_samples ** (-1.0 / inputs.p)
    w_cluster = 1.0 / m_samples
    parts = []
    for tr in transcripts:
        parts.append(w_prime * _alpha_prime(inputs, tr))
        parts.append(w_cluster * _cluster_blocks(inputs, tr))
    return ComposedEmbedding(
        embedding=PointSet(points=np.hstack(parts), p=inputs.p),
        transcripts=transcripts,
        alpha_prime_dims=inputs.alpha_s.dims,
    )


def pair_distance(inputs: CompositionInputs, tr: CompositionTranscript, x: int, y: int) -> float:
    """||alpha(x) - alpha(y)||_p for one draw, using only the blocks that differ.

    Blocks other than the clusters owning x or y are constant across the pair,
    so the cost is independent of the cluster count.
    """
    p = inputs.p
    owner = tr.cluster_of()
    ax = inputs.alpha_x.points

    def prime_row(v: int) -> np.ndarray:
        if v in inputs.s_row:
            return inputs.alpha_s.points[inputs.s_row[v]]
        center = tr.clusters[owner[v]][0]
        return inputs.alpha_s.points[inputs.s_row[inputs.gamma[center]]]

    total = float(np.sum(np.abs(prime_row(x) - prime_row(y)) ** p))
    cx = owner.get(x)
    cy = owner.get(y)
    if cx is not None and cx == cy:
        total += float(np.sum(np.abs(ax[x] - ax[y]) ** p))
    else:
        if cx is not None:
            anchor = inputs.gamma[tr.clusters[cx][0]]
            total += float(np.sum(np.abs(ax[x] - ax[anchor]) ** p))
        if cy is not None:
            anchor = inputs.gamma[tr.clusters[cy][0]]
            total += float(np.sum(np.abs(ax[y] - ax[anchor]) ** p))
    return total ** (1.0 / p)


def estimate_expected_expansion(inputs: CompositionInputs, pair: tuple[int, int],
                                trials: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo mean and standard error of the pair's composed distance."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    x, y = pair
    vals = np.empty(trials)
    for t in range(trials):
        tr = sample_transcript(inputs, rng)
        vals[t] = pair_distance(inputs, tr, x, y)
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return mean, stderr


# ---------------------------------------------------------------------------
# theoretical bound calculator
# ---------------------------------------------------------------------------

def harmonic_number(k: int) -> Fraction:
    """H_k = sum_{i=1..k} 1/i, with H_0 = 0."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return sum((Fraction(1, i) for i in range(1, k + 1)), Fraction(0))


@dataclass(frozen=True)
class BoundQuery:
    """Which expansion case applies, with its parameters.

    Cases: 'a' both in S; 'b' same cluster; 'c' one endpoint in S; 'd' outlier
    pair with an anchor within kappa times the pair distance; 'e' outlier pair
    with both anchors beyond kappa times the pair distance (bound holds in
    expectation). tau=kappa=2 gives the fixed-constant bounds.
    """

    case: str
    c_s: float
    c_x: float
    k: int = 0
    tau: float = 2.0
    kappa: float = 2.0


def expansion_coefficients(case: str, k: int = 0, tau=2, kappa=2) -> tuple[Fraction, Fraction]:
    """Exact (c_S, c_X) multipliers of the per-case expansion bound.

    Computed in rational arithmetic; at tau=2, kappa=2 these are
    (1,0), (0,1), (7,9), (31,45) and ((155/2)H_k, (225/2)H_k + 1).
    """
    tau = Fraction(tau)
    kappa = Fraction(kappa)
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if case == "a":
        return Fraction(1), Fraction(0)
    if case == "b":
        return Fraction(0), Fraction(1)
    if case == "c":
        return tau + 5, 2 * tau + 5
    if case == "d":
        if kappa <= 0:
            raise KappaOutOfRange(f"case (d) needs kappa > 0, got {float(kappa)}")
        return (2 * tau + 8) * kappa + tau + 5, (4 * tau + 10) * kappa + 2 * tau + 5
    if case == "e":
        if kappa <= 1:
            raise KappaOutOfRange(f"case (e) needs kappa > 1, got {float(kappa)}")
        h_k = harmonic_number(k)
        pref = (tau + 3) / ((kappa - 1) * tau)
        coef_s = pref * h_k * (kappa * (tau + 3) + (kappa + 1) * (tau + 5))
        coef_x = 1 + pref * h_k * (2 * tau + 5) * (2 * kappa + 1)
        return coef_s, coef_x
    raise InvalidCase(f"unknown case {case!r}; expected one of a..e")


def expansion_bound(q: BoundQuery) -> float:
    """The multiplier of d(x,y) bounding the (expected, for case e) expansion."""
    coef_s, coef_x = expansion_coefficients(q.case, k=q.k, tau=q.tau, kappa=q.kappa)
    return float(coef_s) * q.c_s + float(coef_x) * q.c_x


def table_case(inputs: CompositionInputs, tr: CompositionTranscript, x: int, y: int,
               kappa: float = 2.0) -> str:
    """Classify a pair into exactly one of the cases a..e for this draw."""
    in_s_x = x in inputs.s_row
    in_s_y = y in inputs.s_row
    if in_s_x and in_s_y:
        return "a"
    if in_s_x or in_s_y:
        return "c"
    owner = tr.cluster_of()
    if owner[x] == owner[y]:
        return "b"
    d = inputs.m.dist[x, y]
    d_ax = inputs.m.dist[x, inputs.gamma[x]]
    d_ay = inputs.m.dist[y, inputs.gamma[y]]
    if min(d_ax, d_ay) <= kappa * d:
        return "d"
    return "e"


def close_pair_split_bound(inputs: CompositionInputs, x: int, y: int) -> float:
    """Upper bound on the probability that a mutually close outlier pair is
    split across clusters: sum over eligible u of (5/index(u)) * d(x,y) /
    d(x_u, gamma(x_u)), for tau = 2.
    """
    if abs(inputs.tau - 2.0) > 1e-12:
        raise ValueError("the closed-form split bound is stated for tau = 2")
    d = inputs.m.dist
    dxy = d[x, y]
    betas = []
    for u in inputs.outliers:
        bx = d[x, u] / d[x, inputs.gamma[x]]
        by = d[y, u] / d[y, inputs.gamma[y]]
        if bx <= by:
            betas.append((bx, u, x))
        else:
            betas.append((by, u, y))
    betas.sort(key=lambda item: (item[0], item[1]))
    total = 0.0
    for index, (beta, _, closer) in enumerate(betas, start=1):
        if beta > inputs.tau + 2.0:
            continue
        total += (5.0 / index) * dxy / d[closer, inputs.gamma[closer]]
    return total


# ---------------------------------------------------------------------------
# strong composition: cluster-local embeddings instead of alpha_X
# ---------------------------------------------------------------------------

ClusterEmbedder = Callable[[MetricSpace, tuple[int, ...], int], PointSet]


def compose_strong(m: MetricSpace, s: Sequence[int], p: float, alpha_s: PointSet,
                   rng: np.random.Generator,
                   cluster_embedder: Optional[ClusterEmbedder] = None,
                   tau: float = 2.0,
                   transcript: Optional[CompositionTranscript] = None) -> ComposedEmbedding:
    """One draw of the composition with each cluster block built from an
    expanding embedding of that cluster plus its center's anchor.

    The callback receives (submetric, original indices, cluster index) and
    must return an expanding embedding of the submetric; the default runs the
    Bourgain embedding on the subset with a seed derived from rng.
    """
    s_sorted = tuple(sorted(set(int(i) for i in s)))
    gamma = nearest_anchors(m, s_sorted)
    s_row = {orig: row for row, orig in enumerate(s_sorted)}
    if alpha_s.n != len(s_sorted):
        raise SizeMismatch(f"alpha_s has {alpha_s.n} rows, |S|={len(s_sorted)}")
    if alpha_s.p != p:
        raise SizeMismatch("alpha_s.p must equal p")
    _require_expanding(m, s_sorted, alpha_s, "alpha_s")

    if transcript is None:
        b = 2.0 + tau * float(rng.random())
        outliers = tuple(i for i in range(m.n) if i not in set(s_sorted))
        pi = tuple(int(v) for v in rng.permutation(np.asarray(outliers, dtype=int))) if outliers else ()
        transcript = _greedy_clusters(m, gamma, b, pi)

    if cluster_embedder is None:
        def cluster_embedder(sub: MetricSpace, indices: tuple[int, ...], i: int) -> PointSet:
            seed = int(rng.integers(0, 2 ** 63 - 1))
            emb, _ = bourgain_embed(sub, BourgainParams(seed=seed, p=p))
            return emb

    # alpha' exactly as in the single-embedding composition
    prime = np.zeros((m.n, alpha_s.dims))
    for orig, row in s_row.items():
        prime[orig] = alpha_s.points[row]
    for center, members in transcript.clusters:
        for v in members:
            prime[v] = alpha_s.points[s_row[gamma[center]]]

    blocks = [prime]
    for i, (center, members) in enumerate(transcript.clusters):
        subset = tuple(sorted(set(members) | {gamma[center]}))
        sub, kept = restrict(m, set(range(m.n)) - set(subset))
        emb = cluster_embedder(sub, kept, i)
        if emb.n != sub.n:
            raise CallbackNotExpanding(f"cluster {i}: embedder returned {emb.n} rows for {sub.n} points")
        if sub.n >= 2:
            stats = distortion_stats(sub, emb)
            if stats.min_ratio < 1.0 - EXPANDING_TOL:
                raise CallbackNotExpanding(
                    f"cluster {i}: embedding contracts (min ratio {stats.min_ratio:.12g})")
        row_of = {orig: r for r, orig in enumerate(kept)}
        block = np.tile(emb.points[row_of[gamma[center]]], (m.n, 1))
        for v in members:
            block[v] = emb.points[row_of[v]]
        blocks.append(block)

    return ComposedEmbedding(
        embedding=PointSet(points=np.hstack(blocks), p=p),
        transcripts=(transcript,),
        alpha_prime_dims=alpha_s.dims,
    )
