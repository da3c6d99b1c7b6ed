"""Gadget graphs that transfer vertex cover into minimum outlier sets.

Both constructions produce near-complete graphs whose shortest-path metrics
take only the values 1 and 2, so the hard structure lives entirely in which
edges are omitted.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from .metric_core import Graph


@dataclass(frozen=True)
class GadgetMap:
    """A gadget graph plus the provenance of each gadget node.

    provenance[gadget_node] = (source_node, role); roles are 'u1'/'u2' for the
    lp gadget and 'x'/'y'/'z'/'w' for the l1 gadget. Node ordering interleaves
    the role block per source node, so provenance reads off as node % block.
    """

    source: Graph
    graph: Graph
    provenance: tuple[tuple[int, str], ...]


def lp_gadget(g: Graph) -> GadgetMap:
    """2n nodes u1,u2 per source node; complete except u2-v2 for source edges uv.

    A single source edge yields the 4-node complete-minus-one-edge graph whose
    metric (all distances 1 except one pair at 2) is not embeddable into lp
    for any finite p > 1, and the minimum isometric outlier set of the gadget
    metric has the size of a minimum vertex cover of the source.
    """
    n2 = 2 * g.n
    omit = {(2 * u + 1, 2 * v + 1) for u, v in g.edges}
    edges = tuple(e for e in combinations(range(n2), 2) if e not in omit)
    prov = []
    for u in range(g.n):
        prov.append((u, "u1"))
        prov.append((u, "u2"))
    return GadgetMap(source=g, graph=Graph(n=n2, edges=edges), provenance=tuple(prov))


def l1_gadget(g: Graph) -> GadgetMap:
    """4n nodes x,y,z,w per source node; complete except x_i-y_i and, for each
    source edge ij, x_i-x_j.

    A single source edge yields the 8-node graph that is irreducible (one
    theta class), not bipartite, and not hypercube embeddable at scale 2.
    """
    n4 = 4 * g.n
    x = lambda i: 4 * i
    omit = {(x(i), x(i) + 1) for i in range(g.n)}
    omit |= {tuple(sorted((x(i), x(j)))) for i, j in g.edges}
    edges = tuple(e for e in combinations(range(n4), 2) if e not in omit)
    prov = []
    for i in range(g.n):
        for role in ("x", "y", "z", "w"):
            prov.append((i, role))
    return GadgetMap(source=g, graph=Graph(n=n4, edges=edges), provenance=tuple(prov))
