"""Bound construction for the double loop.

The inner problem must be convex over the consistency constraints.  That holds
whenever the negative subset-entropy mass can be charged against positive
entropy mass sitting on containing regions: an allocation matrix with

  1. support only on containment pairs (donor strictly contains receiver),
  2. nonnegative entries,
  3. row sums at most the donor's overcounting number,
  4. column sums at least the magnitude of the receiver's negative number.

Existence is decided by a max-flow: donors feed receivers through admissible
arcs, and feasibility means the flow saturates the total receiver demand.

Variants differ in which subset entropies keep their exact (possibly concave)
term and which are linearized around the anchor:

  none   keep everything (valid only when the graph is convex as given)
  conv1  linearize every negative subset term
  conv2  linearize every subset term, positive ones included
  conv3  keep as much negative mass as an allocation can certify, then spend
         leftover positive mass to sharpen the linearized remainder
  cccp   keep one unit of entropy per negative subset and linearize the rest
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import LOG_FLOOR
from .model import FactorModel, outer_log_potentials
from .regions import RegionGraph

FLOW_TOL = 1e-9

VARIANTS = ("none", "conv1", "conv2", "conv3", "cccp")


class ConvexityError(ValueError):
    """A requested bound cannot be certified for this region graph."""


@dataclass
class Allocation:
    """Sparse nonnegative allocation on containment pairs (donor, receiver)."""

    entries: dict[tuple[int, int], float] = field(default_factory=dict)

    def given_by(self, donor: int) -> float:
        return sum(v for (g, _), v in self.entries.items() if g == donor)

    def received_by(self, receiver: int) -> float:
        return sum(v for (_, b), v in self.entries.items() if b == receiver)


@dataclass
class BoundSpec:
    variant: str
    inner_overcounts: dict[int, float]
    witness: Allocation | None = None
    used_resources: dict[int, float] | None = None


def _max_flow(supply, demand, admissible):
    """Deterministic max flow on a bipartite donor/receiver network.

    ``supply`` and ``demand`` are lists of (region id, capacity); ``admissible``
    is a predicate over (donor id, receiver id).  Augmenting paths are found by
    breadth-first search over nodes in sorted-id order, so the resulting flow
    is reproducible.  Returns (total flow, {(donor, receiver): flow}).
    """
    supply = sorted(supply)
    demand = sorted(demand)
    ns, nd = len(supply), len(demand)
    source, sink = 0, 1
    s_off, d_off = 2, 2 + ns
    size = 2 + ns + nd
    cap = [dict() for _ in range(size)]
    big = sum(c for _, c in supply) + sum(c for _, c in demand) + 1.0
    for i, (_, c) in enumerate(supply):
        cap[source][s_off + i] = float(c)
        cap[s_off + i][source] = 0.0
    for j, (_, c) in enumerate(demand):
        cap[d_off + j][sink] = float(c)
        cap[sink][d_off + j] = 0.0
    for i, (gid, _) in enumerate(supply):
        for j, (bid, _) in enumerate(demand):
            if admissible(gid, bid):
                cap[s_off + i][d_off + j] = big
                cap[d_off + j][s_off + i] = 0.0

    total = 0.0
    while True:
        prev = {source: source}
        queue = [source]
        while queue and sink not in prev:
            u = queue.pop(0)
            for v in sorted(cap[u]):
                if v not in prev and cap[u][v] > FLOW_TOL * 1e-3:
                    prev[v] = u
                    queue.append(v)
        if sink not in prev:
            break
        bottleneck = big
        v = sink
        while v != source:
            u = prev[v]
            bottleneck = min(bottleneck, cap[u][v])
            v = u
        v = sink
        while v != source:
            u = prev[v]
            cap[u][v] -= bottleneck
            cap[v][u] += bottleneck
            v = u
        total += bottleneck

    flows = {}
    for i, (gid, _) in enumerate(supply):
        for j, (bid, _) in enumerate(demand):
            if admissible(gid, bid):
                f = cap[d_off + j].get(s_off + i, 0.0)
                if f > FLOW_TOL * 1e-3:
                    flows[(gid, bid)] = f
    return total, flows


def check_convex_over_constraints(graph, counts) -> Allocation | None:
    """Certify convexity over the constraint set of a counted entropy sum.

    ``counts`` maps region id to its (effective) overcounting number.  Returns
    a witness allocation when the negative mass can be fully charged to
    containing positive regions, else None.
    """
    varsets = {rid: set(graph.region_vars(rid)) for rid in counts}
    supply = [(rid, c) for rid, c in counts.items() if c > FLOW_TOL]
    demand = [(rid, -c) for rid, c in counts.items() if c < -FLOW_TOL]
    need = sum(c for _, c in demand)
    if need <= FLOW_TOL:
        return Allocation({})

    def admissible(g, b):
        return varsets[b] < varsets[g]

    total, flows = _max_flow(supply, demand, admissible)
    if total >= need - FLOW_TOL:
        return Allocation(flows)
    return None


def check_conv2_bound(graph) -> Allocation | None:
    """Certify that linearizing positive subset terms still upper-bounds.

    Each positive subset region must be coverable by negative regions that
    contain it: linearizing a concave superset term absorbs the linearization
    of a convex subset term.  Returns the covering allocation or None.
    """
    counts = graph.subset_overcounts()
    varsets = {b: set(graph.region_vars(b)) for b in graph.subset_ids}
    supply = [(b, -counts[b]) for b in graph.neg_ids]
    demand = [(b, counts[b]) for b in graph.pos_ids]
    need = sum(c for _, c in demand)
    if need <= FLOW_TOL:
        return Allocation({})

    def admissible(g, b):
        return varsets[b] < varsets[g]

    total, flows = _max_flow(supply, demand, admissible)
    if total >= need - FLOW_TOL:
        return Allocation(flows)
    return None


def make_bound_spec(graph: RegionGraph, variant: str) -> BoundSpec:
    """Choose how much of each subset entropy the inner loop keeps exact."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown bound variant {variant!r}; pick from {VARIANTS}")
    counts = graph.subset_overcounts()

    if variant == "none":
        return BoundSpec(variant, dict(counts))
    if variant == "conv1":
        return BoundSpec(variant, {b: max(c, 0.0) for b, c in counts.items()})
    if variant == "cccp":
        return BoundSpec(
            variant, {b: (1.0 if c < 0 else c) for b, c in counts.items()}
        )
    if variant == "conv2":
        witness = check_conv2_bound(graph)
        if witness is None:
            raise ConvexityError(
                "conv2 is not a certified bound on this region graph "
                "(a positive subset region is not covered by negative ones); "
                "use conv1 instead"
            )
        return BoundSpec(variant, {b: 0.0 for b in counts}, witness=witness)

    # conv3: keep as much negative mass as remains convex over the constraints.
    varsets = {r.id: set(r.vars) for r in graph.regions}
    all_counts = {r.id: float(r.overcount) for r in graph.regions}
    supply = [(g, c) for g, c in all_counts.items() if c > FLOW_TOL]
    demand = [(b, -counts[b]) for b in graph.neg_ids]

    def contains(g, b):
        return varsets[b] < varsets[g]

    _, flows = _max_flow(supply, demand, contains)
    ct = {b: 0.0 for b in counts}
    for b in graph.pos_ids:
        ct[b] = counts[b]
    for (g, b), f in flows.items():
        ct[b] -= f
    witness = Allocation(flows)

    used = {g: 0.0 for g in graph.pos_ids}
    for (g, b), f in flows.items():
        if g in used:
            used[g] += f

    # Spend leftover positive subset mass on the linearized negative remainder:
    # a positive region sharpens the bound only inside a region it is part of.
    supply2 = [
        (g, counts[g] - used[g])
        for g in graph.pos_ids
        if counts[g] - used[g] > FLOW_TOL
    ]
    demand2 = [
        (b, ct[b] - counts[b]) for b in graph.neg_ids if ct[b] - counts[b] > FLOW_TOL
    ]

    def inside(g, b):
        return varsets[g] < varsets[b]

    if supply2 and demand2:
        _, flows2 = _max_flow(supply2, demand2, inside)
        for (g, b), f in flows2.items():
            ct[g] -= f

    for b in graph.neg_ids:
        ct[b] = min(ct[b], 0.0)
        ct[b] = max(ct[b], counts[b])
    for b in graph.pos_ids:
        ct[b] = min(max(ct[b], 0.0), counts[b])
    return BoundSpec(variant, ct, witness=witness, used_resources=used)


def inner_potentials(
    model: FactorModel, graph: RegionGraph, spec: BoundSpec, anchor
) -> FactorModel:
    """Fold the linearized entropy terms into the outer log potentials.

    Each subset region whose entropy is (partially) linearized contributes the
    anchor's log table, split evenly across the outer clusters containing it.
    The result is a new model whose scopes are exactly the outer clusters;
    the input model is untouched.
    """
    pots = outer_log_potentials(model, graph)
    counts = graph.subset_overcounts()
    clamped = 0
    for b in graph.subset_ids:
        gap = counts[b] - spec.inner_overcounts.get(b, counts[b])
        if gap == 0.0:
            continue
        anch = anchor.tables[b]
        clamped += int((anch < LOG_FLOOR).sum())
        log_anchor = np.log(np.maximum(anch, LOG_FLOOR))
        share = (gap / graph.outer_count[b]) * log_anchor
        vars_b = graph.region_vars(b)
        for a in graph.containing_outers[b]:
            vars_a = graph.region_vars(a)
            shape = tuple(
                model.cards[v] if v in vars_b else 1 for v in vars_a
            )
            pots[a] = pots[a] - share.reshape(shape)
    meta = dict(model.meta)
    meta["inner_variant"] = spec.variant
    meta["clamped_log_terms"] = str(clamped)
    scopes = [graph.region_vars(a) for a in graph.outer_ids]
    tables = [pots[a] for a in graph.outer_ids]
    return FactorModel(model.cards, scopes, tables, meta)
