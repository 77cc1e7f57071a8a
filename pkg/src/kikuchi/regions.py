"""Region graphs for cluster variation approximations.

A region graph is a poset of variable subsets: "outer" clusters that carry the
model potentials, plus subset regions generated by intersections of outer
clusters.  Every region gets an overcounting number chosen so that entropy
contributions add up without double counting; the numbers are kept as exact
rationals and only converted to floats at the numerical boundary.

Overcounting numbers follow the standard recursion: outer clusters count once,
and every subset region gets one minus the sum over all regions strictly
containing it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence


class GraphError(ValueError):
    """Structurally invalid cluster input or region graph."""


@dataclass(frozen=True)
class Variable:
    id: int
    cardinality: int

    def __post_init__(self):
        if self.cardinality < 2:
            raise GraphError(f"variable {self.id}: cardinality must be >= 2")


@dataclass(frozen=True)
class Region:
    id: int
    vars: tuple[int, ...]
    overcount: Fraction
    kind: str  # "outer" or "subset"

    def __post_init__(self):
        if self.kind not in ("outer", "subset"):
            raise GraphError(f"region {self.id}: unknown kind {self.kind!r}")
        if not self.vars:
            raise GraphError(f"region {self.id}: empty variable set")
        if tuple(sorted(set(self.vars))) != self.vars:
            raise GraphError(f"region {self.id}: vars must be sorted and unique")
        if self.kind == "outer" and self.overcount != 1:
            raise GraphError(f"region {self.id}: outer clusters must count once")


class RegionGraph:
    """Immutable-by-convention poset of regions.

    Derived structure (Hasse edges, sign groupings, containing-outer maps) is
    computed once at construction.  ``strict`` requires every subset region to
    sit strictly inside at least one outer cluster, which holds for all built
    graphs; synthetic test posets may disable it.
    """

    def __init__(self, regions: Sequence[Region], hasse_edges=None, strict=True):
        self.regions = tuple(regions)
        self.by_id = {r.id: r for r in self.regions}
        if len(self.by_id) != len(self.regions):
            raise GraphError("duplicate region ids")
        varsets = {r.id: frozenset(r.vars) for r in self.regions}
        if len(set(varsets.values())) != len(self.regions):
            raise GraphError("two regions share one variable set")
        self._varsets = varsets

        self.outer_ids = tuple(sorted(r.id for r in self.regions if r.kind == "outer"))
        subset_ids = tuple(sorted(r.id for r in self.regions if r.kind == "subset"))
        self.subset_ids = subset_ids
        self.neg_ids = tuple(b for b in subset_ids if self.by_id[b].overcount < 0)
        self.pos_ids = tuple(b for b in subset_ids if self.by_id[b].overcount > 0)
        self.zero_ids = tuple(b for b in subset_ids if self.by_id[b].overcount == 0)

        self.containing_outers = {
            b: tuple(a for a in self.outer_ids if varsets[b] < varsets[a])
            for b in subset_ids
        }
        self.outer_count = {b: len(self.containing_outers[b]) for b in subset_ids}
        if strict:
            for b in subset_ids:
                if self.outer_count[b] == 0:
                    raise GraphError(
                        f"subset region {b} is not strictly inside any outer cluster"
                    )

        if hasse_edges is None:
            hasse_edges = self._transitive_reduction()
        self.hasse_edges = tuple(sorted(hasse_edges))
        for p, c in self.hasse_edges:
            if p not in self.by_id or c not in self.by_id:
                raise GraphError(f"edge ({p},{c}) references unknown region")

        inter = set()
        for a, b in combinations(self.outer_ids, 2):
            s = varsets[a] & varsets[b]
            if s:
                inter.add(s)
        self.direct_intersection_ids = frozenset(
            b for b in subset_ids if varsets[b] in inter
        )

    def _transitive_reduction(self):
        varsets = self._varsets
        ids = [r.id for r in self.regions]
        edges = []
        for c in ids:
            sups = [p for p in ids if varsets[c] < varsets[p]]
            for p in sups:
                direct = not any(
                    varsets[c] < varsets[m] < varsets[p] for m in sups
                )
                if direct:
                    edges.append((p, c))
        return edges

    def region_vars(self, rid: int) -> tuple[int, ...]:
        return self.by_id[rid].vars

    def overcounts(self) -> dict[int, Fraction]:
        return {r.id: r.overcount for r in self.regions}

    def subset_overcounts(self) -> dict[int, float]:
        return {b: float(self.by_id[b].overcount) for b in self.subset_ids}


def _canonical_clusters(clusters, num_vars=None):
    cooked = []
    for cl in clusters:
        t = tuple(sorted(set(int(v) for v in cl)))
        if not t:
            raise GraphError("empty cluster in input")
        if num_vars is not None and (t[0] < 0 or t[-1] >= num_vars):
            raise GraphError(f"cluster {t} references an unknown variable")
        cooked.append(t)
    if not cooked:
        raise GraphError("no clusters given")

    # Absorb duplicates and clusters contained in a larger one; the survivors
    # keep their first-occurrence order.
    uniq: list[tuple[int, ...]] = []
    seen = set()
    for t in cooked:
        if t not in seen:
            uniq.append(t)
            seen.add(t)
    kept = [t for t in uniq if not any(set(t) < set(u) for u in uniq)]
    dropped = len(cooked) - len(kept)
    if dropped:
        warnings.warn(f"absorbed {dropped} duplicate or contained cluster(s)")
    return kept


def _moebius(varsets: dict[int, frozenset]) -> dict[int, Fraction]:
    order = sorted(varsets, key=lambda i: (-len(varsets[i]), i))
    counts: dict[int, Fraction] = {}
    for i in order:
        above = sum(
            (counts[j] for j in counts if varsets[i] < varsets[j]),
            Fraction(0),
        )
        counts[i] = Fraction(1) - above
    return counts


def recompute_overcounts(g: RegionGraph) -> dict[int, Fraction]:
    """Re-derive every overcounting number from the containment poset alone."""
    return _moebius(dict(g._varsets))


def _assemble(outer_varsets, subset_varsets):
    varsets: dict[int, frozenset] = {}
    for i, t in enumerate(outer_varsets):
        varsets[i] = frozenset(t)
    base = len(outer_varsets)
    subs = sorted(subset_varsets, key=lambda s: (-len(s), tuple(sorted(s))))
    for k, s in enumerate(subs):
        varsets[base + k] = frozenset(s)
    counts = _moebius(varsets)
    regions = [
        Region(i, tuple(t), Fraction(1), "outer") for i, t in enumerate(outer_varsets)
    ]
    for k, s in enumerate(subs):
        rid = base + k
        regions.append(Region(rid, tuple(sorted(s)), counts[rid], "subset"))
    return RegionGraph(regions)


def build_cvm(outer_clusters, num_vars=None) -> RegionGraph:
    """Close the outer clusters under pairwise intersection, recursively.

    The closure includes intersections of intersections, so the result is a
    full cluster variation poset.  Overcounting numbers come out of the
    recursion in exact rational arithmetic.
    """
    outers = _canonical_clusters(outer_clusters, num_vars)
    outer_sets = [frozenset(t) for t in outers]
    closure = set(outer_sets)
    while True:
        fresh = set()
        pool = sorted(closure, key=lambda s: tuple(sorted(s)))
        for a, b in combinations(pool, 2):
            s = a & b
            if s and s not in closure:
                fresh.add(s)
        if not fresh:
            break
        closure |= fresh
    subsets = closure - set(outer_sets)
    return _assemble(outers, subsets)


def build_bethe(clusters, num_vars=None) -> RegionGraph:
    """Bethe construction: the given clusters plus all single-variable subsets.

    Each single variable counts 1 - n, where n is the number of clusters it
    appears in.  Variables appearing in just one cluster get count zero and are
    kept (they end up in the zero group and cost nothing downstream).
    """
    outers = _canonical_clusters(clusters, num_vars)
    outer_sets = set(frozenset(t) for t in outers)
    singles = sorted({v for t in outers for v in t})
    subsets = [frozenset((v,)) for v in singles if frozenset((v,)) not in outer_sets]
    return _assemble(outers, subsets)


def is_singly_connected(g: RegionGraph) -> bool:
    """True iff the outer-cluster/direct-child bipartite graph is a forest."""
    outer_set = set(g.outer_ids)
    pairs = [(p, c) for p, c in g.hasse_edges if p in outer_set]
    parent = {}

    def find(x):
        while parent.get(x, x) != x:
            parent[x] = parent.get(parent[x], parent[x])
            x = parent[x]
        return x

    for a in g.outer_ids:
        parent.setdefault(a, a)
    for p, c in pairs:
        parent.setdefault(c, c)
        rp, rc = find(p), find(c)
        if rp == rc:
            return False
        parent[rp] = rc
    return True


def per_variable_counting_sums(g: RegionGraph) -> dict[int, Fraction]:
    """Sum of overcounting numbers over the regions holding each variable.

    Equals one for every variable on well-balanced graphs; reported as a
    diagnostic, never enforced.
    """
    sums: dict[int, Fraction] = {}
    for r in g.regions:
        for v in r.vars:
            sums[v] = sums.get(v, Fraction(0)) + r.overcount
    return dict(sorted(sums.items()))


def save_region_graph(g: RegionGraph, path) -> None:
    lines = ["# region graph v1"]
    for r in g.regions:
        vars_part = " ".join(str(v) for v in r.vars)
        lines.append(f"{r.id} {r.kind} {r.overcount} {vars_part}")
    for p, c in g.hasse_edges:
        lines.append(f"edge {p} {c}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_region_graph(path) -> RegionGraph:
    regions = []
    edges = []
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "edge":
                if len(parts) != 3:
                    raise GraphError(f"line {ln}: malformed edge line")
                edges.append((int(parts[1]), int(parts[2])))
                continue
            if len(parts) < 4:
                raise GraphError(f"line {ln}: malformed region line")
            try:
                rid = int(parts[0])
                kind = parts[1]
                count = Fraction(parts[2])
                vars_ = tuple(int(v) for v in parts[3:])
            except ValueError as exc:
                raise GraphError(f"line {ln}: {exc}") from None
            regions.append(Region(rid, vars_, count, kind))
    return RegionGraph(regions, hasse_edges=edges)
