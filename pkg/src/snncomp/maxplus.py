"""Guaranteed-throughput analysis via maximum cycle mean.

The firing-time recurrence of a consistent, deadlock-free SDFG is encoded
as a digraph whose arcs carry the consumer's execution time (plus hop
latency) and a marking equal to the whole firings' worth of initial
tokens on the channel. The long-term iteration period equals the maximum
over directed cycles of weight / marking, and throughput is its inverse.

Every actor also receives an implicit self-loop arc (weight = exec time,
marking 1): crossbar execution is non-reentrant, which bounds throughput
even for acyclic graphs.
"""

import heapq
from dataclasses import dataclass
from typing import Optional

from .errors import DeadlockError, ValidationError
from .sdfg import SdfGraph, check_deadlock, repetition_vector

_RELAX_EPS = 1e-15
_RATIO_TOL = 1e-12


@dataclass(frozen=True)
class Arc:
    src: int
    dst: int
    weight: float
    marking: int
    channel_id: Optional[int] = None  # None for implicit self-loops


@dataclass(frozen=True)
class RatioDigraph:
    vertices: tuple[int, ...]
    arcs: tuple[Arc, ...]


@dataclass(frozen=True)
class CycleWitness:
    arcs: tuple[Arc, ...]
    weight: float
    marking_sum: int
    mean: float

    @property
    def actor_cycle(self) -> list[int]:
        """Vertex sequence of the cycle, rotated to start at the smallest id."""
        if not self.arcs:
            return []
        verts = [a.src for a in self.arcs]
        pivot = verts.index(min(verts))
        return verts[pivot:] + verts[:pivot]


def _witness(arcs: list[Arc]) -> CycleWitness:
    w = sum(a.weight for a in arcs)
    m = sum(a.marking for a in arcs)
    return CycleWitness(tuple(arcs), w, m, w / m if m else 0.0)


def build_ratio_digraph(g: SdfGraph) -> RatioDigraph:
    """Digraph of the max-plus recurrence of a hardware(-aware) SDFG.

    Requires a consistent graph with an all-ones repetition vector and no
    deadlock. An arc m->n with marking u states that actor n's k-th
    completion waits for m's (k-u)-th completion plus the arc weight.
    """
    rv = repetition_vector(g)
    if any(v != 1 for v in rv.values()):
        raise ValidationError("ratio digraph requires an all-ones repetition vector")
    ok, cycle = check_deadlock(g)
    if not ok:
        ids = [ch.id for ch in cycle]
        raise DeadlockError(f"token-free cycle through channels {ids}", cycle)

    arcs = []
    for ch in sorted(g.channels, key=lambda c: c.id):
        arcs.append(
            Arc(
                src=ch.src,
                dst=ch.dst,
                weight=g.actor(ch.dst).exec_time + ch.hop_latency,
                marking=ch.initial_tokens // ch.cons_rate,
                channel_id=ch.id,
            )
        )
    for a in sorted(g.actors, key=lambda a: a.id):
        arcs.append(Arc(src=a.id, dst=a.id, weight=a.exec_time, marking=1))
    return RatioDigraph(vertices=tuple(g.actor_ids), arcs=tuple(arcs))


def _find_cycle_arcs(arcs: list[Arc]) -> Optional[list[Arc]]:
    """Some directed cycle among the given arcs, or None. Deterministic."""
    out: dict[int, list[Arc]] = {}
    for a in sorted(arcs, key=lambda a: (a.src, a.dst, a.channel_id is None, a.channel_id or 0)):
        out.setdefault(a.src, []).append(a)
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[int, int] = {}
    for root in sorted(out):
        if color.get(root, WHITE) != WHITE:
            continue
        stack: list[tuple[int, int]] = [(root, 0)]
        path: list[Arc] = []
        color[root] = GRAY
        while stack:
            node, i = stack[-1]
            edges = out.get(node, [])
            if i < len(edges):
                stack[-1] = (node, i + 1)
                arc = edges[i]
                c = color.get(arc.dst, WHITE)
                if c == GRAY:
                    path.append(arc)
                    j = next(k for k, e in enumerate(path) if e.src == arc.dst)
                    return path[j:]
                if c == WHITE:
                    color[arc.dst] = GRAY
                    path.append(arc)
                    stack.append((arc.dst, 0))
            else:
                color[node] = BLACK
                stack.pop()
                if path:
                    path.pop()
    return None


def _positive_cycle(vertices, arcs, lam: float) -> Optional[list[Arc]]:
    """A cycle with positive total (weight - lam*marking), if one exists.

    Bellman-Ford longest-path sweep from an implicit all-vertices source;
    an update in the |V|-th pass certifies the cycle, extracted by walking
    predecessor pointers.
    """
    dist = {v: 0.0 for v in vertices}
    parent: dict[int, Arc] = {}
    n = len(vertices)
    last = None
    for _ in range(n):
        last = None
        for arc in arcs:
            nd = dist[arc.src] + arc.weight - lam * arc.marking
            if nd > dist[arc.dst] + _RELAX_EPS:
                dist[arc.dst] = nd
                parent[arc.dst] = arc
                last = arc.dst
        if last is None:
            return None
    v = last
    for _ in range(n):
        if v not in parent:
            return None
        v = parent[v].src
    cycle = []
    start = v
    while True:
        arc = parent[v]
        cycle.append(arc)
        v = arc.src
        if v == start:
            break
    cycle.reverse()
    return cycle


def max_cycle_mean(d: RatioDigraph) -> tuple[float, CycleWitness]:
    """Maximum over directed cycles of weight / marking, with a witness.

    Acyclic digraphs report 0 with an empty witness. A cycle whose arcs
    carry no marking corresponds to deadlock and raises DeadlockError.

    Parametric ascent: starting from an arbitrary cycle's ratio, repeatedly
    search for a cycle with positive reduced weight (weight - lam*marking)
    and jump to its exact ratio; terminates at the maximum since ratios
    strictly increase through the finite set of cycle ratios.
    """
    free = _find_cycle_arcs([a for a in d.arcs if a.marking == 0])
    if free is not None:
        raise DeadlockError(
            f"token-free cycle through vertices {[a.src for a in free]}", free
        )
    seed = _find_cycle_arcs(list(d.arcs))
    if seed is None:
        return 0.0, _witness([])
    best = _witness(seed)
    while True:
        cyc = _positive_cycle(d.vertices, d.arcs, best.mean)
        if cyc is None:
            return best.mean, best
        cand = _witness(cyc)
        if cand.marking_sum == 0 or cand.mean <= best.mean + _RATIO_TOL * max(1.0, abs(best.mean)):
            return best.mean, best
        best = cand


def throughput(g: SdfGraph) -> float:
    """Guaranteed iterations per time unit: the inverse of the MCM."""
    mcm, _ = max_cycle_mean(build_ratio_digraph(g))
    return 1.0 / mcm


def first_iteration_times(g: SdfGraph, d: Optional[RatioDigraph] = None) -> dict[int, tuple[float, float]]:
    """Earliest (start, end) of each actor's first firing.

    Longest-path sweep over the zero-marking arcs, which form a DAG for
    deadlock-free graphs; initial tokens are available at time zero.
    """
    if d is None:
        d = build_ratio_digraph(g)
    zero = [a for a in d.arcs if a.marking == 0]
    incoming: dict[int, list[Arc]] = {v: [] for v in d.vertices}
    outgoing: dict[int, list[Arc]] = {v: [] for v in d.vertices}
    indeg = {v: 0 for v in d.vertices}
    for a in zero:
        incoming[a.dst].append(a)
        outgoing[a.src].append(a)
        indeg[a.dst] += 1
    ready = [v for v in d.vertices if indeg[v] == 0]
    heapq.heapify(ready)
    end: dict[int, float] = {}
    while ready:
        v = heapq.heappop(ready)
        end[v] = max(
            [g.actor(v).exec_time] + [end[a.src] + a.weight for a in incoming[v]]
        )
        for a in outgoing[v]:
            indeg[a.dst] -= 1
            if indeg[a.dst] == 0:
                heapq.heappush(ready, a.dst)
    if len(end) != len(d.vertices):
        raise DeadlockError("zero-marking subgraph is cyclic")
    return {v: (end[v] - g.actor(v).exec_time, end[v]) for v in d.vertices}


def analysis_report(g: SdfGraph) -> dict:
    """Throughput report: mcm, throughput, critical cycle, first-firing times."""
    d = build_ratio_digraph(g)
    mcm, witness = max_cycle_mean(d)
    times = first_iteration_times(g, d)
    return {
        "mcm": mcm,
        "throughput": (1.0 / mcm) if mcm > 0 else None,
        "critical_cycle": witness.actor_cycle,
        "per_actor_start_times": {str(v): times[v][0] for v in sorted(times)},
    }
