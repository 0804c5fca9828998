"""Greedy crossbar-aware partitioning of an SNN into clusters.

Neurons are taken in ascending fanin order and merged into the first
cluster (among clusters kept sorted by descending utilization) that can
still accommodate them; otherwise a new cluster is opened. Every fanin
synapse of a merged neuron occupies one crossbar input row and one
crosspoint; the neuron itself occupies one output port.
"""

import json
import math
from dataclasses import dataclass, field

import networkx as nx

from .errors import InfeasibleNeuronError, ValidationError
from .snn import SnnGraph

_MAX_REPORTED_CYCLES = 64


@dataclass(frozen=True)
class CrossbarConstraints:
    """Resource budget of one crossbar."""

    max_inputs: int
    max_outputs: int
    max_crosspoints: int
    max_buffer_tokens: int

    def __post_init__(self):
        for name in ("max_inputs", "max_outputs", "max_crosspoints", "max_buffer_tokens"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.max_crosspoints < self.max_inputs:
            raise ValidationError("max_crosspoints must be at least max_inputs")


@dataclass
class Cluster:
    id: int
    neurons: tuple[int, ...]
    input_ports_used: int = 0
    output_ports_used: int = 0
    crosspoints_used: int = 0
    buffer_used: int = 0
    internal_synapse_count: int = 0


@dataclass
class ClusteredSnn:
    graph: SnnGraph
    constraints: CrossbarConstraints
    clusters: list[Cluster]
    neuron_to_cluster: dict[int, int]
    inter_cluster_spikes: dict[tuple[int, int], int]


@dataclass
class Diagnostics:
    """Outcome of the consistency/connectivity/deadlock check on a clustering."""

    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    cycles: list[list[int]] = field(default_factory=list)
    connected: bool = True

    @property
    def ok(self) -> bool:
        return not self.errors


def io_crosspoint_utilization(c: Cluster, k: CrossbarConstraints) -> tuple[float, float]:
    """Percent IO-port and crosspoint utilization of a cluster."""
    io = 100.0 * (c.input_ports_used + c.output_ports_used) / (k.max_inputs + k.max_outputs)
    xp = 100.0 * c.crosspoints_used / k.max_crosspoints
    return io, xp


class _Packing:
    """Mutable accumulator for one cluster during the greedy pass."""

    __slots__ = ("id", "neurons", "fanin_rows", "internal", "spike_sum")

    def __init__(self, cid: int):
        self.id = cid
        self.neurons: list[int] = []
        self.fanin_rows = 0
        self.internal = 0
        self.spike_sum = 0

    def usage(self, duration: float) -> tuple[int, int, int, int]:
        buffer_used = math.ceil(self.spike_sum / duration) if self.spike_sum else 0
        return self.fanin_rows, len(self.neurons), self.fanin_rows, buffer_used

    def fits_with(self, g: SnnGraph, n: int, k: CrossbarConstraints) -> bool:
        rows = self.fanin_rows + g.fanin(n)
        outs = len(self.neurons) + 1
        spikes = self.spike_sum + g.neuron(n).spike_count
        buffer_used = math.ceil(spikes / g.stimulus_duration) if spikes else 0
        return (
            rows <= k.max_inputs
            and outs <= k.max_outputs
            and rows <= k.max_crosspoints
            and buffer_used <= k.max_buffer_tokens
        )

    def add(self, g: SnnGraph, n: int):
        self.neurons.append(n)
        self.fanin_rows += g.fanin(n)
        self.spike_sum += g.neuron(n).spike_count

    def sort_key(self, g: SnnGraph, k: CrossbarConstraints):
        inputs, outputs, crosspoints, _ = self.usage(g.stimulus_duration)
        io = (inputs + outputs) / (k.max_inputs + k.max_outputs)
        xp = crosspoints / k.max_crosspoints
        # descending utilization, ascending id on ties
        return (-io, -xp, self.id)


def partition(g: SnnGraph, k: CrossbarConstraints) -> ClusteredSnn:
    """Cluster an SNN so that every cluster fits one crossbar.

    Deterministic: neuron ties in the fanin sort break by ascending id,
    and equally utilized clusters by ascending cluster id.

    Raises InfeasibleNeuronError when a neuron cannot fit even an empty
    crossbar (fanin above max_inputs, or per-neuron buffer demand above
    the cluster budget).
    """
    order = sorted(g.neuron_ids, key=lambda n: (g.fanin(n), n))
    active: list[_Packing] = []
    retired: list[_Packing] = []
    next_id = 0
    for n in order:
        f = g.fanin(n)
        if f > k.max_inputs:
            raise InfeasibleNeuronError(
                f"neuron {n} has fanin {f} exceeding max_inputs {k.max_inputs}"
            )
        # Neurons arrive in ascending fanin order, so a cluster that fails
        # the row or output-port bound now fails for every later neuron too
        # and can be dropped from the scan list.
        target = None
        kept: list[_Packing] = []
        for p in active:
            if p.fanin_rows + f > k.max_inputs or len(p.neurons) + 1 > k.max_outputs:
                retired.append(p)
                continue
            kept.append(p)
            if target is None and p.fits_with(g, n, k):
                target = p
        active = kept
        if target is None:
            target = _Packing(next_id)
            next_id += 1
            if not target.fits_with(g, n, k):
                demand = math.ceil(g.neuron(n).spike_count / g.stimulus_duration)
                raise InfeasibleNeuronError(
                    f"neuron {n} cannot fit an empty crossbar "
                    f"(buffer demand {demand} > max_buffer_tokens {k.max_buffer_tokens})"
                )
            active.append(target)
        target.add(g, n)
        active.sort(key=lambda p: p.sort_key(g, k))

    packs = active + retired
    by_id = {p.id: p for p in packs}
    neuron_to_cluster = {}
    for p in packs:
        for n in p.neurons:
            neuron_to_cluster[n] = p.id
    for s in g.synapses:
        if neuron_to_cluster[s.src] == neuron_to_cluster[s.dst]:
            by_id[neuron_to_cluster[s.src]].internal += 1

    clusters = []
    for p in sorted(packs, key=lambda p: p.id):
        inputs, outputs, crosspoints, buffer_used = p.usage(g.stimulus_duration)
        clusters.append(
            Cluster(
                id=p.id,
                neurons=tuple(sorted(p.neurons)),
                input_ports_used=inputs,
                output_ports_used=outputs,
                crosspoints_used=crosspoints,
                buffer_used=buffer_used,
                internal_synapse_count=p.internal,
            )
        )

    cs = ClusteredSnn(
        graph=g,
        constraints=k,
        clusters=clusters,
        neuron_to_cluster=neuron_to_cluster,
        inter_cluster_spikes={},
    )
    cs.inter_cluster_spikes = inter_cluster_spikes(g, cs)
    return cs


def inter_cluster_spikes(g: SnnGraph, cs: ClusteredSnn) -> dict[tuple[int, int], int]:
    """Spike counts crossing each ordered cluster pair.

    Synapses internal to a cluster generate no channel traffic.
    """
    out: dict[tuple[int, int], int] = {}
    m = cs.neuron_to_cluster
    for s in g.synapses:
        ci, cj = m[s.src], m[s.dst]
        if ci != cj:
            out[(ci, cj)] = out.get((ci, cj), 0) + s.spike_count
    return out


def check_clustered(cs: ClusteredSnn) -> Diagnostics:
    """Consistency, connectivity, and cycle check on a clustering.

    Never raises: violations come back as structured diagnostics. Cycles
    among clusters are legal (the SDFG stage models them) but recorded.
    """
    d = Diagnostics()
    g, k = cs.graph, cs.constraints

    seen: dict[int, int] = {}
    for c in cs.clusters:
        for n in c.neurons:
            if n in seen:
                d.errors.append(f"neuron {n} appears in clusters {seen[n]} and {c.id}")
            seen[n] = c.id
    for n in g.neuron_ids:
        if n not in seen:
            d.errors.append(f"neuron {n} not covered by any cluster")
        elif cs.neuron_to_cluster.get(n) != seen[n]:
            d.errors.append(f"neuron_to_cluster disagrees with cluster membership for {n}")

    for c in cs.clusters:
        if c.input_ports_used > k.max_inputs:
            d.errors.append(
                f"cluster {c.id} uses {c.input_ports_used} input ports (max {k.max_inputs})"
            )
        if c.output_ports_used > k.max_outputs:
            d.errors.append(
                f"cluster {c.id} uses {c.output_ports_used} output ports (max {k.max_outputs})"
            )
        if c.crosspoints_used > k.max_crosspoints:
            d.errors.append(
                f"cluster {c.id} uses {c.crosspoints_used} crosspoints (max {k.max_crosspoints})"
            )
        if c.buffer_used > k.max_buffer_tokens:
            d.errors.append(
                f"cluster {c.id} needs {c.buffer_used} buffer tokens (max {k.max_buffer_tokens})"
            )

    cg = nx.MultiDiGraph()
    cg.add_nodes_from(c.id for c in cs.clusters)
    for (ci, cj), count in sorted(cs.inter_cluster_spikes.items()):
        if ci == cj:
            d.errors.append(f"inter_cluster_spikes contains self-pair ({ci},{ci})")
        else:
            cg.add_edge(ci, cj, spikes=count)

    if cg.number_of_nodes() > 1 and not nx.is_weakly_connected(cg):
        d.connected = False
        d.warnings.append("cluster graph is disconnected")

    for cyc in nx.simple_cycles(nx.DiGraph(cg)):
        pivot = cyc.index(min(cyc))
        d.cycles.append(cyc[pivot:] + cyc[:pivot])
        if len(d.cycles) >= _MAX_REPORTED_CYCLES:
            d.warnings.append(f"cycle report truncated at {_MAX_REPORTED_CYCLES}")
            break
    d.cycles.sort()
    return d


def clustered_to_json(cs: ClusteredSnn) -> str:
    k = cs.constraints
    doc = {
        "constraints": {
            "max_inputs": k.max_inputs,
            "max_outputs": k.max_outputs,
            "max_crosspoints": k.max_crosspoints,
            "max_buffer_tokens": k.max_buffer_tokens,
        },
        "clusters": [
            {
                "id": c.id,
                "neurons": list(c.neurons),
                "input_ports_used": c.input_ports_used,
                "output_ports_used": c.output_ports_used,
                "crosspoints_used": c.crosspoints_used,
                "buffer_used": c.buffer_used,
                "internal_synapse_count": c.internal_synapse_count,
                "io_percent": io_crosspoint_utilization(c, k)[0],
                "crosspoint_percent": io_crosspoint_utilization(c, k)[1],
            }
            for c in cs.clusters
        ],
        "inter_cluster_spikes": [
            {"src": ci, "dst": cj, "spikes": n}
            for (ci, cj), n in sorted(cs.inter_cluster_spikes.items())
        ],
        "estimated_synapse_counts": cs.graph.estimated_synapse_counts,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def cluster_graph_dot(cs: ClusteredSnn) -> str:
    lines = ["digraph clusters {"]
    for c in cs.clusters:
        lines.append(f'  c{c.id} [label="c{c.id} ({len(c.neurons)} neurons)"];')
    for (ci, cj), n in sorted(cs.inter_cluster_spikes.items()):
        lines.append(f'  c{ci} -> c{cj} [label="{n}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
