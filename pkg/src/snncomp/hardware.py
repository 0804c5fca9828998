"""Tile-based platform model, actor binding, and the hardware-aware SDFG.

A tile holds one crossbar, input/output spike buffers, and a network
interface on a 2-D mesh. Finite buffers become back-edges with initial
tokens; actors sharing a tile are serialized by a resource-order ring
carrying a single token; inter-tile channels pick up a hop latency
proportional to Manhattan distance.
"""

import json
import math
import statistics
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

from .errors import CapacityError, ParseError, ValidationError
from .partition import Cluster, ClusteredSnn, CrossbarConstraints, io_crosspoint_utilization
from .sdfg import KIND_BUFFER, KIND_DATA, KIND_ORDER, Channel, SdfGraph

_STDDEV_EPS = 1e-12


@dataclass(frozen=True)
class HardwareConfig:
    num_tiles: int
    mesh_dims: tuple[int, int]
    crossbar: CrossbarConstraints
    input_buffer_tokens: int
    output_buffer_tokens: int
    link_bandwidth: float
    hop_delay: float = 0.0
    load_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        rows, cols = self.mesh_dims
        if rows * cols != self.num_tiles:
            raise ValidationError(
                f"mesh {rows}x{cols} does not cover {self.num_tiles} tiles"
            )
        if self.num_tiles <= 0:
            raise ValidationError("num_tiles must be positive")
        if self.input_buffer_tokens <= 0 or self.output_buffer_tokens <= 0:
            raise ValidationError("buffer sizes must be positive")
        if self.link_bandwidth <= 0:
            raise ValidationError("link_bandwidth must be positive")
        if self.hop_delay < 0:
            raise ValidationError("hop_delay must be non-negative")
        if any(w < 0 for w in self.load_weights):
            raise ValidationError("load_weights must be non-negative")

    def tile_coords(self, t: int) -> tuple[int, int]:
        if not 0 <= t < self.num_tiles:
            raise ValidationError(f"unknown tile {t}")
        return t // self.mesh_dims[1], t % self.mesh_dims[1]

    def hop_distance(self, t1: int, t2: int) -> int:
        r1, c1 = self.tile_coords(t1)
        r2, c2 = self.tile_coords(t2)
        return abs(r1 - r2) + abs(c1 - c2)


@dataclass(frozen=True)
class Binding:
    actor_to_tile: dict[int, int]

    def tile_of(self, aid: int) -> int:
        return self.actor_to_tile[aid]

    def actors_on(self, t: int) -> list[int]:
        return sorted(a for a, tile in self.actor_to_tile.items() if tile == t)

    def tiles_used(self) -> list[int]:
        return sorted(set(self.actor_to_tile.values()))


@dataclass(frozen=True)
class TileLoad:
    crossbar_term: float
    buffer_term: float
    connection_term: float
    bandwidth_term: float
    total: float


def _mesh_for(num_tiles: int) -> tuple[int, int]:
    """Squarest rows x cols factorization of a tile count."""
    rows = int(math.isqrt(num_tiles))
    while num_tiles % rows:
        rows -= 1
    return rows, num_tiles // rows


def dynapse_preset(num_tiles: int = 4) -> HardwareConfig:
    """DYNAP-SE-like platform: 128x128 crossbars on a square-ish mesh.

    Buffer depths, link bandwidth, and hop delay are not published for the
    board; the values here are conservative defaults sized so that a
    crossbar read (1 time unit) dominates a mesh hop.
    """
    return HardwareConfig(
        num_tiles=num_tiles,
        mesh_dims=_mesh_for(num_tiles),
        crossbar=CrossbarConstraints(
            max_inputs=128, max_outputs=128, max_crosspoints=65536, max_buffer_tokens=2048
        ),
        input_buffer_tokens=2048,
        output_buffer_tokens=2048,
        link_bandwidth=1024.0,
        hop_delay=0.05,
    )


PRESETS = {
    "dynapse": lambda: dynapse_preset(4),
    "dynapse9": lambda: dynapse_preset(9),
    "dynapse16": lambda: dynapse_preset(16),
}


def scale_tiles(hw: HardwareConfig, num_tiles: int) -> HardwareConfig:
    """Same per-tile resources on a differently sized mesh."""
    return replace(hw, num_tiles=num_tiles, mesh_dims=_mesh_for(num_tiles))


# ---------------------------------------------------------------------------
# Tile load and binding


def _incident_data_channels(g: SdfGraph, b: Binding, t: int) -> tuple[list[Channel], list[Channel]]:
    """(inter-tile channels incident to t, all data channels)."""
    data = g.data_channels()
    incident = [
        ch
        for ch in data
        if (b.tile_of(ch.src) == t) != (b.tile_of(ch.dst) == t)
    ]
    return incident, data


def tile_load(b: Binding, t: int, g: SdfGraph, hw: HardwareConfig) -> TileLoad:
    """Weighted four-term load of one tile under a binding.

    crossbar: summed IO-port fractions of the actors placed on the tile;
    buffer: fraction of the tile's token capacity claimed; connection:
    inter-tile channels incident to the tile over all data channels;
    bandwidth: tokens per iteration crossing the tile boundary over the
    link bandwidth. The load_weights prioritize the four resources.
    """
    if not 0 <= t < hw.num_tiles:
        raise ValidationError(f"unknown tile {t}")
    actors = [g.actor(a) for a in b.actors_on(t)]
    io_capacity = hw.crossbar.max_inputs + hw.crossbar.max_outputs
    crossbar = sum(a.io_ports_used for a in actors) / io_capacity
    buffer = sum(a.state_space for a in actors) / (
        hw.input_buffer_tokens + hw.output_buffer_tokens
    )
    incident, data = _incident_data_channels(g, b, t)
    connection = len(incident) / len(data) if data else 0.0
    bandwidth = sum(ch.prod_rate for ch in incident) / hw.link_bandwidth
    a, bw, c, d = hw.load_weights
    total = a * crossbar + bw * buffer + c * connection + d * bandwidth
    return TileLoad(crossbar, buffer, connection, bandwidth, total)


def _tile_buffer_demand(g: SdfGraph, actors: Sequence[int]) -> tuple[int, int]:
    """(output-buffer tokens, input-buffer tokens) the actors need on one tile."""
    members = set(actors)
    out_demand = sum(g.actor(a).state_space for a in actors)
    in_demand = sum(ch.prod_rate for ch in g.data_channels() if ch.dst in members)
    return out_demand, in_demand


def _capacity_ok(g, hw, by_tile) -> list[int]:
    """Tiles whose buffer capacity is oversubscribed (empty when feasible)."""
    bad = []
    for t, actors in by_tile.items():
        out_d, in_d = _tile_buffer_demand(g, actors)
        if out_d > hw.output_buffer_tokens or in_d > hw.input_buffer_tokens:
            bad.append(t)
    return sorted(bad)


def balance_bind(
    g: SdfGraph,
    hw: HardwareConfig,
    allowed_tiles: Optional[Sequence[int]] = None,
) -> Binding:
    """Bind actors to tiles, greedily minimizing the load spread.

    Actors are first dealt round-robin in ascending id over the allowed
    tiles; then every actor pair on distinct tiles is swap-tested in
    ascending (id, id) order, accepting the first swap that strictly
    lowers the standard deviation of tile loads, until a full pass makes
    no change. Deterministic.

    Raises CapacityError when the per-tile spike buffers cannot admit the
    actors under any arrangement found.
    """
    tiles = sorted(allowed_tiles) if allowed_tiles is not None else list(range(hw.num_tiles))
    if not tiles:
        raise CapacityError("no tiles available")
    for t in tiles:
        if not 0 <= t < hw.num_tiles:
            raise ValidationError(f"unknown tile {t}")
    actor_ids = g.actor_ids
    assign = {a: tiles[i % len(tiles)] for i, a in enumerate(actor_ids)}
    by_tile = {t: [a for a in actor_ids if assign[a] == t] for t in tiles}

    # Round-robin can oversubscribe buffers; migrate actors from
    # oversubscribed tiles to the emptiest feasible tile before balancing.
    for _ in range(len(actor_ids)):
        bad = _capacity_ok(g, hw, by_tile)
        if not bad:
            break
        t = bad[0]
        mover = max(by_tile[t], key=lambda a: (g.actor(a).state_space, a))
        placed = False
        for cand in sorted(tiles, key=lambda x: (len(by_tile[x]), x)):
            if cand == t:
                continue
            trial = by_tile[cand] + [mover]
            out_d, in_d = _tile_buffer_demand(g, trial)
            if out_d <= hw.output_buffer_tokens and in_d <= hw.input_buffer_tokens:
                by_tile[t].remove(mover)
                by_tile[cand].append(mover)
                assign[mover] = cand
                placed = True
                break
        if not placed:
            break
    bad = _capacity_ok(g, hw, by_tile)
    if bad:
        raise CapacityError(f"tile buffers oversubscribed on tiles {bad}")

    loads = {t: tile_load(Binding(dict(assign)), t, g, hw).total for t in tiles}

    neighbors: dict[int, set[int]] = {a: set() for a in actor_ids}
    for ch in g.data_channels():
        neighbors[ch.src].add(ch.dst)
        neighbors[ch.dst].add(ch.src)

    def stddev(values):
        return statistics.pstdev(values) if len(values) > 1 else 0.0

    current = stddev(loads.values())
    improved = True
    while improved:
        improved = False
        for i, a1 in enumerate(actor_ids):
            for a2 in actor_ids[i + 1:]:
                t1, t2 = assign[a1], assign[a2]
                if t1 == t2:
                    continue
                trial = dict(assign)
                trial[a1], trial[a2] = t2, t1
                tb = Binding(trial)
                trial_by_tile = {t: tb.actors_on(t) for t in (t1, t2)}
                if _capacity_ok(g, hw, trial_by_tile):
                    continue
                # A swap shifts the connection/bandwidth terms of every
                # tile hosting a neighbor of the moved actors, so refresh
                # exactly those tiles.
                affected = {t1, t2}
                for n in neighbors[a1] | neighbors[a2]:
                    affected.add(trial[n])
                affected &= set(tiles)
                trial_loads = dict(loads)
                for t in affected:
                    trial_loads[t] = tile_load(tb, t, g, hw).total
                cand = stddev(trial_loads.values())
                if cand < current - _STDDEV_EPS:
                    assign = trial
                    loads = trial_loads
                    current = cand
                    improved = True
    return Binding(assign)


# ---------------------------------------------------------------------------
# Hardware-aware transform


def _with_hop_latency(g: SdfGraph, b: Binding, hw: HardwareConfig) -> list[Channel]:
    out = []
    for ch in g.channels:
        hops = hw.hop_distance(b.tile_of(ch.src), b.tile_of(ch.dst))
        out.append(replace(ch, hop_latency=hw.hop_delay * hops))
    return out


def _buffer_allotments(g: SdfGraph, b: Binding, hw: HardwareConfig) -> dict[int, int]:
    """Input-buffer tokens granted to each data channel at its consumer tile.

    The tile's input buffer splits evenly (floor) over the data channels
    arriving at actors on the tile, but never below one firing's worth,
    which keeps the back-edge from deadlocking its producer.
    """
    per_tile: dict[int, list[Channel]] = {}
    for ch in g.data_channels():
        per_tile.setdefault(b.tile_of(ch.dst), []).append(ch)
    allot: dict[int, int] = {}
    for _, chans in sorted(per_tile.items()):
        share = hw.input_buffer_tokens // len(chans)
        for ch in chans:
            size = max(share, ch.prod_rate)
            if size <= 0:
                raise ValidationError(f"buffer allotment for channel {ch.id} is zero")
            allot[ch.id] = size
    return allot


def buffer_constrained_graph(g: SdfGraph, b: Binding, hw: HardwareConfig) -> SdfGraph:
    """The SDFG with finite buffers (back-edges) and mesh hop latencies.

    For every data channel a reverse buffer_backedge carries the allotted
    buffer size as initial tokens: the producer claims one firing's worth
    of space at start, the consumer releases it at completion.
    """
    channels = _with_hop_latency(g, b, hw)
    allot = _buffer_allotments(g, b, hw)
    next_id = max((ch.id for ch in g.channels), default=-1) + 1
    for ch in sorted(g.data_channels(), key=lambda c: c.id):
        hops = hw.hop_distance(b.tile_of(ch.src), b.tile_of(ch.dst))
        # Credit flow: the producer claims prod_rate slots per firing, the
        # consumer returns cons_rate slots when it completes.
        channels.append(
            Channel(
                id=next_id,
                src=ch.dst,
                dst=ch.src,
                prod_rate=ch.cons_rate,
                cons_rate=ch.prod_rate,
                initial_tokens=allot[ch.id],
                kind=KIND_BUFFER,
                hop_latency=hw.hop_delay * hops,
            )
        )
        next_id += 1
    return SdfGraph(name=g.name + "+buffers", actors=g.actors, channels=tuple(channels))


def hardware_aware_transform(
    g: SdfGraph,
    b: Binding,
    hw: HardwareConfig,
    order: dict[int, Sequence[int]],
) -> SdfGraph:
    """Fold buffer limits, tile sharing, and mesh latency into the SDFG.

    ``order`` gives the static firing order per tile; tiles hosting two or
    more actors receive a resource_order ring along that order with a
    single token parked on the arc into the first actor, enforcing atomic,
    ordered crossbar execution.
    """
    for t in b.tiles_used():
        actors = b.actors_on(t)
        if sorted(order.get(t, [])) != actors:
            raise ValidationError(
                f"order for tile {t} does not cover its actors {actors}"
            )
    buffered = buffer_constrained_graph(g, b, hw)
    channels = list(buffered.channels)
    next_id = max(ch.id for ch in channels) + 1 if channels else 0
    for t in b.tiles_used():
        seq = list(order[t])
        if len(seq) < 2:
            continue
        for i, a in enumerate(seq):
            nxt = seq[(i + 1) % len(seq)]
            channels.append(
                Channel(
                    id=next_id,
                    src=a,
                    dst=nxt,
                    prod_rate=1,
                    cons_rate=1,
                    initial_tokens=1 if nxt == seq[0] else 0,
                    kind=KIND_ORDER,
                )
            )
            next_id += 1
    return SdfGraph(name=g.name + "+hw", actors=g.actors, channels=tuple(channels))


def strip_hardware_edges(g: SdfGraph) -> SdfGraph:
    """Inverse of the transform: drop added edges, zero hop latencies."""
    channels = tuple(
        replace(ch, hop_latency=0.0) for ch in g.channels if ch.kind == KIND_DATA
    )
    name = g.name
    for suffix in ("+hw", "+buffers"):
        name = name.removesuffix(suffix)
    return SdfGraph(name=name, actors=g.actors, channels=channels)


# ---------------------------------------------------------------------------
# Utilization reporting


def utilization_report(
    cs: Optional[ClusteredSnn],
    b: Binding,
    g: SdfGraph,
    hw: HardwareConfig,
) -> dict:
    """Percent utilization of tile IO, buffers, connections, and bandwidth.

    The crossbar is time-shared, so a tile's IO utilization is the peak
    over the clusters it hosts. Bandwidth uses the analyzed period of the
    given (ideally hardware-aware) graph: tokens per time unit against
    link bandwidth. ``cs`` may be None for synthetic graphs; tile IO then
    falls back to actor port annotations.
    """
    from .maxplus import build_ratio_digraph, max_cycle_mean

    clusters: dict[int, Cluster] = {}
    if cs is not None:
        clusters = {c.id: c for c in cs.clusters}

    period = 0.0
    if g.channels or g.actors:
        try:
            period, _ = max_cycle_mean(build_ratio_digraph(g))
        except ValidationError:
            period = 0.0

    io_capacity = hw.crossbar.max_inputs + hw.crossbar.max_outputs
    per_tile = {}
    for t in range(hw.num_tiles):
        actors = b.actors_on(t)
        io_pct = 0.0
        for a in actors:
            actor = g.actor(a)
            if actor.source_cluster is not None and actor.source_cluster in clusters:
                io_pct = max(io_pct, io_crosspoint_utilization(clusters[actor.source_cluster], hw.crossbar)[0])
            else:
                io_pct = max(io_pct, 100.0 * actor.io_ports_used / io_capacity)
        out_d, in_d = _tile_buffer_demand(g, actors)
        buffer_pct = 100.0 * max(
            out_d / hw.output_buffer_tokens, in_d / hw.input_buffer_tokens
        )
        incident, _ = _incident_data_channels(g, b, t)
        in_rate = sum(ch.prod_rate for ch in incident if b.tile_of(ch.dst) == t)
        out_rate = sum(ch.prod_rate for ch in incident if b.tile_of(ch.src) == t)
        in_bw = 100.0 * in_rate / (hw.link_bandwidth * period) if period > 0 else 0.0
        out_bw = 100.0 * out_rate / (hw.link_bandwidth * period) if period > 0 else 0.0
        per_tile[t] = {
            "tile_io_percent": io_pct,
            "buffer_percent": buffer_pct,
            "input_bandwidth_percent": in_bw,
            "output_bandwidth_percent": out_bw,
        }

    pairs = {
        (b.tile_of(ch.src), b.tile_of(ch.dst))
        for ch in g.data_channels()
        if b.tile_of(ch.src) != b.tile_of(ch.dst)
    }
    possible = hw.num_tiles * (hw.num_tiles - 1)
    connections_pct = 100.0 * len(pairs) / possible if possible else 0.0

    def peak(key):
        return max((v[key] for v in per_tile.values()), default=0.0)

    return {
        "per_tile": per_tile,
        "tile_io_percent": peak("tile_io_percent"),
        "buffer_percent": peak("buffer_percent"),
        "connections_percent": connections_pct,
        "input_bandwidth_percent": peak("input_bandwidth_percent"),
        "output_bandwidth_percent": peak("output_bandwidth_percent"),
    }


# ---------------------------------------------------------------------------
# Serialization


def hardware_to_json(hw: HardwareConfig) -> str:
    doc = {
        "num_tiles": hw.num_tiles,
        "mesh": list(hw.mesh_dims),
        "crossbar": {
            "max_inputs": hw.crossbar.max_inputs,
            "max_outputs": hw.crossbar.max_outputs,
            "max_crosspoints": hw.crossbar.max_crosspoints,
            "max_buffer_tokens": hw.crossbar.max_buffer_tokens,
        },
        "input_buffer_tokens": hw.input_buffer_tokens,
        "output_buffer_tokens": hw.output_buffer_tokens,
        "link_bandwidth": hw.link_bandwidth,
        "hop_delay": hw.hop_delay,
        "load_weights": list(hw.load_weights),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def hardware_from_json(text: Union[str, bytes]) -> HardwareConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    try:
        xb = doc["crossbar"]
        return HardwareConfig(
            num_tiles=doc["num_tiles"],
            mesh_dims=tuple(doc["mesh"]),
            crossbar=CrossbarConstraints(
                max_inputs=xb["max_inputs"],
                max_outputs=xb["max_outputs"],
                max_crosspoints=xb["max_crosspoints"],
                max_buffer_tokens=xb["max_buffer_tokens"],
            ),
            input_buffer_tokens=doc["input_buffer_tokens"],
            output_buffer_tokens=doc["output_buffer_tokens"],
            link_bandwidth=doc["link_bandwidth"],
            hop_delay=doc.get("hop_delay", 0.0),
            load_weights=tuple(doc.get("load_weights", (1.0, 1.0, 1.0, 1.0))),
        )
    except (KeyError, TypeError) as e:
        raise ParseError(f"malformed hardware config: {e}") from e


def binding_to_json(b: Binding) -> str:
    return json.dumps(
        {"actor_to_tile": {str(a): t for a, t in sorted(b.actor_to_tile.items())}},
        indent=2,
        sort_keys=True,
    )


def binding_from_json(text: Union[str, bytes]) -> Binding:
    try:
        doc = json.loads(text)
        return Binding({int(a): int(t) for a, t in doc["actor_to_tile"].items()})
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed binding: {e}") from e
