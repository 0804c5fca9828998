"""Synchronous dataflow graph model of a clustered SNN.

Actors are clusters; channels carry spike tokens with equal production
and consumption rates, so one graph iteration fires every actor exactly
once. Back-edges (buffer capacity) and resource-order rings are added
later by the hardware-aware transform and share this representation.
"""

import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Optional, Union

from .errors import ConsistencyError, ValidationError
from .partition import ClusteredSnn

KIND_DATA = "data"
KIND_BUFFER = "buffer_backedge"
KIND_ORDER = "resource_order"
_KINDS = (KIND_DATA, KIND_BUFFER, KIND_ORDER)


@dataclass(frozen=True)
class Actor:
    id: int
    exec_time: float
    state_space: int = 0
    source_cluster: Optional[int] = None
    io_ports_used: int = 0

    def __post_init__(self):
        if self.exec_time <= 0:
            raise ValidationError(f"actor {self.id} has non-positive exec_time")


@dataclass(frozen=True)
class Channel:
    id: int
    src: int
    dst: int
    prod_rate: int
    cons_rate: int
    initial_tokens: int = 0
    kind: str = KIND_DATA
    hop_latency: float = 0.0

    def __post_init__(self):
        if self.prod_rate <= 0 or self.cons_rate <= 0:
            raise ValidationError(f"channel {self.id} has non-positive rate")
        if self.initial_tokens < 0:
            raise ValidationError(f"channel {self.id} has negative initial_tokens")
        if self.kind not in _KINDS:
            raise ValidationError(f"channel {self.id} has unknown kind '{self.kind}'")
        if self.hop_latency < 0:
            raise ValidationError(f"channel {self.id} has negative hop_latency")


@dataclass(frozen=True)
class SdfGraph:
    name: str
    actors: tuple[Actor, ...]
    channels: tuple[Channel, ...]

    def __post_init__(self):
        ids = set()
        for a in self.actors:
            if a.id in ids:
                raise ValidationError(f"duplicate actor id {a.id}")
            ids.add(a.id)
        chan_ids = set()
        for ch in self.channels:
            if ch.src not in ids or ch.dst not in ids:
                raise ValidationError(f"channel {ch.id} references unknown actor")
            if ch.id in chan_ids:
                raise ValidationError(f"duplicate channel id {ch.id}")
            chan_ids.add(ch.id)
        object.__setattr__(self, "_by_id", {a.id: a for a in self.actors})

    def actor(self, aid: int) -> Actor:
        return self._by_id[aid]

    @property
    def actor_ids(self) -> list[int]:
        return sorted(self._by_id)

    def in_channels(self, aid: int) -> list[Channel]:
        return [ch for ch in self.channels if ch.dst == aid]

    def out_channels(self, aid: int) -> list[Channel]:
        return [ch for ch in self.channels if ch.src == aid]

    def data_channels(self) -> list[Channel]:
        return [ch for ch in self.channels if ch.kind == KIND_DATA]


ExecTimeModel = Union[float, Callable[[int], float]]


def from_clustered_snn(
    cs: ClusteredSnn,
    exec_time_model: ExecTimeModel = 1.0,
    iteration_period_hint: float = 1.0,
    name: str = "snn",
) -> SdfGraph:
    """Build the application SDFG of a clustered SNN.

    One actor per cluster; one channel per cluster pair with nonzero spike
    traffic, with rate ceil(spikes / stimulus_duration * hint) tokens per
    iteration (at least 1). Cycles introduced by partitioning receive
    startup tokens (one firing's worth) on the lexicographically smallest
    arc of each remaining token-free cycle, until none is left.
    """
    if callable(exec_time_model):
        tau = exec_time_model
    else:
        const = float(exec_time_model)
        tau = lambda cid: const  # noqa: E731

    actors = tuple(
        Actor(
            id=c.id,
            exec_time=tau(c.id),
            state_space=c.buffer_used,
            source_cluster=c.id,
            io_ports_used=c.input_ports_used + c.output_ports_used,
        )
        for c in cs.clusters
    )
    duration = cs.graph.stimulus_duration
    channels = []
    for idx, ((ci, cj), spikes) in enumerate(sorted(cs.inter_cluster_spikes.items())):
        rate = max(1, math.ceil(spikes / duration * iteration_period_hint))
        channels.append(Channel(id=idx, src=ci, dst=cj, prod_rate=rate, cons_rate=rate))

    channels = _break_startup_deadlocks(channels)
    return SdfGraph(name=name, actors=actors, channels=tuple(channels))


def _break_startup_deadlocks(channels: list[Channel]) -> list[Channel]:
    """Place one firing's worth of tokens until no token-free cycle remains."""
    channels = list(channels)
    while True:
        starved = [ch for ch in channels if ch.initial_tokens < ch.cons_rate]
        cycle = _find_cycle(starved)
        if cycle is None:
            return channels
        target = min(cycle, key=lambda ch: (ch.src, ch.dst, ch.id))
        i = channels.index(target)
        channels[i] = replace(target, initial_tokens=target.cons_rate)


def _find_cycle(channels: list[Channel]) -> Optional[list[Channel]]:
    """A directed cycle among the given channels, or None. Deterministic."""
    out: dict[int, list[Channel]] = {}
    for ch in sorted(channels, key=lambda c: (c.src, c.dst, c.id)):
        out.setdefault(ch.src, []).append(ch)
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[int, int] = {}
    for root in sorted(out):
        if color.get(root, WHITE) != WHITE:
            continue
        # iterative DFS keeping the channel path for witness extraction
        stack: list[tuple[int, int]] = [(root, 0)]
        path: list[Channel] = []
        color[root] = GRAY
        while stack:
            node, i = stack[-1]
            edges = out.get(node, [])
            if i < len(edges):
                stack[-1] = (node, i + 1)
                ch = edges[i]
                nxt = ch.dst
                c = color.get(nxt, WHITE)
                if c == GRAY:
                    path.append(ch)
                    j = next(k for k, e in enumerate(path) if e.src == nxt)
                    return path[j:]
                if c == WHITE:
                    color[nxt] = GRAY
                    path.append(ch)
                    stack.append((nxt, 0))
            else:
                color[node] = BLACK
                stack.pop()
                if path:
                    path.pop()
    return None


def repetition_vector(g: SdfGraph) -> dict[int, int]:
    """Smallest positive integer firing counts balancing every channel.

    Solved per weakly connected component by propagating exact rational
    ratios; raises ConsistencyError naming a violating channel.
    """
    q: dict[int, Fraction] = {}
    adj: dict[int, list[tuple[Channel, bool]]] = {a: [] for a in g.actor_ids}
    for ch in g.channels:
        adj[ch.src].append((ch, True))
        adj[ch.dst].append((ch, False))

    for root in g.actor_ids:
        if root in q:
            continue
        q[root] = Fraction(1)
        component = [root]
        todo = [root]
        while todo:
            a = todo.pop()
            for ch, outgoing in adj[a]:
                other = ch.dst if outgoing else ch.src
                # prod * q[src] = cons * q[dst]
                if outgoing:
                    expected = q[a] * ch.prod_rate / ch.cons_rate
                else:
                    expected = q[a] * ch.cons_rate / ch.prod_rate
                if other in q:
                    if q[other] != expected:
                        raise ConsistencyError(
                            f"channel {ch.id} ({ch.src}->{ch.dst}) violates the "
                            f"balance equations"
                        )
                else:
                    q[other] = expected
                    component.append(other)
                    todo.append(other)
        scale = 1
        for a in component:
            scale = scale * q[a].denominator // math.gcd(scale, q[a].denominator)
        gcd = 0
        for a in component:
            gcd = math.gcd(gcd, int(q[a] * scale))
        for a in component:
            q[a] = Fraction(int(q[a] * scale) // gcd)
    return {a: int(v) for a, v in q.items()}


def check_deadlock(g: SdfGraph) -> tuple[bool, Optional[list[Channel]]]:
    """True (with None) when every cycle can make progress.

    A channel starves its consumer while it holds fewer tokens than one
    firing consumes; a cycle of starving channels can never fire. Returns
    (False, witness_cycle) in that case.
    """
    starved = [ch for ch in g.channels if ch.initial_tokens < ch.cons_rate]
    cycle = _find_cycle(starved)
    if cycle is None:
        return True, None
    return False, cycle


def export_dot(g: SdfGraph) -> str:
    """Deterministic DOT rendering; back-edges dashed, rings dotted."""
    style = {KIND_DATA: "solid", KIND_BUFFER: "dashed", KIND_ORDER: "dotted"}
    lines = [f'digraph "{g.name}" {{']
    for a in sorted(g.actors, key=lambda a: a.id):
        lines.append(f'  a{a.id} [label="actor_{a.id}\\nt={a.exec_time:g}"];')
    for ch in sorted(g.channels, key=lambda c: c.id):
        attrs = [f'label="{ch.prod_rate}"', f"style={style[ch.kind]}"]
        if ch.initial_tokens:
            attrs.append(f'taillabel="{ch.initial_tokens}"')
        lines.append(f"  a{ch.src} -> a{ch.dst} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(g: SdfGraph) -> str:
    doc = {
        "name": g.name,
        "actors": [
            {
                "id": a.id,
                "exec_time": a.exec_time,
                "state_space": a.state_space,
                "source_cluster": a.source_cluster,
                "io_ports_used": a.io_ports_used,
            }
            for a in sorted(g.actors, key=lambda a: a.id)
        ],
        "channels": [
            {
                "id": ch.id,
                "src": ch.src,
                "dst": ch.dst,
                "prod_rate": ch.prod_rate,
                "cons_rate": ch.cons_rate,
                "initial_tokens": ch.initial_tokens,
                "kind": ch.kind,
                "hop_latency": ch.hop_latency,
            }
            for ch in sorted(g.channels, key=lambda c: c.id)
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def from_json(text: Union[str, bytes]) -> SdfGraph:
    from .errors import ParseError

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    try:
        actors = tuple(
            Actor(
                id=a["id"],
                exec_time=a["exec_time"],
                state_space=a.get("state_space", 0),
                source_cluster=a.get("source_cluster"),
                io_ports_used=a.get("io_ports_used", 0),
            )
            for a in doc["actors"]
        )
        channels = tuple(
            Channel(
                id=c["id"],
                src=c["src"],
                dst=c["dst"],
                prod_rate=c["prod_rate"],
                cons_rate=c["cons_rate"],
                initial_tokens=c.get("initial_tokens", 0),
                kind=c.get("kind", KIND_DATA),
                hop_latency=c.get("hop_latency", 0.0),
            )
            for c in doc["channels"]
        )
        return SdfGraph(name=doc.get("name", "sdfg"), actors=actors, channels=channels)
    except (KeyError, TypeError) as e:
        raise ParseError(f"malformed SDFG document: {e}") from e
