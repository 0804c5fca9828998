"""Input SNN model: neurons, synapses, and recorded spike activity.

Spike counts are supplied as input annotations (recorded over a stimulus
window by an external simulator); this package never simulates membrane
dynamics. Graphs are immutable after construction and safe to share.
"""

import json
from dataclasses import dataclass, field
from typing import IO, Optional, Union

from .errors import ParseError, ValidationError

_NEURON_KEYS = {"id", "spike_count", "layer"}
_SYNAPSE_KEYS = {"src", "dst", "weight", "spike_count"}
_TOP_KEYS = {"neurons", "synapses", "stimulus_duration"}


@dataclass(frozen=True)
class Neuron:
    id: int
    spike_count: int
    layer_tag: Optional[str] = None


@dataclass(frozen=True)
class Synapse:
    src: int
    dst: int
    weight: float
    spike_count: int


@dataclass(frozen=True)
class SnnGraph:
    """A validated SNN with per-neuron and per-synapse spike counts.

    ``stimulus_duration`` is the length of the recording window in time
    units; it defaults to 1.0 so spike counts read directly as rates.
    Parallel synapses between the same neuron pair are allowed and occupy
    one crosspoint each downstream.
    """

    neurons: tuple[Neuron, ...]
    synapses: tuple[Synapse, ...]
    stimulus_duration: float = 1.0
    estimated_synapse_counts: bool = False
    warnings: tuple[str, ...] = field(default_factory=tuple, compare=False)

    def __post_init__(self):
        if not self.neurons:
            raise ValidationError("no neurons")
        if self.stimulus_duration <= 0:
            raise ValidationError(
                f"stimulus_duration must be positive, got {self.stimulus_duration}"
            )
        ids = [n.id for n in self.neurons]
        seen = set()
        for i in ids:
            if i < 0:
                raise ValidationError(f"neuron id {i} is negative")
            if i in seen:
                raise ValidationError(f"duplicate neuron id {i}")
            seen.add(i)
        by_id = {n.id: n for n in self.neurons}
        for n in self.neurons:
            if n.spike_count < 0:
                raise ValidationError(f"neuron {n.id} has negative spike_count")
        fanin: dict[int, int] = {i: 0 for i in seen}
        fanout: dict[int, int] = {i: 0 for i in seen}
        for k, s in enumerate(self.synapses):
            if s.src not in seen:
                raise ValidationError(f"synapses[{k}].src references unknown neuron {s.src}")
            if s.dst not in seen:
                raise ValidationError(f"synapses[{k}].dst references unknown neuron {s.dst}")
            if s.spike_count < 0:
                raise ValidationError(f"synapses[{k}] has negative spike_count")
            if s.spike_count > by_id[s.src].spike_count:
                raise ValidationError(
                    f"synapses[{k}] carries {s.spike_count} spikes but its source "
                    f"neuron {s.src} only emits {by_id[s.src].spike_count}"
                )
            fanin[s.dst] += 1
            fanout[s.src] += 1
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_fanin", fanin)
        object.__setattr__(self, "_fanout", fanout)

    def neuron(self, nid: int) -> Neuron:
        try:
            return self._by_id[nid]
        except KeyError:
            raise ValidationError(f"unknown neuron id {nid}") from None

    def fanin(self, nid: int) -> int:
        """Number of synapses terminating at neuron ``nid``."""
        if nid not in self._fanin:
            raise ValidationError(f"unknown neuron id {nid}")
        return self._fanin[nid]

    def fanout(self, nid: int) -> int:
        if nid not in self._fanout:
            raise ValidationError(f"unknown neuron id {nid}")
        return self._fanout[nid]

    @property
    def neuron_ids(self) -> list[int]:
        return sorted(self._by_id)


def _check_unknown_keys(obj: dict, allowed: set, where: str, warnings: list, strict: bool):
    extra = sorted(set(obj) - allowed)
    if extra:
        msg = f"{where}: unknown keys {extra}"
        if strict:
            raise ParseError(msg)
        warnings.append(msg)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing required field '{key}'")
    return obj[key]


def load_snn(source: Union[bytes, str, IO], strict: bool = False) -> SnnGraph:
    """Parse the JSON SNN interchange format into a validated graph.

    Synapse spike counts may be omitted; they are then derived from the
    source neuron's count by a near-uniform integer split across its
    fanout (flagged via ``estimated_synapse_counts``). Unknown keys are
    collected as warnings, or rejected when ``strict`` is set.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ParseError("top-level value must be a JSON object")

    warnings: list[str] = []
    _check_unknown_keys(doc, _TOP_KEYS, "top-level", warnings, strict)

    raw_neurons = _require(doc, "neurons", "top-level")
    raw_synapses = doc.get("synapses", [])
    if not isinstance(raw_neurons, list) or not isinstance(raw_synapses, list):
        raise ParseError("'neurons' and 'synapses' must be arrays")
    if not raw_neurons:
        raise ParseError("no neurons")

    neurons = []
    for i, obj in enumerate(raw_neurons):
        where = f"neurons[{i}]"
        if not isinstance(obj, dict):
            raise ParseError(f"{where}: expected an object")
        _check_unknown_keys(obj, _NEURON_KEYS, where, warnings, strict)
        nid = _require(obj, "id", where)
        count = _require(obj, "spike_count", where)
        if not isinstance(nid, int) or isinstance(nid, bool):
            raise ParseError(f"{where}.id: expected an integer")
        if not isinstance(count, int) or isinstance(count, bool):
            raise ParseError(f"{where}.spike_count: expected an integer")
        neurons.append(Neuron(id=nid, spike_count=count, layer_tag=obj.get("layer")))

    counts_by_id = {n.id: n.spike_count for n in neurons}
    fanout: dict[int, list[int]] = {}
    parsed = []
    estimated = False
    for i, obj in enumerate(raw_synapses):
        where = f"synapses[{i}]"
        if not isinstance(obj, dict):
            raise ParseError(f"{where}: expected an object")
        _check_unknown_keys(obj, _SYNAPSE_KEYS, where, warnings, strict)
        src = _require(obj, "src", where)
        dst = _require(obj, "dst", where)
        weight = _require(obj, "weight", where)
        if not isinstance(src, int) or not isinstance(dst, int):
            raise ParseError(f"{where}: src and dst must be integers")
        if not isinstance(weight, (int, float)) or isinstance(weight, bool):
            raise ParseError(f"{where}.weight: expected a number")
        count = obj.get("spike_count")
        if count is not None and (not isinstance(count, int) or isinstance(count, bool)):
            raise ParseError(f"{where}.spike_count: expected an integer")
        parsed.append((src, dst, float(weight), count))
        fanout.setdefault(src, []).append(i)

    # Missing synapse counts: split the source neuron's spikes near-uniformly
    # over its outgoing synapses, remainder to the earliest-listed ones.
    synapses: list[Optional[Synapse]] = [None] * len(parsed)
    for src, indices in fanout.items():
        missing = [i for i in indices if parsed[i][3] is None]
        if not missing:
            continue
        estimated = True
        if src not in counts_by_id:
            raise ParseError(f"synapses[{missing[0]}].src references unknown neuron {src}")
        total = counts_by_id[src]
        base, extra = divmod(total, len(missing))
        for rank, i in enumerate(missing):
            s, d, w, _ = parsed[i]
            synapses[i] = Synapse(s, d, w, base + (1 if rank < extra else 0))
    for i, (s, d, w, count) in enumerate(parsed):
        if synapses[i] is None:
            synapses[i] = Synapse(s, d, w, count)

    duration = doc.get("stimulus_duration", 1.0)
    if not isinstance(duration, (int, float)) or isinstance(duration, bool):
        raise ParseError("stimulus_duration: expected a number")

    return SnnGraph(
        neurons=tuple(neurons),
        synapses=tuple(synapses),
        stimulus_duration=float(duration),
        estimated_synapse_counts=estimated,
        warnings=tuple(warnings),
    )


def save_snn(g: SnnGraph) -> bytes:
    """Serialize to the canonical form of the interchange format.

    Neurons are emitted sorted by id and synapses by (src, dst, weight,
    spike_count), so load_snn(save_snn(g)) reproduces g exactly.
    """
    doc = {
        "neurons": [
            {"id": n.id, "spike_count": n.spike_count}
            | ({"layer": n.layer_tag} if n.layer_tag is not None else {})
            for n in sorted(g.neurons, key=lambda n: n.id)
        ],
        "synapses": [
            {"src": s.src, "dst": s.dst, "weight": s.weight, "spike_count": s.spike_count}
            for s in sorted(g.synapses, key=lambda s: (s.src, s.dst, s.weight, s.spike_count))
        ],
        "stimulus_duration": g.stimulus_duration,
    }
    return json.dumps(doc, indent=2, sort_keys=True).encode("utf-8")


def canonical(g: SnnGraph) -> SnnGraph:
    """The graph with neurons and synapses in canonical (sorted) order.

    Serialization materializes derived synapse counts, so the canonical
    form always carries explicit counts (estimated flag cleared).
    """
    return SnnGraph(
        neurons=tuple(sorted(g.neurons, key=lambda n: n.id)),
        synapses=tuple(sorted(g.synapses, key=lambda s: (s.src, s.dst, s.weight, s.spike_count))),
        stimulus_duration=g.stimulus_duration,
        estimated_synapse_counts=False,
    )
