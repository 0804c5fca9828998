import itertools
import math
import random

import pytest

import synth
from snncomp.errors import StallError, ValidationError
from snncomp.hardware import Binding, balance_bind, hardware_aware_transform
from snncomp.maxplus import build_ratio_digraph, max_cycle_mean
from snncomp.scheduling import (
    SingleTileSchedule,
    StaticOrderSchedule,
    derive_runtime_schedule,
    design_time_schedule,
    measured_throughput,
    random_order_schedule,
    schedule_from_json,
    schedule_to_json,
    self_timed_simulate,
    single_tile_schedule,
    trace_to_jsonl,
)
from snncomp.sdfg import Actor, Channel, SdfGraph
from test_hardware import plain_actors, small_hw


def selfloop_graph(tau=5.0):
    return SdfGraph(
        name="loop",
        actors=(Actor(0, tau),),
        channels=(Channel(0, 0, 0, 1, 1, initial_tokens=1),),
    )


# ---------------------------------------------------------------------------
# Self-timed simulation


def test_selfloop_fires_every_tau():
    tr = self_timed_simulate(selfloop_graph(), None, horizon=3)
    assert [f.end for f in tr.firings] == [5.0, 10.0, 15.0]
    assert [f.iteration for f in tr.firings] == [1, 2, 3]


def test_deadlocked_two_cycle_stalls():
    g = SdfGraph(
        name="dead",
        actors=(Actor(0, 1.0), Actor(1, 1.0)),
        channels=(Channel(0, 0, 1, 1, 1), Channel(1, 1, 0, 1, 1)),
    )
    with pytest.raises(StallError):
        self_timed_simulate(g, None, horizon=1)


def test_firing_duration_equals_exec_time():
    rng = random.Random(97)
    for _ in range(10):
        g = synth.random_sdf_graph(rng, max_actors=6)
        tr = self_timed_simulate(g, None, horizon=5)
        for f in tr.firings:
            assert f.end - f.start == pytest.approx(g.actor(f.actor).exec_time)


def test_trace_is_deterministic():
    rng = random.Random(101)
    g = synth.random_sdf_graph(rng, max_actors=7, with_hops=True)
    t1 = self_timed_simulate(g, None, horizon=20)
    t2 = self_timed_simulate(g, None, horizon=20)
    assert t1.firings == t2.firings
    assert trace_to_jsonl(t1) == trace_to_jsonl(t2)


def test_hop_latency_delays_consumer():
    g = SdfGraph(
        name="hop",
        actors=(Actor(0, 1.0), Actor(1, 1.0)),
        channels=(Channel(0, 0, 1, 1, 1, hop_latency=2.5),),
    )
    tr = self_timed_simulate(g, None, horizon=1)
    end = {f.actor: f.end for f in tr.firings}
    assert end[0] == 1.0
    assert end[1] == 4.5  # 1.0 + 2.5 hop + 1.0 exec


def test_static_order_enforces_mutual_exclusion_and_order():
    g = SdfGraph(name="g", actors=plain_actors(4), channels=())
    sched = StaticOrderSchedule({0: (2, 0), 1: (3, 1)})
    tr = self_timed_simulate(g, sched, horizon=6)
    per_tile = {}
    for f in tr.firings:
        per_tile.setdefault(f.tile, []).append(f)
    for t, firings in per_tile.items():
        firings.sort(key=lambda f: f.start)
        for a, b in zip(firings, firings[1:]):
            assert a.end <= b.start + 1e-12, "tile fired two actors at once"
        got = [f.actor for f in firings]
        seq = sched.tile_orders[t]
        assert got == list(itertools.islice(itertools.cycle(seq), len(got)))


def test_schedule_must_cover_graph():
    g = SdfGraph(name="g", actors=plain_actors(2), channels=())
    with pytest.raises(ValidationError):
        self_timed_simulate(g, StaticOrderSchedule({0: (0,)}), horizon=1)


def test_steady_state_period_matches_analysis():
    rng = random.Random(103)
    for _ in range(40):
        g = synth.random_sdf_graph(rng, max_actors=8, with_hops=True)
        mcm, _ = max_cycle_mean(build_ratio_digraph(g))
        tr = self_timed_simulate(g, None, horizon=80)
        thr = measured_throughput(tr, warmup=10)
        assert thr == pytest.approx(1.0 / mcm, rel=1e-6)


# ---------------------------------------------------------------------------
# Throughput measurement


def test_periodic_trace_measures_inverse_period():
    tr = self_timed_simulate(selfloop_graph(), None, horizon=3)
    assert measured_throughput(tr, warmup=1) == pytest.approx(0.2)


def test_insufficient_horizon_rejected():
    tr = self_timed_simulate(selfloop_graph(), None, horizon=3)
    with pytest.raises(ValidationError, match="insufficient horizon"):
        measured_throughput(tr, warmup=10)


# ---------------------------------------------------------------------------
# Design-time schedule construction


def test_singleton_tiles_get_singleton_orders():
    g = SdfGraph(name="g", actors=plain_actors(3), channels=(Channel(0, 0, 1, 1, 1),))
    hw = small_hw(num_tiles=4)
    b = Binding({0: 0, 1: 1, 2: 2})
    sched = design_time_schedule(g, b, hw)
    assert sched.tile_orders == {0: (0,), 1: (1,), 2: (2,)}


def test_equal_actors_tie_break_by_id():
    g = SdfGraph(name="g", actors=plain_actors(2), channels=())
    hw = small_hw(num_tiles=2)
    b = Binding({0: 0, 1: 0})
    sched = design_time_schedule(g, b, hw)
    assert sched.tile_orders[0] == (0, 1)


def test_design_time_order_is_optimal_on_small_instances():
    rng = random.Random(107)
    hw = small_hw(num_tiles=2, hop=0.25)
    checked = 0
    while checked < 8:
        g = synth.random_sdf_graph(rng, max_actors=6, extra_arcs=3)
        b = balance_bind(g, hw)
        if max(len(b.actors_on(t)) for t in b.tiles_used()) > 3:
            continue
        checked += 1
        sched = design_time_schedule(g, b, hw)
        best = _exhaustive_best_mcm(g, b, hw)
        got = _mcm_for_orders(g, b, hw, sched.tile_orders)
        assert got == pytest.approx(best, rel=1e-9)


def _mcm_for_orders(g, b, hw, orders):
    hwg = hardware_aware_transform(g, b, hw, orders)
    return max_cycle_mean(build_ratio_digraph(hwg))[0]


def _exhaustive_best_mcm(g, b, hw):
    from snncomp.errors import DeadlockError

    tiles = b.tiles_used()
    best = math.inf
    for combo in itertools.product(*[itertools.permutations(b.actors_on(t)) for t in tiles]):
        orders = {t: combo[i] for i, t in enumerate(tiles)}
        try:
            best = min(best, _mcm_for_orders(g, b, hw, orders))
        except DeadlockError:
            continue
    return best


# ---------------------------------------------------------------------------
# Run-time schedule derivation


def test_single_tile_binding_keeps_whole_order():
    order = SingleTileSchedule((2, 0, 1))
    b = Binding({0: 0, 1: 0, 2: 0})
    sched = derive_runtime_schedule(order, b)
    assert sched.tile_orders == {0: (2, 0, 1)}


def test_projections_are_subsequences():
    order = SingleTileSchedule((4, 2, 0, 3, 1))
    for binding in (
        Binding({0: 0, 1: 0, 2: 1, 3: 1, 4: 0}),
        Binding({0: 2, 1: 1, 2: 0, 3: 1, 4: 2}),
    ):
        sched = derive_runtime_schedule(order, binding)
        for t, seq in sched.tile_orders.items():
            positions = [order.order.index(a) for a in seq]
            assert positions == sorted(positions)
            assert sorted(seq) == binding.actors_on(t)


def test_coverage_mismatch_rejected():
    with pytest.raises(ValidationError):
        derive_runtime_schedule(SingleTileSchedule((0, 1)), Binding({0: 0}))


def test_derived_schedules_never_stall():
    rng = random.Random(109)
    hw = small_hw()
    cases = 0
    while cases < 25:
        g = synth.random_sdf_graph(rng, max_actors=7)
        single = synth.random_feasible_single_order(g, rng)
        if single is None:
            continue
        cases += 1
        b = Binding({a: rng.randrange(hw.num_tiles) for a in g.actor_ids})
        sched = derive_runtime_schedule(SingleTileSchedule(tuple(single)), b)
        hwg = hardware_aware_transform(g, b, hw, sched.tile_orders)
        tr = self_timed_simulate(hwg, sched, horizon=50)
        assert len(tr.iteration_end_times()) == 50


def test_single_tile_schedule_is_feasible_and_flattens():
    rng = random.Random(113)
    hw = small_hw()
    for _ in range(5):
        g = synth.random_sdf_graph(rng, max_actors=6)
        single = single_tile_schedule(g, hw)
        assert sorted(single.order) == g.actor_ids
        b1 = Binding({a: 0 for a in g.actor_ids})
        sched = derive_runtime_schedule(single, b1)
        hwg = hardware_aware_transform(g, b1, hw, sched.tile_orders)
        self_timed_simulate(hwg, sched, horizon=20)  # must not stall


# ---------------------------------------------------------------------------
# Random-order baseline


def test_random_order_is_seed_stable():
    g = SdfGraph(name="g", actors=plain_actors(6), channels=())
    b = Binding({a: a % 2 for a in range(6)})
    assert random_order_schedule(g, b, 42) == random_order_schedule(g, b, 42)


def test_singleton_tiles_unaffected_by_seed():
    g = SdfGraph(name="g", actors=plain_actors(2), channels=())
    b = Binding({0: 0, 1: 1})
    for seed in range(10):
        sched = random_order_schedule(g, b, seed)
        assert sched.tile_orders == {0: (0,), 1: (1,)}


def test_random_orders_cover_multiple_permutations():
    g = SdfGraph(name="g", actors=plain_actors(3), channels=())
    b = Binding({0: 0, 1: 0, 2: 0})
    orders = {random_order_schedule(g, b, seed).tile_orders[0] for seed in range(1000)}
    assert len(orders) > 1


# ---------------------------------------------------------------------------
# Ordering properties


def test_design_time_beats_or_matches_derived_runtime():
    rng = random.Random(127)
    hw = small_hw()
    cases = 0
    while cases < 10:
        g = synth.random_sdf_graph(rng, max_actors=6)
        single = synth.random_feasible_single_order(g, rng)
        if single is None:
            continue
        cases += 1
        b = balance_bind(g, hw)
        design = design_time_schedule(g, b, hw)
        derived = derive_runtime_schedule(SingleTileSchedule(tuple(single)), b)
        mcm_design = _mcm_for_orders(g, b, hw, design.tile_orders)
        mcm_derived = _mcm_for_orders(g, b, hw, derived.tile_orders)
        assert mcm_design <= mcm_derived + 1e-9
        assert 1.0 / mcm_design >= 1.0 / mcm_derived - 1e-12
        assert 1.0 / mcm_derived >= 0.0


def test_analysis_agrees_with_strict_order_simulation():
    rng = random.Random(131)
    hw = small_hw()
    for _ in range(8):
        g = synth.random_sdf_graph(rng, max_actors=6)
        b = balance_bind(g, hw)
        sched = design_time_schedule(g, b, hw)
        hwg = hardware_aware_transform(g, b, hw, sched.tile_orders)
        mcm, _ = max_cycle_mean(build_ratio_digraph(hwg))
        tr = self_timed_simulate(hwg, sched, horizon=80)
        thr = measured_throughput(tr, warmup=10)
        assert thr == pytest.approx(1.0 / mcm, rel=1e-6)
        intervals = {}
        for f in tr.firings:
            intervals.setdefault(f.tile, []).append((f.start, f.end))
        for spans in intervals.values():
            spans.sort()
            for a, b_ in zip(spans, spans[1:]):
                assert a[1] <= b_[0] + 1e-12, "crossbar fired two actors at once"


def test_schedule_json_round_trip():
    sched = StaticOrderSchedule({0: (2, 0), 3: (1,)})
    assert schedule_from_json(schedule_to_json(sched)) == sched
