"""Command-line pipeline: partition, analyze, bind, schedule, simulate.

Subcommands:
  compile      full pipeline on one SNN and hardware config
  sweep-tiles  compile across several tile counts and tabulate
  admit        run-time admission onto partially occupied hardware
  analyze      throughput analysis of an SDFG JSON file
  simulate     self-timed execution of an SDFG + schedule

Exit codes: 0 success, 2 parse/validation error, 3 infeasible capacity,
4 internal invariant breach (deadlock/stall where none may occur).
"""

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import hardware as hwmod
from . import maxplus, scheduling
from . import sdfg as sdfgmod
from .errors import (
    CapacityError,
    DeadlockError,
    ParseError,
    SnnCompilerError,
    StallError,
    ValidationError,
)
from .partition import (
    check_clustered,
    cluster_graph_dot,
    clustered_to_json,
    io_crosspoint_utilization,
    partition,
)
from .snn import load_snn

MODE_DESIGN = "design_time"
MODE_RUNTIME = "run_time"
SCHED_STATIC = "static_order"
SCHED_RANDOM = "random_order"


@dataclass
class PipelineConfig:
    snn_path: str
    hw: hwmod.HardwareConfig
    mode: str = MODE_DESIGN
    scheduler: str = SCHED_STATIC
    seed: int = 0
    horizon: int = 100
    out_dir: Optional[str] = None
    strict: bool = False
    warmup: int = 10
    enum_cap: int = 1024
    exec_time: float = 1.0
    iteration_period_hint: float = 1.0
    single_schedule_path: Optional[str] = None

    def __post_init__(self):
        if self.mode not in (MODE_DESIGN, MODE_RUNTIME):
            raise ValidationError(f"unknown mode '{self.mode}'")
        if self.scheduler not in (SCHED_STATIC, SCHED_RANDOM):
            raise ValidationError(f"unknown scheduler '{self.scheduler}'")
        if self.mode == MODE_RUNTIME and self.scheduler == SCHED_RANDOM:
            raise ValidationError("run_time mode uses the derived static order, not random_order")
        if self.horizon < self.warmup + 2:
            raise ValidationError("horizon must exceed warmup by at least 2 iterations")


@dataclass
class CompileReport:
    clustering: dict
    binding_time_ms: float
    scheduling_time_ms: float
    total_time_ms: float
    mcm: float
    throughput_analyzed: float
    throughput_simulated: float
    critical_cycle: list[int]
    utilization: dict
    mode: str
    scheduler: str
    num_tiles: int
    binding: dict[int, int] = field(default_factory=dict)
    schedule: dict[int, list[int]] = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "clustering": self.clustering,
            "binding_time_ms": self.binding_time_ms,
            "scheduling_time_ms": self.scheduling_time_ms,
            "total_time_ms": self.total_time_ms,
            "mcm": self.mcm,
            "throughput_analyzed": self.throughput_analyzed,
            "throughput_simulated": self.throughput_simulated,
            "critical_cycle": self.critical_cycle,
            "utilization": self.utilization,
            "mode": self.mode,
            "scheduler": self.scheduler,
            "num_tiles": self.num_tiles,
            "binding": {str(a): t for a, t in sorted(self.binding.items())},
            "schedule": {str(t): list(s) for t, s in sorted(self.schedule.items())},
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _write(out_dir: Optional[str], name: str, text: str):
    if out_dir is None:
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(text)


def cmd_compile(
    cfg: PipelineConfig,
    allowed_tiles: Optional[Sequence[int]] = None,
) -> CompileReport:
    """Run the whole pipeline and emit artifacts plus a compile report.

    Wall-clock is recorded separately around the binding and scheduling
    phases (excluding I/O). In run_time mode the single-tile schedule is a
    precomputed design-time artifact: the timed scheduling phase performs
    only the order-preserving projection.
    """
    t_total = time.perf_counter()
    snn = load_snn(Path(cfg.snn_path).read_bytes(), strict=cfg.strict)
    cs = partition(snn, cfg.hw.crossbar)
    diag = check_clustered(cs)
    if diag.errors:
        raise SnnCompilerError(f"partition failed self-check: {diag.errors}")
    graph = sdfgmod.from_clustered_snn(
        cs, cfg.exec_time, iteration_period_hint=cfg.iteration_period_hint
    )

    # Run-time admission reuses a schedule constructed once at design time.
    single = None
    if cfg.mode == MODE_RUNTIME:
        if cfg.single_schedule_path:
            doc = json.loads(Path(cfg.single_schedule_path).read_text())
            single = scheduling.SingleTileSchedule(order=tuple(doc["order"]))
        else:
            single = scheduling.single_tile_schedule(graph, cfg.hw, enum_cap=cfg.enum_cap)

    t0 = time.perf_counter()
    binding = hwmod.balance_bind(graph, cfg.hw, allowed_tiles=allowed_tiles)
    binding_ms = (time.perf_counter() - t0) * 1000.0

    t0 = time.perf_counter()
    if cfg.mode == MODE_RUNTIME:
        sched = scheduling.derive_runtime_schedule(single, binding)
    elif cfg.scheduler == SCHED_RANDOM:
        sched = scheduling.random_order_schedule(graph, binding, cfg.seed)
    else:
        sched = scheduling.design_time_schedule(graph, binding, cfg.hw, enum_cap=cfg.enum_cap)
    scheduling_ms = (time.perf_counter() - t0) * 1000.0

    hw_graph = hwmod.hardware_aware_transform(graph, binding, cfg.hw, sched.tile_orders)
    analysis = maxplus.analysis_report(hw_graph)
    trace = scheduling.self_timed_simulate(hw_graph, sched, cfg.horizon)
    thr_sim = scheduling.measured_throughput(trace, warmup=cfg.warmup)
    util = hwmod.utilization_report(cs, binding, hw_graph, cfg.hw)
    total_ms = (time.perf_counter() - t_total) * 1000.0

    k = cfg.hw.crossbar
    report = CompileReport(
        clustering={
            "neurons": len(snn.neurons),
            "synapses": len(snn.synapses),
            "clusters": len(cs.clusters),
            "channels": len(graph.data_channels()),
            "max_io_percent": max(
                (io_crosspoint_utilization(c, k)[0] for c in cs.clusters), default=0.0
            ),
            "estimated_synapse_counts": snn.estimated_synapse_counts,
        },
        binding_time_ms=binding_ms,
        scheduling_time_ms=scheduling_ms,
        total_time_ms=total_ms,
        mcm=analysis["mcm"],
        throughput_analyzed=analysis["throughput"],
        throughput_simulated=thr_sim,
        critical_cycle=analysis["critical_cycle"],
        utilization=util,
        mode=cfg.mode,
        scheduler=cfg.scheduler,
        num_tiles=cfg.hw.num_tiles,
        binding=dict(binding.actor_to_tile),
        schedule={t: list(s) for t, s in sched.tile_orders.items()},
    )

    out = cfg.out_dir
    _write(out, "clustered.json", clustered_to_json(cs))
    _write(out, "cluster_graph.dot", cluster_graph_dot(cs))
    _write(out, "sdfg.json", sdfgmod.to_json(graph))
    _write(out, "sdfg.dot", sdfgmod.export_dot(graph))
    _write(out, "binding.json", hwmod.binding_to_json(binding))
    _write(out, "schedule.json", scheduling.schedule_to_json(sched))
    _write(out, "hw_sdfg.json", sdfgmod.to_json(hw_graph))
    _write(out, "hw_sdfg.dot", sdfgmod.export_dot(hw_graph))
    _write(out, "analysis.json", json.dumps(analysis, indent=2, sort_keys=True))
    _write(out, "trace.jsonl", scheduling.trace_to_jsonl(trace))
    if single is not None:
        _write(out, "single_schedule.json", json.dumps({"order": list(single.order)}, indent=2))
    _write(out, "report.json", report.to_json())
    return report


def cmd_sweep_tiles(cfg: PipelineConfig, tile_counts: Sequence[int]) -> dict[int, CompileReport]:
    """Compile the same SNN across hardware sizes and tabulate throughput."""
    reports = {}
    for n in tile_counts:
        sub = PipelineConfig(
            snn_path=cfg.snn_path,
            hw=hwmod.scale_tiles(cfg.hw, n),
            mode=cfg.mode,
            scheduler=cfg.scheduler,
            seed=cfg.seed,
            horizon=cfg.horizon,
            out_dir=str(Path(cfg.out_dir) / f"tiles_{n}") if cfg.out_dir else None,
            strict=cfg.strict,
            warmup=cfg.warmup,
            enum_cap=cfg.enum_cap,
            exec_time=cfg.exec_time,
            iteration_period_hint=cfg.iteration_period_hint,
        )
        reports[n] = cmd_compile(sub)
    table = {
        str(n): {
            "throughput_analyzed": r.throughput_analyzed,
            "throughput_simulated": r.throughput_simulated,
            "binding_time_ms": r.binding_time_ms,
            "scheduling_time_ms": r.scheduling_time_ms,
        }
        for n, r in reports.items()
    }
    _write(cfg.out_dir, "sweep.json", json.dumps(table, indent=2, sort_keys=True))
    return reports


def cmd_admit(existing: list[hwmod.Binding], cfg: PipelineConfig) -> CompileReport:
    """Admit an incoming application onto the tiles no other app occupies.

    Admission always runs the fast run-time path: bind to free tiles, then
    project the precomputed single-tile schedule.
    """
    if cfg.mode != MODE_RUNTIME:
        cfg = dataclasses.replace(cfg, mode=MODE_RUNTIME)
    occupied = set()
    for b in existing:
        occupied.update(b.actor_to_tile.values())
    free = [t for t in range(cfg.hw.num_tiles) if t not in occupied]
    if not free:
        raise CapacityError("all tiles are occupied by existing applications")
    return cmd_compile(cfg, allowed_tiles=free)


def _hw_from_args(args) -> hwmod.HardwareConfig:
    if args.hw and args.preset:
        raise ValidationError("--hw and --preset are mutually exclusive")
    if args.hw:
        return hwmod.hardware_from_json(Path(args.hw).read_text())
    name = args.preset or "dynapse"
    if name not in hwmod.PRESETS:
        raise ValidationError(f"unknown preset '{name}' (have: {sorted(hwmod.PRESETS)})")
    return hwmod.PRESETS[name]()


def _cfg_from_args(args) -> PipelineConfig:
    return PipelineConfig(
        snn_path=args.snn,
        hw=_hw_from_args(args),
        mode=args.mode,
        scheduler=args.scheduler,
        seed=args.seed,
        horizon=args.horizon,
        out_dir=args.out,
        strict=args.strict,
        warmup=args.warmup,
        enum_cap=args.enum_cap,
        exec_time=args.exec_time,
        single_schedule_path=getattr(args, "single_schedule", None),
    )


def _add_pipeline_args(p: argparse.ArgumentParser):
    p.add_argument("--snn", required=True, help="SNN JSON input file")
    p.add_argument("--hw", help="hardware config JSON file")
    p.add_argument("--preset", help="named hardware preset (dynapse, dynapse9, dynapse16)")
    p.add_argument("--mode", choices=[MODE_DESIGN, MODE_RUNTIME], default=MODE_DESIGN)
    p.add_argument("--scheduler", choices=[SCHED_STATIC, SCHED_RANDOM], default=SCHED_STATIC)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=100, help="simulated iterations")
    p.add_argument("--warmup", type=int, default=10, help="iterations discarded before measuring")
    p.add_argument("--out", help="artifact output directory")
    p.add_argument("--strict", action="store_true", help="escalate input warnings to errors")
    p.add_argument("--enum-cap", dest="enum_cap", type=int, default=1024)
    p.add_argument("--exec-time", dest="exec_time", type=float, default=1.0,
                   help="crossbar read latency per firing (time units)")
    p.add_argument("--single-schedule", dest="single_schedule",
                   help="precomputed single-tile schedule JSON (run_time mode)")


def _summary(report: CompileReport) -> str:
    lines = [
        f"clusters: {report.clustering['clusters']}  channels: {report.clustering['channels']}",
        f"mcm: {report.mcm:.6g}  throughput: {report.throughput_analyzed:.6g} "
        f"(simulated {report.throughput_simulated:.6g})",
        f"binding: {report.binding_time_ms:.3f} ms  scheduling: {report.scheduling_time_ms:.3f} ms",
        f"tile IO {report.utilization['tile_io_percent']:.2f}%  "
        f"buffer {report.utilization['buffer_percent']:.2f}%  "
        f"connections {report.utilization['connections_percent']:.2f}%",
    ]
    return "\n".join(lines)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="snncomp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_compile = sub.add_parser("compile", help="run the full pipeline")
    _add_pipeline_args(p_compile)

    p_sweep = sub.add_parser("sweep-tiles", help="compile across tile counts")
    _add_pipeline_args(p_sweep)
    p_sweep.add_argument("--tiles", type=int, nargs="+", required=True)

    p_admit = sub.add_parser("admit", help="admit onto partially occupied hardware")
    _add_pipeline_args(p_admit)
    p_admit.add_argument(
        "--occupied", action="append", default=[],
        help="binding JSON of an already-running application (repeatable)",
    )

    p_analyze = sub.add_parser("analyze", help="throughput analysis of an SDFG JSON")
    p_analyze.add_argument("--sdfg", required=True)
    p_analyze.add_argument("--out")

    p_sim = sub.add_parser("simulate", help="self-timed execution of an SDFG")
    p_sim.add_argument("--sdfg", required=True)
    p_sim.add_argument("--schedule", help="static-order schedule JSON (default: unconstrained)")
    p_sim.add_argument("--horizon", type=int, default=100)
    p_sim.add_argument("--out")

    args = parser.parse_args(argv)
    try:
        if args.command == "compile":
            report = cmd_compile(_cfg_from_args(args))
            print(_summary(report))
        elif args.command == "sweep-tiles":
            reports = cmd_sweep_tiles(_cfg_from_args(args), args.tiles)
            for n, r in sorted(reports.items()):
                print(f"tiles={n:3d}  throughput={r.throughput_analyzed:.6g}  "
                      f"simulated={r.throughput_simulated:.6g}")
        elif args.command == "admit":
            existing = [
                hwmod.binding_from_json(Path(p).read_text()) for p in args.occupied
            ]
            cfg = _cfg_from_args(args)
            cfg.mode = MODE_RUNTIME
            report = cmd_admit(existing, cfg)
            print(_summary(report))
        elif args.command == "analyze":
            graph = sdfgmod.from_json(Path(args.sdfg).read_text())
            try:
                analysis = maxplus.analysis_report(graph)
            except DeadlockError as e:
                analysis = {"deadlock": True, "detail": str(e)}
            text = json.dumps(analysis, indent=2, sort_keys=True)
            if args.out:
                _write(args.out, "analysis.json", text)
            print(text)
        elif args.command == "simulate":
            graph = sdfgmod.from_json(Path(args.sdfg).read_text())
            live, witness = sdfgmod.check_deadlock(graph)
            if not live:
                raise DeadlockError(
                    f"input SDFG deadlocks on channels {[ch.id for ch in witness]}", witness
                )
            sched = None
            if args.schedule:
                sched = scheduling.schedule_from_json(Path(args.schedule).read_text())
            trace = scheduling.self_timed_simulate(graph, sched, args.horizon)
            text = scheduling.trace_to_jsonl(trace)
            if args.out:
                _write(args.out, "trace.jsonl", text)
            else:
                sys.stdout.write(text)
    except (ParseError, ValidationError, DeadlockError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CapacityError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return 3
    except (StallError, SnnCompilerError) as e:
        print(f"internal: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
