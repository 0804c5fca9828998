"""snncomp: compile spiking neural networks onto tile-based neuromorphic hardware.

Pipeline: partition an SNN into crossbar-sized clusters, model the result
as a synchronous dataflow graph, bound throughput by its maximum cycle
mean, bind clusters to tiles with load balancing, construct static-order
schedules, and verify by self-timed simulation.
"""

from .errors import (
    CapacityError,
    ConsistencyError,
    DeadlockError,
    InfeasibleNeuronError,
    ParseError,
    SnnCompilerError,
    StallError,
    ValidationError,
)
from .hardware import (
    Binding,
    HardwareConfig,
    TileLoad,
    balance_bind,
    buffer_constrained_graph,
    dynapse_preset,
    hardware_aware_transform,
    scale_tiles,
    strip_hardware_edges,
    tile_load,
    utilization_report,
)
from .maxplus import (
    CycleWitness,
    RatioDigraph,
    analysis_report,
    build_ratio_digraph,
    max_cycle_mean,
    throughput,
)
from .partition import (
    Cluster,
    ClusteredSnn,
    CrossbarConstraints,
    check_clustered,
    inter_cluster_spikes,
    io_crosspoint_utilization,
    partition,
)
from .scheduling import (
    ExecutionTrace,
    SingleTileSchedule,
    StaticOrderSchedule,
    derive_runtime_schedule,
    design_time_schedule,
    measured_throughput,
    random_order_schedule,
    self_timed_simulate,
    single_tile_schedule,
)
from .sdfg import (
    Actor,
    Channel,
    SdfGraph,
    check_deadlock,
    export_dot,
    from_clustered_snn,
    repetition_vector,
)
from .snn import Neuron, SnnGraph, Synapse, load_snn, save_snn

__version__ = "0.1.0"
