"""Stability toolkit for hybrid ac/dc power grids under dual-port
grid-forming converter control."""

from .devices import (
    ConverterParams,
    DcBusParams,
    DcSourceParams,
    MachineParams,
    NodeRoleSets,
    TurbineParams,
    classify_nodes,
    validate_devices,
)
from .network import (
    AcSubgrid,
    DcSubgrid,
    Edge,
    GraphMatrices,
    NetworkGraph,
    SubgridPartition,
    build_network,
    graph_matrices,
    kron_reduce,
    kron_reduce_subgrid,
    partition_subgrids,
)
from .sim import DisturbanceSchedule, Trajectory, closed_form_example1, simulate
from .stability import (
    StabilityReport,
    algorithm1,
    assumption2_numeric,
    check_assumption1,
    check_condition1,
    corollary1,
    def1_partition,
    eigen_oracle,
    lasalle_derivative,
    lasalle_value,
    reduced_graph,
    verify_stability,
)
from .steady_state import (
    Equilibrium,
    converter_steady_map,
    droop_characteristic,
    eq10_residual,
    eq11_residual,
    hvdc_average_identity,
    solve_equilibrium,
)
from .system import (
    StateLayout,
    SystemModel,
    assemble,
    reachable_subspace_basis,
    save_matrix_bundle,
    to_matrix_bundle,
)

__version__ = "0.1.0"


def load_model(network_doc: dict) -> SystemModel:
    """Parse, validate, and assemble a network document in one call."""
    graph = build_network(network_doc)
    devices = validate_devices(graph)
    partition = partition_subgrids(graph)
    return assemble(partition, devices)
