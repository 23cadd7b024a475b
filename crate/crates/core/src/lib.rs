//! Simulation and design toolkit for measurement-based quantum computing with
//! qudits encoded in the spatial modes of an entangled photon pair.

pub mod encoding;
pub mod feedforward;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod mplc;
pub mod scheduler;
pub mod state;
pub mod witness;

pub use encoding::{ApertureGrid, EncodingError, EncodingSpec, QuditString};
pub use graph::{
    check_two_photon_realizable, compile_graph, simulate_cluster, stabilizers, CompiledCircuit, Edge,
    GraphError, GraphState, Layout, Realizability, StabilizerTerm,
};
pub use linalg::C64;
pub use state::{
    sample_counts, spdc_state, state_fidelity, CoincidenceTable, ModeUnitary, Photon, StateError,
    TwoPhotonState,
};
pub use witness::{
    expand_witness, mub_settings, witness_exact, witness_from_counts, witness_on_mixture, MubSetting,
    WitnessError, WitnessReport,
};
pub use feedforward::{
    adaptive_oracle, build_intra_feedforward, derive_chain_from_cluster, rotation_circuit, BranchTable,
    FeedforwardError, MeasurementPattern,
};
pub use scheduler::{
    check_allocation, photon_forward_cones, photon_rounds, qubit_rounds, DependencyGraph, PhotonAllocation,
    Schedule, ScheduleError,
};
pub use metrics::{eqrr, loss_db, MetricsError, MetricsRecord};
pub use mplc::{
    compile_measurement_stack, frobenius_fidelity, gs_reconstruct, propagate, stack_matrix, wavefront_match,
    Geometry, MplcError, OpticalField, PlaneStack, TransferMatrix,
};
