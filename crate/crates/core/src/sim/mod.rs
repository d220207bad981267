//! Synthetic district-heating generator.
//!
//! A stand-in for laboratory recordings: a tree network with transport
//! delays, an on/off boiler, quadratic pipe losses and two metered
//! consumers. It is not a calibrated plant model; its contracts are the
//! power/energy identities, the sensor inventory, the operating ranges and
//! the four demand regimes.

mod physics;
mod simulate;
mod topology;

pub use physics::{accumulated_energy, mass_flow, thermal_power, CP_WATER, RHO_WATER};
pub use simulate::{
    export_benchmark, simulate, simulate_benchmark, simulate_conditions, FanSpeed, GroundTruth, MeterTrace, NoiseStd,
    OperatingCondition, SimConfig, SimOutput, MIN_EMITTED_STEPS,
};
pub use topology::{build_default_topology, Edge, NodeKind, Probe, SensorPlacement, TopoNode, TopologySpec};
