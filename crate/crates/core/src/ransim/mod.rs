//! Discrete-time LTE downlink simulator for three hard-reuse eNBs and a
//! handful of UEs: geometry, RSRP/RSRQ measurements, A2/A4 handovers and
//! rate-capped fluid traffic delivery.

mod scenario;
mod sim;

pub use scenario::{
    enb_layout, sample_scenario, ClusterSpec, EnbConfig, ScenarioError, ScenarioSpec, Waypoint,
    ENB_SPACING_M, NUM_ENBS,
};
pub use sim::{LinkMeasurement, SimError, SimEvent, SimEventKind, Simulator};

/// A planar position in metres.
pub type Point = [f64; 2];

pub(crate) fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
