//! Medial axis extraction, centerline graph and waypoint sampling.

pub mod graph;
pub mod medial;
pub mod waypoints;

pub use graph::{build_centerline_graph, Branch, NodeKind, SkeletonGraph, SkeletonNode};
pub use medial::{extract_medial_axis, MedialOptions, MedialPointSet};
pub use waypoints::{sample_waypoints, Waypoint, TIMESTEP, WaypointOptions, WaypointSequence};
