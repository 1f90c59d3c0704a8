//! Continuum bronchoscope: rod kinematics, actuation noise, wall contact and
//! waypoint tracking.

pub mod actuator;
pub mod contact;
pub mod params;
pub mod rod;
pub mod tracking;

pub use actuator::{apply_actuator_noise, scale_command, ActuatorState, NoiseSwitches};
pub use contact::{step_quasi_static, Contact, ContactReport, EntryPlane, Regime};
pub use params::{RobotConfig, RobotParams};
pub use rod::{rod_shape, RodShape};
pub use tracking::{track_waypoints, track_waypoints_with, CenterlinePath, TrackingOptions, TrajectoryEntry, TrajectoryLog};
