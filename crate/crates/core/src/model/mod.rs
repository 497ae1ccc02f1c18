//! Sensor geometry: planar poses and velocities, the polar measurement grid,
//! the azimuthal antenna profile, and the radar equation.

mod config;
mod pose;

pub use config::{
    cross_section_for_power, grid_from_config, received_power, GainProfile, PolarGrid, RadarConfig,
    RadarConfigBuilder,
};
pub use pose::{rotate, wrap_angle, Pose2, StampedPose, Trajectory, Vel2};
