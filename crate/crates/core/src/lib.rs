//! Leader-follower formation control for swarms of fixed-wing UAVs on SE(3).

pub mod controller;
pub mod error;
pub mod feasibility;
pub mod lie;
pub mod sim;
pub mod topology;
pub mod uav;

pub use error::{Error, Result};
pub use lie::{Pose, Rotation, Twist, Vec3};
