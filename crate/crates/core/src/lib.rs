//! Gap-crossing locomotion stack for a small quadruped: terrain, contact
//! schedules, a whole-body trajectory generator, convex force MPC, a
//! reduced-order simulator, high-level policies and an evaluation harness.

pub mod gait;
pub mod model;
pub mod terrain;
pub mod wtg;
pub mod grf_mpc;
pub mod wbic;
pub mod policies;
pub mod sim;
pub mod limits;
pub mod harness;
