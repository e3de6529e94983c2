//! Vanishing twist near the L4 equilibrium of the planar circular restricted
//! three-body problem: regularized integration, Poincare return maps,
//! rotation numbers, an eighth-order Birkhoff normal form, and the loci of
//! twistless (reconnection) bifurcations in the `(mu, E)` plane.

pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod normalform;
pub mod rotation;
pub mod scan;
pub mod section;
pub mod twist;

pub use error::{Error, Result};
