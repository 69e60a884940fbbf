//! Eigensets of bilinear control systems.
//!
//! For `ẋ = Ax + Σ uᵢBᵢx` with controls in a box, an eigenset is a nontrivial
//! compact set `D` whose exact-time orbit satisfies `𝒪_t(D) = e^{tR}D` for all
//! `t > 0`. This crate estimates the rate `R`, locates invariant control sets
//! of the projected system on the circle, propagates planar star sets under
//! the flow, and builds and verifies eigensets.

pub mod accessibility;
pub mod bilinear;
pub mod eigenset;
pub mod error;
pub mod matops;
pub mod spectrum;
pub mod sphere_cs;
pub mod starset;

pub use bilinear::{BilinearSystem, Dynamics, PwcControl, ShiftedSystem};
pub use error::{Error, Result};
pub use matops::SquareMatrix;
pub use starset::{ReachOptions, StarSet2};
pub use spectrum::{RateBracket, RayReturnCertificate};
pub use sphere_cs::ControlSetArc;
