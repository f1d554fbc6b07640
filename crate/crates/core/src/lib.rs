//! Dynamic output feedback pole placement for linear MIMO plants.
//!
//! The pipeline samples the plant in the frequency domain, solves the
//! pole-placement intersection conditions by homotopy continuation,
//! realizes each compensator transfer function `V(s) U(s)^{-1}` as a
//! state-space tuple `(F, G, H, K)`, and verifies the closed loop.
//! Supporting symbolic-numeric machinery (numerical GCD by root matching,
//! numerical Smith normal form) lives in [`gcd`] and [`polymat`].

pub mod error;
pub mod gcd;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod plant;
pub mod poly;
pub mod polymat;
pub mod realize;
pub mod synth;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

pub use pipeline::{QChoice, RunConfig, RunReport};
pub use plant::{ProblemClass, ProblemKind, StateSpace};
pub use poly::{Poly, RootSet};
pub use polymat::{PolyMatrix, RationalPolyMatrix, SmithForm};
pub use realize::{Compensator, TransferPair};
pub use tolerances::Tolerances;
