//! Generalized analytic Fourier-Feynman transforms on the product function
//! space C_{a,b}^2[0,T]: closed-form evaluators for Fresnel-type functionals
//! and an independent Monte-Carlo / quadrature verification harness.

pub mod cli;
pub mod cmspace;
pub mod error;
pub mod fresnel;
pub mod gbm;
pub mod mcharness;
pub mod timefns;

pub use cmspace::{CMElement, KernelOperator, OrthonormalBasis};
pub use error::{Error, Result};
pub use fresnel::{AtomicMeasure, Lambda, LambdaPair, PhaseFunctional};
pub use gbm::{PathSample, RngStream};
pub use mcharness::{MCEstimate, VerifyReport};
pub use timefns::{SpaceConfig, TimeFn, TimeGrid};
pub use num_complex::Complex64;
