//! Two-stage adaptive dose-finding designs with unblinded sample size
//! re-estimation for single and multiple contrast tests.

pub mod bayespower;
pub mod cli;
pub mod design;
pub mod error;
pub mod freqpower;
pub mod gaussian;
pub mod roots;
pub mod simengine;

pub use error::{Result, SsrError};
