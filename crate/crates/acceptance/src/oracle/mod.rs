//! Reference implementations written from the mathematical definitions,
//! sharing no code with the library under test.

pub mod adam;
pub mod dft;
pub mod filter;
pub mod metrics;
pub mod mfcc;
pub mod split;
