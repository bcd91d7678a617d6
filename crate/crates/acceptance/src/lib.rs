//! Independent oracles and fixtures for the acceptance harness
//! (`cargo test -p ausc-acceptance --test acceptance`).
//!
//! Nothing in [`oracle`] calls into `ausc-core`: every reference value is
//! recomputed from its mathematical definition.

pub mod gradcheck;
pub mod http;
pub mod oracle;
pub mod smtp;
pub mod synth;
