//! Oracles and fixtures shared by the integration tests and the acceptance
//! runner. Each test target uses a different subset.
#![allow(dead_code)]

pub mod corpus;
pub mod gradcheck;
pub mod oracles;
