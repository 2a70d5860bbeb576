//! Independent reference implementations shared by the integration tests
//! and the acceptance suite. None of them call into the code under test
//! beyond plain data accessors.
#![allow(dead_code)]

pub mod dp;
pub mod fd;
pub mod gates;
pub mod metrics;
