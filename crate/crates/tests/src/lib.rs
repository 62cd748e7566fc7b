//! Acceptance suite for the workcell workspace; see `tests/acceptance.rs`.
//!
//! Kept in its own package so it runs after every other test target.
