//! Holds the workspace acceptance tests in `tests/acceptance.rs`.
