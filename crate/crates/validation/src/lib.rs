//! Acceptance suite for the workspace. Everything lives in
//! `tests/acceptance.rs`, run with `cargo test -p spos-validation`.
