//! Acceptance checks for `fran-ee`; everything lives in `tests/acceptance.rs`.
