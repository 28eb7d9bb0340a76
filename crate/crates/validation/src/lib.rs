//! Holds the `acceptance` test target, which runs the end-to-end checks of the
//! `coalescence` crate and prints one verdict per criterion:
//!
//! ```text
//! cargo test -p coalescence-validation --test acceptance
//! ```
//!
//! It lives in its own package so that the rest of the workspace test suite runs
//! before it.
