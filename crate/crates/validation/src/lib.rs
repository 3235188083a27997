//! Holds the end-to-end acceptance suite in `tests/acceptance.rs`. It lives in
//! its own package so that it runs after every other test target.
