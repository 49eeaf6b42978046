//! Cross-module suites: invariants as property tests, search-order oracles,
//! and the command-line contract.

mod cli;
mod support;
