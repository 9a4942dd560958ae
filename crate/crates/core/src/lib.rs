//! Branch-and-probability-bound random search over the integer grid
//! `{1..m}^n` with Hamming-ball regions, serial or master/worker sampling,
//! and a speedup model fed by measured per-point timings.

pub mod criterion;
pub mod lanes;
pub mod objectives;
pub mod parallel;
pub mod perf;
pub mod search;
pub mod space;
