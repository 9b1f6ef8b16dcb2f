//! Statistical multicriteria benchmarking of text-generation strategies.
//!
//! The library decides, with inferential guarantees, whether a generation
//! strategy belongs to the generalized-stochastic-dominance (GSD) front of a
//! set of competing strategies, given mixed cardinal/ordinal quality
//! evaluations, and quantifies how robust that decision is to prompts that
//! deviate from the i.i.d. sampling assumption.
//!
//! Pipeline, bottom to top:
//!
//! * [`data`] — evaluation tables (strategies × prompts × metrics), scale
//!   declarations, normalization, token-level records.
//! * [`order`] — the preference system spanned by the observed quality
//!   vectors: componentwise dominance (R1) and intensity comparisons (R2).
//! * [`lp`] — a small exact-contract simplex solver.
//! * [`gsd`] — the D statistic (worst-case expected-utility gap), the
//!   empirical GSD relation, and the non-dominated front.
//! * [`inference`] — permutation tests for pairwise dominance and the
//!   intersection-union test for front membership.
//! * [`robustness`] — p-values as a function of the number of contaminated
//!   prompts.
//! * [`metrics`] — diversity, generation perplexity, coherence, and the
//!   Q*Text aggregate with parameter fitting.
//! * [`agreement`] — inter-rater agreement statistics for ordinal ratings.
//! * [`sim`] — synthetic table generation and Monte Carlo calibration.
//! * [`report`] — reproducible report bundles (JSON, CSV, SVG).

pub mod agreement;
pub mod data;
pub mod gsd;
pub mod inference;
pub mod lp;
pub mod metrics;
pub mod order;
pub mod report;
pub mod rng;
pub mod robustness;
pub mod sim;
