//! Constituent-based semantic role labelling over bracketed treebanks.
//!
//! The pipeline reads role-annotated trees ([`corpus`]), extracts candidate
//! argument constituents for each predicate ([`extraction`]), describes each
//! candidate with categorical features ([`features`], optionally using word
//! clusters from [`clustering`]), and labels candidates with linear models
//! ([`classifiers`], [`labelling`]). [`evaluation`] scores the output and runs
//! cross-validation, ablation and learning-curve experiments.

pub mod classifiers;
pub mod clustering;
pub mod corpus;
pub mod evaluation;
pub mod extraction;
pub mod features;
pub mod labelling;
pub mod metrics;
pub mod synthetic;
pub mod treebank;
