//! Ledger-audited, explainable federated prediction over sealed patient
//! records.
//!
//! The crate simulates a set of institutions that register sealed patient
//! records on an append-only hash-chained [`ledger`], gate every read through
//! consent policies ([`access`]), train an additive model federatedly under a
//! plausibility penalty ([`learning`]), bind each prediction and its exact
//! Shapley explanation on-chain ([`explain`]) and score the result with a
//! ledger-derived trust objective ([`trust`]). [`harness`] wires the pieces
//! into a deterministic end-to-end workflow.

pub mod access;
pub mod canonical;
pub mod cli;
pub mod crypto;
pub mod explain;
pub mod harness;
pub mod learning;
pub mod ledger;
pub mod records;
pub mod trust;
