//! Deletion-inference and deletion-reconstruction audits for machine
//! unlearning.
//!
//! Learners and exact unlearning by retraining live in [`learners`] and
//! [`unlearning`]; black-box oracles in [`oracle`]; attacks in [`attacks`];
//! the seeded security games that score them in [`games`]; the
//! deletion-compliance protocol in [`compliance`]; datasets in [`data`];
//! and the config-driven runner in [`cli`].

// `!(x >= 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod cli;
pub mod compliance;
pub mod data;
pub mod error;
pub mod games;
pub mod learners;
pub mod oracle;
pub mod rng;
pub mod types;
pub mod unlearning;
