//! Query-counted, phase-tagged access to a model.
//!
//! An [`Oracle`] is the only handle attackers receive. It exposes
//! predictions and nothing else; the game revokes the before-deletion
//! oracle when it issues the after-deletion one.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::types::{Instance, Prediction, Predictor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    BeforeDeletion,
    AfterDeletion,
}

type Backend<'a> = Box<dyn FnMut(&Instance) -> Result<Prediction> + 'a>;

pub struct Oracle<'a> {
    backend: Backend<'a>,
    phase: Phase,
    queries: u64,
    revoked: bool,
}

impl<'a> Oracle<'a> {
    pub fn new(model: &'a dyn Predictor, phase: Phase) -> Self {
        Oracle::from_fn(move |x| model.predict(x), phase)
    }

    /// Oracle over an arbitrary answering procedure, e.g. a data
    /// collector's `Eval` interface.
    pub fn from_fn(f: impl FnMut(&Instance) -> Result<Prediction> + 'a, phase: Phase) -> Self {
        Oracle {
            backend: Box::new(f),
            phase,
            queries: 0,
            revoked: false,
        }
    }

    pub fn query(&mut self, instance: &Instance) -> Result<Prediction> {
        if self.revoked {
            return Err(AuditError::PhaseClosed);
        }
        let p = (self.backend)(instance)?;
        self.queries += 1;
        Ok(p)
    }

    pub fn query_count(&self) -> u64 {
        self.queries
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Closes the oracle; every later query fails with `PhaseClosed`.
    pub fn revoke(&mut self) {
        self.revoked = true;
    }

    pub fn is_revoked(&self) -> bool {
        self.revoked
    }
}

impl std::fmt::Debug for Oracle<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Oracle")
            .field("phase", &self.phase)
            .field("queries", &self.queries)
            .field("revoked", &self.revoked)
            .finish_non_exhaustive()
    }
}
