use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Best objective value seen up to and including this iteration.
    pub best_nll: f64,
    /// Parameters achieving `best_nll`.
    pub phi: Vec<f64>,
}

/// Best-so-far history of an optimizer run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub iterations: Vec<TraceEntry>,
}

impl OptimizationTrace {
    pub(crate) fn push(&mut self, iteration: usize, best_nll: f64, phi: &[f64]) {
        self.iterations.push(TraceEntry {
            iteration,
            best_nll,
            phi: phi.to_vec(),
        });
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn last(&self) -> Option<&TraceEntry> {
        self.iterations.last()
    }

    pub fn is_monotone(&self) -> bool {
        self.iterations.windows(2).all(|w| w[1].best_nll <= w[0].best_nll)
    }
}
