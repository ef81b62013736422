use std::collections::HashMap;

use crate::env::StateId;
use crate::error::{Error, Result};

/// Feature vectors for a fixed set of states, shared by predictors and ratio models.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    id: String,
    states: Vec<StateId>,
    index: HashMap<StateId, usize>,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureTable {
    pub fn new(id: impl Into<String>, states: Vec<StateId>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if states.len() != rows.len() {
            return Err(Error::contract("one feature row per state required"));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in &rows {
            if row.len() != dim {
                return Err(Error::contract("feature rows must have equal length"));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::contract("feature values must be finite"));
            }
            data.extend_from_slice(row);
        }
        let mut index = HashMap::with_capacity(states.len());
        for (i, &s) in states.iter().enumerate() {
            if index.insert(s, i).is_some() {
                return Err(Error::contract(format!("state {s} has two feature rows")));
            }
        }
        Ok(FeatureTable { id: id.into(), states, index, dim, data })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn position(&self, state: StateId) -> Option<usize> {
        self.index.get(&state).copied()
    }

    pub fn row_at(&self, pos: usize) -> &[f64] {
        &self.data[pos * self.dim..(pos + 1) * self.dim]
    }

    pub fn row(&self, state: StateId) -> Result<&[f64]> {
        self.position(state).map(|p| self.row_at(p)).ok_or(Error::UnknownState(state))
    }

    /// Appends a constant-one column; used to make constants representable.
    pub fn with_constant(&self) -> FeatureTable {
        let rows = (0..self.states.len())
            .map(|i| {
                let mut r = self.row_at(i).to_vec();
                r.push(1.0);
                r
            })
            .collect();
        FeatureTable::new(format!("{}+1", self.id), self.states.clone(), rows).expect("valid by construction")
    }
}
