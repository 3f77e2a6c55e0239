//! Feature maps shared by the estimators.
//!
//! Continuous data use main effects of the current state. Coarse data use
//! one parameter per observed (cell, parity group) combination, which makes
//! every fit saturated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::{CoarseCell, PatientState, SBP_HIGH};

pub const STATE_FEATURES: [&str; 10] = [
    "intercept",
    "maternal_age",
    "parity",
    "history_preterm",
    "fhr_abnormal",
    "brady_persist",
    "dilatation",
    "sbp_high",
    "sbp",
    "dbp",
];

/// Main-effects row for a continuous-scale state.
pub fn state_features(state: &PatientState) -> [f64; 10] {
    let b = &state.baseline;
    let (sbp, dbp) = match state.tv.as_continuous() {
        Some(v) => (v.sbp, v.dbp),
        None => {
            let c = state.cell().expect("coarse or continuous");
            (
                if c.sbp.index() == 1 { SBP_HIGH } else { 140.0 },
                if c.dbp.index() == 1 { 100.0 } else { 85.0 },
            )
        }
    };
    [
        1.0,
        b.maternal_age,
        f64::from(b.parity),
        f64::from(u8::from(b.history_preterm)),
        f64::from(u8::from(state.fhr_abnormal())),
        f64::from(u8::from(state.tv.brady_persist())),
        state.tv.dilatation(),
        f64::from(u8::from(state.tv.sbp_high())),
        sbp,
        dbp,
    ]
}

/// Saturation key of a coarse state: its cell and whether parity is at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub cell: CoarseCell,
    pub multiparous: bool,
}

impl CellKey {
    pub fn of(state: &PatientState) -> Result<Self> {
        let cell = state.cell().ok_or(Error::WrongMode { expected: "coarse" })?;
        Ok(CellKey {
            cell,
            multiparous: state.baseline.multiparous(),
        })
    }

    pub fn name(&self) -> String {
        format!(
            "{}/dil{}/sbp_{}/dbp_{}/{}",
            self.cell.fhr.name(),
            self.cell.dilatation,
            if self.cell.sbp.index() == 1 { "high" } else { "normal" },
            if self.cell.dbp.index() == 1 { "high" } else { "normal" },
            if self.multiparous { "multiparous" } else { "nulliparous" }
        )
    }
}

/// Per-key means of a [0, 1] response: the saturated maximum-likelihood fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellMeans {
    #[serde(with = "entries")]
    cells: BTreeMap<CellKey, (f64, usize)>,
}

mod entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        key: CellKey,
        sum: f64,
        n: usize,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<CellKey, (f64, usize)>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Entry> = m
            .iter()
            .map(|(k, &(sum, n))| Entry { key: *k, sum, n })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<CellKey, (f64, usize)>, D::Error> {
        let v: Vec<Entry> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|e| (e.key, (e.sum, e.n))).collect())
    }
}

impl CellMeans {
    pub fn add(&mut self, key: CellKey, value: f64) {
        let e = self.cells.entry(key).or_insert((0.0, 0));
        e.0 += value;
        e.1 += 1;
    }

    pub fn get(&self, key: &CellKey) -> Option<(f64, usize)> {
        self.cells.get(key).map(|&(sum, n)| (sum / n as f64, n))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn n_rows(&self) -> usize {
        self.cells.values().map(|x| x.1).sum()
    }

    /// Mean over all rows.
    pub fn overall(&self) -> Option<f64> {
        let (sum, n) = self
            .cells
            .values()
            .fold((0.0, 0), |acc, &(s, n)| (acc.0 + s, acc.1 + n));
        (n > 0).then(|| sum / n as f64)
    }

    /// Mean over all rows sharing `key.cell`, pooling parity groups.
    pub fn pooled(&self, key: &CellKey) -> Option<(f64, usize)> {
        let (sum, n) = [false, true]
            .iter()
            .filter_map(|&m| self.cells.get(&CellKey { cell: key.cell, multiparous: m }))
            .fold((0.0, 0), |acc, &(s, n)| (acc.0 + s, acc.1 + n));
        (n > 0).then(|| (sum / n as f64, n))
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellKey, f64, usize)> + '_ {
        self.cells.iter().map(|(k, &(s, n))| (*k, s / n as f64, n))
    }
}

/// Binomial standard error with the proportion kept half an observation away
/// from 0 and 1.
pub fn proportion_se(p: f64, n: usize) -> f64 {
    let n = n.max(1) as f64;
    let q = p.clamp(0.5 / n, 1.0 - 0.5 / n);
    (q * (1.0 - q) / n).sqrt()
}
