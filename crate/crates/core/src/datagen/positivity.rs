//! Sequential positivity diagnostics.
//!
//! For a regime anchored at hour 0, count per hour and covariate stratum how
//! many persons are at risk and how many of those have followed the regime
//! at every decision so far, including the current hour's decision.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::io::{person_trajectory, Dataset};
use crate::error::Result;
use crate::regimes::{first_departure, Regime};
use crate::scm::PatientState;

/// Covariate binning for positivity checks: FHR category crossed with
/// dilatation bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Strata {
    pub by_fhr: bool,
    /// Increasing cut points in cm; bin `i` holds dilatation below `cuts[i]`.
    pub dilatation_cuts: Vec<f64>,
}

impl Default for Strata {
    /// FHR category × dilatation tercile of the 0–10 cm range.
    fn default() -> Self {
        Strata {
            by_fhr: true,
            dilatation_cuts: vec![10.0 / 3.0, 20.0 / 3.0],
        }
    }
}

impl Strata {
    pub fn label(&self, state: &PatientState) -> String {
        let d = state.tv.dilatation();
        let bin = self.dilatation_cuts.iter().take_while(|&&c| d >= c).count();
        if self.by_fhr {
            format!("{}:dil{bin}", state.tv.fhr_category().name())
        } else {
            format!("dil{bin}")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityCell {
    pub hour: u32,
    pub stratum: String,
    pub n_at_risk: usize,
    pub n_consistent: usize,
    pub flagged: bool,
    /// At risk and consistent with the regime up to the previous hour, so
    /// that only the current decision is still open.
    pub n_followed_before: usize,
}

impl PositivityCell {
    /// At least `threshold` people reached the cell still following the
    /// regime, yet none of them followed it at this hour. Emptier cells are
    /// sparse rather than evidence of a structural zero, and cells that the
    /// regime itself makes unreachable say nothing about positivity.
    pub fn structural_zero(&self, threshold: usize) -> bool {
        self.n_consistent == 0 && self.n_followed_before >= threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub threshold: usize,
    /// Only cells with at least one person at risk, sorted by hour then stratum.
    pub cells: Vec<PositivityCell>,
}

impl PositivityReport {
    pub fn flagged(&self) -> impl Iterator<Item = &PositivityCell> {
        self.cells.iter().filter(|c| c.flagged)
    }

    pub fn all_flagged(&self) -> bool {
        self.cells.iter().all(|c| c.flagged)
    }

    pub fn structural_zeros(&self) -> impl Iterator<Item = &PositivityCell> {
        self.cells.iter().filter(|c| c.structural_zero(self.threshold))
    }

    /// CSV with columns `hour, stratum, n_at_risk, n_consistent, flagged`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["hour", "stratum", "n_at_risk", "n_consistent", "flagged"])?;
        for c in &self.cells {
            w.serialize((c.hour, &c.stratum, c.n_at_risk, c.n_consistent, c.flagged))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn positivity_report(
    ds: &Dataset,
    regime: &Regime,
    strata: &Strata,
    threshold: usize,
) -> PositivityReport {
    let mut counts: BTreeMap<(u32, String), (usize, usize, usize)> = BTreeMap::new();
    for rows in ds.persons() {
        let traj = person_trajectory(rows);
        let departure = first_departure(&traj, regime, 0);
        for state in traj.states.iter().take_while(|s| s.z()) {
            let following = departure.is_none_or(|d| state.k < d);
            let entry = counts.entry((state.k, strata.label(state))).or_default();
            entry.0 += 1;
            entry.1 += usize::from(following);
            entry.2 += usize::from(departure.is_none_or(|d| state.k <= d));
        }
    }
    let cells = counts
        .into_iter()
        .map(|((hour, stratum), (n_at_risk, n_consistent, n_followed_before))| PositivityCell {
            hour,
            stratum,
            n_at_risk,
            n_consistent,
            flagged: n_consistent < threshold,
            n_followed_before,
        })
        .collect();
    PositivityReport { threshold, cells }
}
