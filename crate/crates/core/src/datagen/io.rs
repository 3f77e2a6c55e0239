//! Person-hour records and their JSON-lines storage.
//!
//! One JSON object per line with the columns `person_id, k, maternal_age,
//! parity, history_preterm, fhr, brady_persist, dilatation, sbp, dbp, a, z,
//! y, born`. Continuous values are recorded at measurement precision (FHR and
//! blood pressure to 0.1, dilatation to 0.01, age to 0.1), so a write/read
//! round trip is exact. On the coarse scale `fhr`, `sbp` and `dbp` are
//! category names and dilatation is a whole number.
//!
//! For an at-risk row that is followed by another row, `a` is the action
//! taken during that hour. For the final row it is the intervention status.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::{
    Action, BaselineCovariates, BpLevel, CoarseCell, ContinuousVitals, FhrCategory, Mode,
    PatientState, TimeVaryingCovariates, Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fhr {
    Bpm(f64),
    Category(FhrCategory),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bp {
    MmHg(f64),
    Level(BpLevel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonHour {
    pub person_id: u64,
    pub k: u32,
    pub maternal_age: f64,
    pub parity: u8,
    pub history_preterm: bool,
    pub fhr: Fhr,
    pub brady_persist: bool,
    pub dilatation: f64,
    pub sbp: Bp,
    pub dbp: Bp,
    pub a: u8,
    pub z: u8,
    pub y: u8,
    pub born: bool,
}

impl PersonHour {
    pub fn from_state(person_id: u64, state: &PatientState, action: Option<Action>) -> Self {
        let (fhr, brady_persist, dilatation, sbp, dbp) = match &state.tv {
            TimeVaryingCovariates::Continuous(v) => (
                Fhr::Bpm(v.fhr),
                v.brady_persist,
                v.dilatation,
                Bp::MmHg(v.sbp),
                Bp::MmHg(v.dbp),
            ),
            TimeVaryingCovariates::Coarse(c) => (
                Fhr::Category(c.fhr),
                c.fhr == FhrCategory::BradycardiaPersistent,
                f64::from(c.dilatation),
                Bp::Level(c.sbp),
                Bp::Level(c.dbp),
            ),
        };
        PersonHour {
            person_id,
            k: state.k,
            maternal_age: state.baseline.maternal_age,
            parity: state.baseline.parity,
            history_preterm: state.baseline.history_preterm,
            fhr,
            brady_persist,
            dilatation,
            sbp,
            dbp,
            a: action.unwrap_or(state.a).as_u8(),
            z: u8::from(state.z()),
            y: u8::from(state.y),
            born: state.born,
        }
    }

    pub fn mode(&self) -> Mode {
        match self.fhr {
            Fhr::Bpm(_) => Mode::Continuous,
            Fhr::Category(_) => Mode::Coarse,
        }
    }

    pub fn at_risk(&self) -> bool {
        self.z == 1
    }

    pub fn action(&self) -> Action {
        Action::from_u8(self.a).unwrap_or(Action::Vaginal)
    }

    fn covariates(&self) -> std::result::Result<TimeVaryingCovariates, String> {
        match (self.fhr, self.sbp, self.dbp) {
            (Fhr::Bpm(fhr), Bp::MmHg(sbp), Bp::MmHg(dbp)) => {
                Ok(TimeVaryingCovariates::Continuous(ContinuousVitals {
                    fhr,
                    brady_persist: self.brady_persist,
                    dilatation: self.dilatation,
                    sbp,
                    dbp,
                }))
            }
            (Fhr::Category(fhr), Bp::Level(sbp), Bp::Level(dbp)) => {
                if self.dilatation.fract() != 0.0 || !(0.0..=10.0).contains(&self.dilatation) {
                    return Err(format!(
                        "coarse dilatation must be a whole number in 0..=10, got {}",
                        self.dilatation
                    ));
                }
                if self.brady_persist != (fhr == FhrCategory::BradycardiaPersistent) {
                    return Err("brady_persist disagrees with the FHR category".into());
                }
                Ok(TimeVaryingCovariates::Coarse(CoarseCell {
                    fhr,
                    dilatation: self.dilatation as u8,
                    sbp,
                    dbp,
                }))
            }
            _ => Err("continuous and categorical covariates mixed in one row".into()),
        }
    }

    /// The observed state this row records.
    pub fn to_state(&self) -> PatientState {
        PatientState {
            k: self.k,
            baseline: BaselineCovariates {
                maternal_age: self.maternal_age,
                parity: self.parity,
                history_preterm: self.history_preterm,
            },
            tv: self.covariates().expect("validated row"),
            a: if self.at_risk() { Action::Vaginal } else { self.action() },
            born: self.born,
            y: self.y == 1,
        }
    }
}

/// Person-hour records sorted by person and hour.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    mode: Mode,
    rows: Vec<PersonHour>,
}

impl Dataset {
    pub fn from_trajectories(mode: Mode, trajectories: &[Trajectory]) -> Self {
        let mut rows = Vec::with_capacity(trajectories.iter().map(|t| t.states.len()).sum());
        for (pid, t) in trajectories.iter().enumerate() {
            for (j, s) in t.states.iter().enumerate() {
                rows.push(PersonHour::from_state(pid as u64, s, t.actions.get(j).copied()));
            }
        }
        Dataset { mode, rows }
    }

    /// Validate and sort rows given in file order.
    pub fn from_rows(rows: Vec<PersonHour>) -> Result<Self> {
        Self::from_numbered_rows(rows.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect())
    }

    /// Validate and sort rows paired with their source line numbers, which
    /// appear in error messages.
    pub fn from_numbered_rows(mut rows: Vec<(usize, PersonHour)>) -> Result<Self> {
        rows.sort_by_key(|(_, r)| (r.person_id, r.k));
        let (lines, rows): (Vec<usize>, Vec<PersonHour>) = rows.into_iter().unzip();
        let mode = rows.first().map(PersonHour::mode).unwrap_or_default();
        validate(&rows, &lines, mode)?;
        Ok(Dataset { mode, rows })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn rows(&self) -> &[PersonHour] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows grouped by person.
    pub fn persons(&self) -> impl Iterator<Item = &[PersonHour]> {
        self.rows.chunk_by(|a, b| a.person_id == b.person_id)
    }

    pub fn n_persons(&self) -> usize {
        self.persons().count()
    }

    /// Keep only persons for which `keep(person_id)` holds.
    pub fn filter_persons(&self, keep: impl Fn(u64) -> bool) -> Dataset {
        Dataset {
            mode: self.mode,
            rows: self.rows.iter().filter(|r| keep(r.person_id)).cloned().collect(),
        }
    }

    /// Split by person id into (train, test) with roughly `train_fraction` in train.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let in_train = |pid: u64| {
            let h = crate::rng::derive_seed(seed, &[pid]);
            (h as f64 / u64::MAX as f64) < train_fraction
        };
        (self.filter_persons(in_train), self.filter_persons(|p| !in_train(p)))
    }
}

fn validate(rows: &[PersonHour], lines: &[usize], mode: Mode) -> Result<()> {
    let mut start = 0;
    while start < rows.len() {
        let pid = rows[start].person_id;
        let mut end = start;
        while end < rows.len() && rows[end].person_id == pid {
            end += 1;
        }
        validate_person(&rows[start..end], &lines[start..end], mode)?;
        start = end;
    }
    Ok(())
}

fn validate_person(rows: &[PersonHour], lines: &[usize], mode: Mode) -> Result<()> {
    let fail = |i: usize, hour: u32, msg: String| Error::DatasetInvariant {
        person_id: rows[i].person_id,
        hour,
        message: format!("{msg} (line {})", lines[i]),
    };
    for (i, r) in rows.iter().enumerate() {
        if r.mode() != mode {
            return Err(fail(i, r.k, "scale differs from the rest of the dataset".into()));
        }
        r.covariates().map_err(|m| fail(i, r.k, m))?;
        if r.a > 1 || r.z > 1 || r.y > 1 {
            return Err(fail(i, r.k, "a, z and y must be 0 or 1".into()));
        }
        if (r.z == 1) != (!r.born && r.y == 0) {
            return Err(fail(i, r.k, "z must equal 1 exactly when not born and y = 0".into()));
        }
        let expected_k = if i == 0 { 0 } else { rows[i - 1].k + 1 };
        if r.k != expected_k {
            let msg = if i > 0 && r.k == rows[i - 1].k {
                "duplicate hour".to_string()
            } else {
                format!("gap: hour {expected_k} is missing")
            };
            return Err(fail(i, expected_k.min(r.k), msg));
        }
        if i > 0 {
            let prev = &rows[i - 1];
            if prev.z == 0 {
                return Err(fail(i, r.k, "row after absorption".into()));
            }
            if r.a < prev.a {
                return Err(fail(i, r.k, "intervention status decreased (a went from 1 to 0)".into()));
            }
            if prev.a == 1 && !r.born {
                return Err(fail(i, r.k, "cesarean started but birth not recorded".into()));
            }
            if r.dilatation < prev.dilatation {
                return Err(fail(i, r.k, "dilatation decreased".into()));
            }
            if (prev.maternal_age, prev.parity, prev.history_preterm)
                != (r.maternal_age, r.parity, r.history_preterm)
            {
                return Err(fail(i, r.k, "baseline covariates changed".into()));
            }
        }
    }
    Ok(())
}

/// Rebuild the trajectory of one person from their rows.
pub fn person_trajectory(rows: &[PersonHour]) -> Trajectory {
    let states: Vec<PatientState> = rows.iter().map(PersonHour::to_state).collect();
    let actions = rows[..rows.len().saturating_sub(1)]
        .iter()
        .map(PersonHour::action)
        .collect();
    Trajectory { states, actions }
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in &ds.rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PersonHour = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push((i + 1, row));
    }
    Dataset::from_numbered_rows(rows)
}
