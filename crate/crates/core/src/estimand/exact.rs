//! Exact evaluation on the finite coarse state space by backward induction.
//!
//! With cell `c` at hour `j` under a regime that starts a cesarean with
//! probability `q`, the risk of the outcome by hour `H` is
//!
//! ```text
//! V(c, H) = 0
//! V(c, j) = q·surgical(c) + (1 − q)·[hazard(c) + (1 − hazard(c))·Σ P(c' | c)·V(c', j + 1)]
//! ```
//!
//! where the sum runs over successors still in labor (dilatation below 10).
//! Because a cesarean ends labor, every at-risk state reached after the
//! anchor has had only vaginal hours, so a dynamic rule's "flag seen so far"
//! reduces to the flag of the current state.

use super::oracle::check_inputs;
use super::{EstimandSpec, Method, RiskEstimate};
use crate::error::{Error, Result};
use crate::regimes::{Regime, UsualCare};
use crate::scm::{
    coarse, Action, BaselineCovariates, CoarseCell, Dynamics, Mode, PatientState, Scm,
    TimeVaryingCovariates,
};

/// Time-homogeneous finite-state mechanics, as tables over coarse cells.
pub trait CoarseKernel: Dynamics {
    fn hazard(&self, cell: &CoarseCell) -> f64;
    fn surgical(&self, cell: &CoarseCell) -> f64;
    /// Distribution of the next cell under continued labor.
    fn next_cells(&self, cell: &CoarseCell, multiparous: bool) -> Vec<(CoarseCell, f64)>;
    fn initial_cells(&self) -> Vec<(CoarseCell, f64)>;
    fn multiparous_prob(&self) -> f64;
}

impl CoarseKernel for Scm {
    fn hazard(&self, cell: &CoarseCell) -> f64 {
        coarse::in_labor_hazard(&self.config().coarse, cell)
    }

    fn surgical(&self, cell: &CoarseCell) -> f64 {
        coarse::surgical_risk(&self.config().coarse, cell)
    }

    fn next_cells(&self, cell: &CoarseCell, multiparous: bool) -> Vec<(CoarseCell, f64)> {
        coarse::next_cell_distribution(&self.config().coarse, cell, multiparous)
    }

    fn initial_cells(&self) -> Vec<(CoarseCell, f64)> {
        coarse::initial_cell_distribution(&self.config().coarse)
    }

    fn multiparous_prob(&self) -> f64 {
        self.config().baseline.multiparous_prob()
    }
}

fn at_risk_state(k: u32, baseline: BaselineCovariates, cell: CoarseCell) -> PatientState {
    PatientState {
        k,
        baseline,
        tv: TimeVaryingCovariates::Coarse(cell),
        a: Action::Vaginal,
        born: false,
        y: false,
    }
}

/// Successor tables for every cell still in labor.
fn transition_cache<K: CoarseKernel + ?Sized>(kernel: &K, multiparous: bool) -> Vec<Vec<(usize, f64)>> {
    CoarseCell::all()
        .map(|cell| {
            if cell.dilatation >= 10 {
                return Vec::new();
            }
            kernel
                .next_cells(&cell, multiparous)
                .into_iter()
                .map(|(c, p)| (c.index(), p))
                .collect()
        })
        .collect()
}

/// Estimand values for every coarse cell at every hour from the anchor to the
/// horizon, for one baseline.
#[derive(Debug, Clone)]
pub struct ValueTable {
    anchor: u32,
    horizon: u32,
    /// `values[j - anchor][cell index]`; NaN where the regime cannot be evaluated.
    values: Vec<Vec<f64>>,
    failure: Option<String>,
}

impl ValueTable {
    pub fn compute<K: CoarseKernel + ?Sized>(
        kernel: &K,
        spec: &EstimandSpec,
        baseline: BaselineCovariates,
        usual_care: Option<&dyn UsualCare>,
    ) -> Result<Self> {
        if kernel.mode() != Mode::Coarse {
            return Err(Error::WrongMode { expected: "coarse" });
        }
        spec.validate()?;
        let anchor = spec.moment_of_use;
        let horizon = spec.effective_horizon(kernel.horizon()).max(anchor);
        let next = transition_cache(kernel, baseline.multiparous());
        let hours = (horizon - anchor) as usize;
        let mut values = vec![vec![0.0; CoarseCell::COUNT]; hours + 1];
        let mut failure = None;
        for j in (anchor..horizon).rev() {
            let rel = (j - anchor) as usize;
            let (head, tail) = values.split_at_mut(rel + 1);
            let later = &tail[0];
            let now = &mut head[rel];
            for cell in CoarseCell::all().filter(|c| c.dilatation < 10) {
                let state = at_risk_state(j, baseline, cell);
                let q = match spec.regime.cesarean_probability(j - anchor, &state, usual_care) {
                    Ok(q) => q,
                    Err(e @ (Error::MissingUsualCare | Error::InvalidRegime(_))) => return Err(e),
                    Err(e) => {
                        failure.get_or_insert_with(|| e.to_string());
                        now[cell.index()] = f64::NAN;
                        continue;
                    }
                };
                let mut v = 0.0;
                if q > 0.0 {
                    v += q * kernel.surgical(&cell);
                }
                if q < 1.0 {
                    let h = kernel.hazard(&cell);
                    let mut cont = 0.0;
                    for &(ci, p) in &next[cell.index()] {
                        let later_v = later[ci];
                        if later_v != 0.0 {
                            cont += p * later_v;
                        }
                    }
                    v += (1.0 - q) * (h + (1.0 - h) * cont);
                }
                now[cell.index()] = v;
            }
        }
        Ok(ValueTable {
            anchor,
            horizon,
            values,
            failure,
        })
    }

    pub fn anchor(&self) -> u32 {
        self.anchor
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    /// Risk by the horizon for an at-risk person in `cell` at hour `hour`.
    pub fn value(&self, hour: u32, cell: &CoarseCell) -> Result<f64> {
        if hour < self.anchor || hour > self.horizon {
            return Err(Error::InvalidEstimand(format!(
                "hour {hour} outside the table range {}..={}",
                self.anchor, self.horizon
            )));
        }
        let v = self.values[(hour - self.anchor) as usize][cell.index()];
        if v.is_nan() {
            return Err(Error::InvalidRegime(
                self.failure.clone().unwrap_or_else(|| "regime undefined".into()),
            ));
        }
        Ok(v)
    }
}

/// Cells that can be occupied at risk at hour `hour`.
pub fn reachable_cells<K: CoarseKernel + ?Sized>(
    kernel: &K,
    multiparous: bool,
    hour: u32,
) -> Vec<bool> {
    let mut reach = vec![false; CoarseCell::COUNT];
    for (c, _) in kernel.initial_cells() {
        if c.dilatation < 10 {
            reach[c.index()] = true;
        }
    }
    for _ in 0..hour {
        let mut next = vec![false; CoarseCell::COUNT];
        for cell in CoarseCell::all().filter(|c| reach[c.index()]) {
            if kernel.hazard(&cell) >= 1.0 {
                continue;
            }
            for (c, _) in kernel.next_cells(&cell, multiparous) {
                if c.dilatation < 10 {
                    next[c.index()] = true;
                }
            }
        }
        reach = next;
    }
    reach
}

/// Exact risk under a finite-state kernel, tagged with `method`.
pub(crate) fn exact_risk<K: CoarseKernel + ?Sized>(
    kernel: &K,
    spec: &EstimandSpec,
    condition: &PatientState,
    usual_care: Option<&dyn UsualCare>,
    method: Method,
) -> Result<RiskEstimate> {
    check_inputs(kernel, spec, condition, usual_care)?;
    let cell = condition.cell().ok_or(Error::WrongMode { expected: "coarse" })?;
    if !reachable_cells(kernel, condition.baseline.multiparous(), condition.k)[cell.index()] {
        return Err(Error::Unreachable(format!(
            "{cell:?} cannot be occupied at risk at hour {}",
            condition.k
        )));
    }
    let table = ValueTable::compute(kernel, spec, condition.baseline, usual_care)?;
    Ok(RiskEstimate::exact(table.value(condition.k, &cell)?, method))
}

/// Exact oracle in coarse mode. Usual care may depend on the baseline, the
/// hour and the current cell.
pub fn oracle_exact(
    spec: &EstimandSpec,
    condition: &PatientState,
    scm: &Scm,
    usual_care: Option<&dyn UsualCare>,
) -> Result<RiskEstimate> {
    if scm.config().mode != Mode::Coarse {
        return Err(Error::WrongMode { expected: "coarse" });
    }
    exact_risk(scm, spec, condition, usual_care, Method::OracleExact)
}

/// Population-level quantities under a regime anchored at the start of labor.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    /// Probability that a cesarean is performed.
    pub cesarean: f64,
    /// Probability of the adverse outcome by the horizon.
    pub adverse: f64,
    /// Probability mass at risk, by hour and coarse cell index.
    pub at_risk: Vec<Vec<f64>>,
    /// Probability of starting a cesarean at each hour.
    pub cesarean_by_hour: Vec<f64>,
}

/// Marginals under usual care from the start of labor.
///
/// Baselines enter only through parity, so this is exact when usual care
/// depends on the baseline at most through whether parity is at least one.
pub fn natural_course_marginals<K: CoarseKernel + ?Sized>(
    kernel: &K,
    usual_care: &dyn UsualCare,
) -> Result<Marginals> {
    regime_marginals(kernel, &Regime::NaturalCourse, Some(usual_care))
}

/// Marginals under a regime anchored at hour 0.
pub fn regime_marginals<K: CoarseKernel + ?Sized>(
    kernel: &K,
    regime: &Regime,
    usual_care: Option<&dyn UsualCare>,
) -> Result<Marginals> {
    if kernel.mode() != Mode::Coarse {
        return Err(Error::WrongMode { expected: "coarse" });
    }
    let horizon = kernel.horizon();
    let mp = kernel.multiparous_prob();
    let mut out = Marginals {
        cesarean: 0.0,
        adverse: 0.0,
        at_risk: vec![vec![0.0; CoarseCell::COUNT]; horizon as usize + 1],
        cesarean_by_hour: vec![0.0; horizon as usize],
    };
    for (multiparous, weight) in [(false, 1.0 - mp), (true, mp)] {
        if weight <= 0.0 {
            continue;
        }
        let baseline = BaselineCovariates {
            maternal_age: 30.0,
            parity: u8::from(multiparous),
            history_preterm: false,
        };
        let next = transition_cache(kernel, multiparous);
        let mut mass = vec![0.0; CoarseCell::COUNT];
        for (c, p) in kernel.initial_cells() {
            mass[c.index()] += weight * p;
        }
        for j in 0..horizon {
            let mut following = vec![0.0; CoarseCell::COUNT];
            for cell in CoarseCell::all() {
                let m = mass[cell.index()];
                if m == 0.0 {
                    continue;
                }
                out.at_risk[j as usize][cell.index()] += m;
                let state = at_risk_state(j, baseline, cell);
                let q = regime.cesarean_probability(j, &state, usual_care)?;
                out.cesarean += m * q;
                out.cesarean_by_hour[j as usize] += m * q;
                out.adverse += m * q * kernel.surgical(&cell);
                let h = kernel.hazard(&cell);
                let cont = m * (1.0 - q);
                out.adverse += cont * h;
                for &(ci, p) in &next[cell.index()] {
                    if CoarseCell::from_index(ci).dilatation < 10 {
                        following[ci] += cont * (1.0 - h) * p;
                    }
                }
            }
            mass = following;
        }
        for (acc, m) in out.at_risk[horizon as usize].iter_mut().zip(&mass) {
            *acc += m;
        }
    }
    Ok(out)
}
