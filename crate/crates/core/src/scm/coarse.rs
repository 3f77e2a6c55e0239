//! Finite-state dynamics backed by explicit probability tables.

use rand::Rng;

use super::config::CoarseParams;
use super::state::{BpLevel, CoarseCell, FhrCategory};
use crate::rng::SimRng;

fn categorical(rng: &mut SimRng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding in the cumulative sum: fall back to the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

fn bp_row(table: &[[f64; 2]; 2], level: BpLevel) -> &[f64; 2] {
    &table[level.index()]
}

pub fn sample_initial(p: &CoarseParams, rng: &mut SimRng) -> CoarseCell {
    let fhr = FhrCategory::from_index(categorical(rng, &p.initial_fhr));
    let dilatation = categorical(rng, &p.initial_dilatation) as u8;
    let sbp = if rng.random::<f64>() < p.initial_sbp_high {
        BpLevel::High
    } else {
        BpLevel::Normal
    };
    let dbp = if rng.random::<f64>() < p.initial_dbp_high {
        BpLevel::High
    } else {
        BpLevel::Normal
    };
    CoarseCell {
        fhr,
        dilatation,
        sbp,
        dbp,
    }
}

/// Sample the next cell under continued labor, one component at a time.
pub fn evolve(p: &CoarseParams, cell: &CoarseCell, multiparous: bool, rng: &mut SimRng) -> CoarseCell {
    let fhr = FhrCategory::from_index(categorical(rng, p.fhr_row(cell.fhr, cell.dilatation)));
    let increment = categorical(rng, p.dilatation_increments(multiparous)) as u8;
    let dilatation = (cell.dilatation + increment).min(10);
    let sbp = BpLevel::from_index(categorical(rng, bp_row(&p.sbp_transition, cell.sbp)));
    let dbp = BpLevel::from_index(categorical(rng, bp_row(&p.dbp_transition, cell.dbp)));
    CoarseCell {
        fhr,
        dilatation,
        sbp,
        dbp,
    }
}

/// Exact distribution of the next cell under continued labor.
///
/// Entries are merged where dilatation saturates at 10 and zero-probability
/// successors are dropped.
pub fn next_cell_distribution(
    p: &CoarseParams,
    cell: &CoarseCell,
    multiparous: bool,
) -> Vec<(CoarseCell, f64)> {
    let mut mass = [0.0f64; CoarseCell::COUNT];
    let fhr_row = p.fhr_row(cell.fhr, cell.dilatation);
    let inc_row = p.dilatation_increments(multiparous);
    let sbp_row = bp_row(&p.sbp_transition, cell.sbp);
    let dbp_row = bp_row(&p.dbp_transition, cell.dbp);
    for (fi, &pf) in fhr_row.iter().enumerate() {
        for (inc, &pi) in inc_row.iter().enumerate() {
            for (si, &ps) in sbp_row.iter().enumerate() {
                for (di, &pd) in dbp_row.iter().enumerate() {
                    let next = CoarseCell {
                        fhr: FhrCategory::from_index(fi),
                        dilatation: (cell.dilatation + inc as u8).min(10),
                        sbp: BpLevel::from_index(si),
                        dbp: BpLevel::from_index(di),
                    };
                    mass[next.index()] += pf * pi * ps * pd;
                }
            }
        }
    }
    mass.iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, &m)| (CoarseCell::from_index(i), m))
        .collect()
}

/// Distribution of the initial cell.
pub fn initial_cell_distribution(p: &CoarseParams) -> Vec<(CoarseCell, f64)> {
    let mut out = Vec::new();
    for (fi, &pf) in p.initial_fhr.iter().enumerate() {
        for (d, &pd) in p.initial_dilatation.iter().enumerate() {
            for (si, ps) in [1.0 - p.initial_sbp_high, p.initial_sbp_high].into_iter().enumerate() {
                for (di, pdb) in [1.0 - p.initial_dbp_high, p.initial_dbp_high].into_iter().enumerate() {
                    let m = pf * pd * ps * pdb;
                    if m > 0.0 {
                        out.push((
                            CoarseCell {
                                fhr: FhrCategory::from_index(fi),
                                dilatation: d as u8,
                                sbp: BpLevel::from_index(si),
                                dbp: BpLevel::from_index(di),
                            },
                            m,
                        ));
                    }
                }
            }
        }
    }
    out
}

pub fn in_labor_hazard(p: &CoarseParams, cell: &CoarseCell) -> f64 {
    p.hazard[cell.fhr.index()][cell.sbp.index()]
}

pub fn surgical_risk(p: &CoarseParams, cell: &CoarseCell) -> f64 {
    p.surgical[cell.sbp.index()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn next_cell_distribution_sums_to_one() {
        let p = CoarseParams::default();
        for cell in CoarseCell::all().filter(|c| c.dilatation < 10) {
            for mp in [false, true] {
                let total: f64 = next_cell_distribution(&p, &cell, mp).iter().map(|x| x.1).sum();
                assert!((total - 1.0).abs() < 1e-12, "{cell:?}");
            }
        }
        let total: f64 = initial_cell_distribution(&p).iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dilatation_saturates_at_ten() {
        let p = CoarseParams::default();
        let cell = CoarseCell {
            fhr: FhrCategory::Normal,
            dilatation: 9,
            sbp: BpLevel::Normal,
            dbp: BpLevel::Normal,
        };
        let dist = next_cell_distribution(&p, &cell, false);
        assert!(dist.iter().all(|(c, _)| c.dilatation >= 9));
        let at_ten: f64 = dist.iter().filter(|(c, _)| c.dilatation == 10).map(|x| x.1).sum();
        assert!((at_ten - 0.75).abs() < 1e-12);
    }
}
