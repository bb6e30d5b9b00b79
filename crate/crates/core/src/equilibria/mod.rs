//! Positive steady states: trajectories, a relaxation-plus-Newton solver, and
//! multi-start sampling across compatibility classes.

mod integrate;

pub use integrate::{
    integrate, IntegrateOptions, IntegrationError, Method, OdeSystem, StepStats, Trajectory,
    TrajectoryMeta,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::kinetics::{KineticsError, PowerLawKineticSystem};
use integrate::{Integrator, Stop};

/// `|f_i(c)| <= tol * sum_j |N_ij| K_j(c)` for every species.
pub fn is_equilibrium(sys: &PowerLawKineticSystem, c: &[f64], tol: f64) -> bool {
    let Ok(k) = sys.rates(c) else {
        return false;
    };
    let f = sys.apply_stoichiometry(&k);
    let scale = sys.gross_flux(&k);
    f.iter()
        .zip(&scale)
        .all(|(fi, si)| fi.is_finite() && fi.abs() <= tol * si)
}

/// Largest `|f_i| / sum_j |N_ij| K_j` over species.
pub fn relative_residual(sys: &PowerLawKineticSystem, c: &[f64]) -> f64 {
    let Ok(k) = sys.rates(c) else {
        return f64::INFINITY;
    };
    let f = sys.apply_stoichiometry(&k);
    let scale = sys.gross_flux(&k);
    f.iter()
        .zip(&scale)
        .map(|(fi, si)| if *si == 0.0 { fi.abs() } else { fi.abs() / si })
        .fold(0.0, f64::max)
}

/// Conservation law matrix `W` (one row per law) in floating point.
pub fn conservation_matrix(sys: &PowerLawKineticSystem) -> DMatrix<f64> {
    OdeSystem::conservation_matrix(sys)
}

#[derive(Debug, Clone)]
pub struct EquilibriumOptions {
    /// Relaxation stops once `||f||_inf` falls below this fraction of its
    /// initial value.
    pub relax_fraction: f64,
    /// Integration horizon for the first relaxation attempt.
    pub relax_horizon: f64,
    pub integrate: IntegrateOptions,
    pub newton_max_iter: usize,
    /// Residual tolerance relative to per-species gross flux.
    pub residual_tol: f64,
    /// Tolerance on `|W c - W c0|` relative to `max(1, |W c0|)`.
    pub class_tol: f64,
    /// Further relax-then-Newton rounds, each with a longer horizon.
    pub max_restarts: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            relax_fraction: 1e-6,
            relax_horizon: 1e4,
            integrate: IntegrateOptions {
                method: Method::Rosenbrock,
                record: false,
                ..IntegrateOptions::default()
            },
            newton_max_iter: 100,
            residual_tol: 1e-12,
            class_tol: 1e-10,
            max_restarts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EquilibriumOutcome {
    Found {
        concentrations: Vec<f64>,
        relative_residual: f64,
        newton_iterations: usize,
    },
    NotFound {
        reason: String,
    },
}

impl EquilibriumOutcome {
    pub fn concentrations(&self) -> Option<&[f64]> {
        match self {
            Self::Found { concentrations, .. } => Some(concentrations),
            Self::NotFound { .. } => None,
        }
    }
}

/// Finds a positive equilibrium in the compatibility class of `c0`.
///
/// A damped Newton iteration in log coordinates, on the independent rows of
/// `f` together with the conservation constraints, is tried from `c0`. If it
/// fails, the state is relaxed along the trajectory and Newton is retried,
/// with longer horizons on each round. Failure is reported as `NotFound`,
/// never as an error.
pub fn find_equilibrium(
    sys: &PowerLawKineticSystem,
    c0: &[f64],
    opts: &EquilibriumOptions,
) -> Result<EquilibriumOutcome, KineticsError> {
    sys.check_positive(c0)?;
    let solver = NewtonSolver::new(sys, c0, opts);
    let f0 = sys.species_formation_rate(c0)?;
    let f0_norm = f0.iter().fold(0.0_f64, |a, x| a.max(x.abs()));

    if let Some(found) = solver.solve(c0) {
        return Ok(found);
    }

    let mut integrator = match Integrator::new(sys, c0, opts.integrate.clone()) {
        Ok(it) => it,
        Err(e) => return Ok(EquilibriumOutcome::NotFound { reason: e.to_string() }),
    };
    let mut horizon = opts.relax_horizon;
    let mut threshold = opts.relax_fraction * f0_norm;
    for _ in 0..=opts.max_restarts {
        let stop = integrator.advance(
            horizon,
            |c| {
                sys.species_formation_rate(c)
                    .map(|f| f.iter().all(|x| x.abs() < threshold))
                    .unwrap_or(false)
            },
            |_, _| {},
        );
        let relaxed = match stop {
            Ok(Stop::ReachedEnd | Stop::Predicate) => integrator.concentrations(),
            Err(e) => {
                if let Some(state) = e.last_state() {
                    if state.iter().all(|&x| x > 0.0 && x.is_finite()) {
                        if let Some(found) = solver.solve(state) {
                            return Ok(found);
                        }
                    }
                }
                return Ok(EquilibriumOutcome::NotFound {
                    reason: format!("relaxation failed: {e}"),
                });
            }
        };
        if let Some(found) = solver.solve(&relaxed) {
            return Ok(found);
        }
        horizon *= 10.0;
        threshold *= 1e-3;
    }
    Ok(EquilibriumOutcome::NotFound {
        reason: "newton iteration did not converge after relaxation".into(),
    })
}

struct NewtonSolver<'a> {
    sys: &'a PowerLawKineticSystem,
    opts: &'a EquilibriumOptions,
    /// Reduced row echelon rows of `N`. Combining reactions before rates are
    /// applied avoids cancellation between fluxes of very different size.
    rows: DMatrix<f64>,
    /// For rows `a K_i - b K_j` with `a, b > 0`: `(i, j, ln(a / b))`. Such a
    /// row vanishes iff `ln K_i - ln K_j + ln(a / b)` does, which is linear
    /// in `u` and is used instead.
    binomial: Vec<Option<(usize, usize, f64)>>,
    log_k: Vec<f64>,
    w: DMatrix<f64>,
    target: DVector<f64>,
}

impl<'a> NewtonSolver<'a> {
    fn new(sys: &'a PowerLawKineticSystem, c0: &[f64], opts: &'a EquilibriumOptions) -> Self {
        let rows = sys.network().stoichiometric_matrix().reduced_row_basis();
        let binomial = rows
            .row_iter()
            .map(|row| {
                let nz: Vec<usize> = (0..row.len()).filter(|&j| row[j] != 0.0).collect();
                match nz[..] {
                    [i, j] if row[i] * row[j] < 0.0 => {
                        let (p, n) = if row[i] > 0.0 { (i, j) } else { (j, i) };
                        Some((p, n, (row[p] / -row[n]).ln()))
                    }
                    _ => None,
                }
            })
            .collect();
        let log_k = sys.rate_constants().iter().map(|k| k.ln()).collect();
        let w = conservation_matrix(sys);
        let target = &w * DVector::from_column_slice(c0);
        Self {
            sys,
            opts,
            rows,
            binomial,
            log_k,
            w,
            target,
        }
    }

    fn class_ok(&self, c: &DVector<f64>) -> bool {
        if self.w.nrows() == 0 {
            return true;
        }
        let resid = &self.w * c - &self.target;
        let scale = self.target.amax().max(1.0);
        resid.amax() <= self.opts.class_tol * scale
    }

    fn residual(&self, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let c = u.map(f64::exp);
        let k = DVector::from_vec(self.sys.rates_from_log(u.as_slice()));
        let mut g_f = &self.rows * k;
        let f = self.sys.orders();
        for (a, b) in self.binomial.iter().enumerate() {
            if let Some((i, j, offset)) = *b {
                let ln_ki = self.log_k[i] + f.row(i).dot(&u.transpose());
                let ln_kj = self.log_k[j] + f.row(j).dot(&u.transpose());
                g_f[a] = ln_ki - ln_kj + offset;
            }
        }
        let g_w = &self.w * &c - &self.target;
        let mut g = DVector::zeros(g_f.len() + g_w.len());
        g.rows_mut(0, g_f.len()).copy_from(&g_f);
        g.rows_mut(g_f.len(), g_w.len()).copy_from(&g_w);
        (g, c)
    }

    fn jacobian(&self, u: &DVector<f64>, c: &DVector<f64>) -> DMatrix<f64> {
        let k = DVector::from_vec(self.sys.rates_from_log(u.as_slice()));
        let f = self.sys.orders();
        let mut top = &self.rows * DMatrix::from_diagonal(&k) * f;
        for (a, b) in self.binomial.iter().enumerate() {
            if let Some((i, j, _)) = *b {
                top.set_row(a, &(f.row(i) - f.row(j)));
            }
        }
        let bottom = &self.w * DMatrix::from_diagonal(c);
        let m = u.len();
        let mut j = DMatrix::zeros(top.nrows() + bottom.nrows(), m);
        j.rows_mut(0, top.nrows()).copy_from(&top);
        j.rows_mut(top.nrows(), bottom.nrows()).copy_from(&bottom);
        j
    }

    fn accept(&self, c: &DVector<f64>, iterations: usize) -> Option<EquilibriumOutcome> {
        let cs = c.as_slice();
        if cs.iter().all(|x| *x > 0.0 && x.is_finite())
            && is_equilibrium(self.sys, cs, self.opts.residual_tol)
            && self.class_ok(c)
        {
            Some(EquilibriumOutcome::Found {
                concentrations: cs.to_vec(),
                relative_residual: relative_residual(self.sys, cs),
                newton_iterations: iterations,
            })
        } else {
            None
        }
    }

    fn solve(&self, start: &[f64]) -> Option<EquilibriumOutcome> {
        let mut u = DVector::from_iterator(start.len(), start.iter().map(|x| x.ln()));
        let mut stalled = 0;
        // after the first accepted iterate, a few more steps polish it
        let mut accepted: Option<EquilibriumOutcome> = None;
        let mut polish = 0;
        for it in 0..self.opts.newton_max_iter {
            let (g, c) = self.residual(&u);
            match self.accept(&c, it) {
                Some(found) => {
                    accepted = Some(found);
                    polish += 1;
                    if polish > 2 {
                        return accepted;
                    }
                }
                None if accepted.is_some() => return accepted,
                None => {}
            }
            let mut jac = self.jacobian(&u, &c);
            if jac.iter().any(|x| !x.is_finite()) || g.iter().any(|x| !x.is_finite()) {
                return accepted;
            }
            // row equilibration
            let scale: Vec<f64> = (0..jac.nrows())
                .map(|r| {
                    let s = jac.row(r).amax();
                    if s > 0.0 {
                        s
                    } else {
                        1.0
                    }
                })
                .collect();
            let mut rhs = -g.clone();
            for r in 0..jac.nrows() {
                jac.row_mut(r).scale_mut(1.0 / scale[r]);
                rhs[r] /= scale[r];
            }
            let Some(mut step) = jac.clone().full_piv_lu().solve(&rhs) else {
                return accepted;
            };
            let cap = 2.0;
            let big = step.amax();
            if big > cap {
                step *= cap / big;
            }
            let merit = |v: &DVector<f64>| -> f64 {
                v.iter().zip(&scale).map(|(x, s)| (x / s).powi(2)).sum::<f64>().sqrt()
            };
            let phi0 = merit(&g);
            let mut lambda = 1.0;
            let mut next = &u + &step;
            loop {
                let (g_next, _) = self.residual(&next);
                let phi = merit(&g_next);
                if phi.is_finite() && phi <= (1.0 - 1e-4 * lambda) * phi0 {
                    break;
                }
                lambda *= 0.5;
                if lambda < 1e-10 {
                    break;
                }
                next = &u + &step * lambda;
            }
            if lambda < 1e-10 {
                // no decrease; take a full step once in case we sit at round-off level
                stalled += 1;
                if stalled > 2 {
                    return accepted;
                }
                next = &u + &step;
            }
            let moved = (&next - &u).amax();
            u = next;
            if moved < 1e-15 {
                let (_, c) = self.residual(&u);
                return self.accept(&c, it + 1).or(accepted);
            }
        }
        let (_, c) = self.residual(&u);
        self.accept(&c, self.opts.newton_max_iter).or(accepted)
    }
}

/// Draws an optional total `w . c` for each start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotalConstraint {
    pub weights: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone)]
pub struct SampleOptions {
    pub n_starts: usize,
    pub seed: u64,
    /// Start concentrations are log-uniform in `[box_lo, box_hi]` per species.
    pub box_lo: f64,
    pub box_hi: f64,
    /// When set, each start is rescaled so that `w . c` is uniform in `[lo, hi]`.
    pub total: Option<TotalConstraint>,
    pub equilibrium: EquilibriumOptions,
    /// Points closer than this (relative, max-norm) are merged.
    pub merge_rel_tol: f64,
    pub parallel: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            n_starts: 20,
            seed: 0,
            box_lo: 0.1,
            box_hi: 10.0,
            total: None,
            equilibrium: EquilibriumOptions::default(),
            merge_rel_tol: 1e-7,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub concentrations: Vec<f64>,
    /// Index of the first start that reached this point.
    pub start_index: usize,
    pub start: Vec<f64>,
    /// `W c0` for the start, identifying its compatibility class.
    pub class_totals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedStart {
    pub start_index: usize,
    pub start: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSet {
    pub species: Vec<String>,
    pub points: Vec<EquilibriumPoint>,
    pub failed: Vec<FailedStart>,
    pub n_starts: usize,
}

/// Seeded multi-start equilibrium search.
pub fn sample_equilibria(sys: &PowerLawKineticSystem, opts: &SampleOptions) -> EquilibriumSet {
    let starts = draw_starts(sys.network().num_species(), opts);
    let w = conservation_matrix(sys);
    let run = |c0: &Vec<f64>| {
        find_equilibrium(sys, c0, &opts.equilibrium)
            .unwrap_or_else(|e| EquilibriumOutcome::NotFound { reason: e.to_string() })
    };
    let outcomes: Vec<EquilibriumOutcome> = if opts.parallel {
        starts.par_iter().map(run).collect()
    } else {
        starts.iter().map(run).collect()
    };

    let mut points: Vec<EquilibriumPoint> = Vec::new();
    let mut failed = Vec::new();
    for (index, (start, outcome)) in starts.iter().zip(outcomes).enumerate() {
        match outcome {
            EquilibriumOutcome::Found { concentrations, .. } => {
                let duplicate = points
                    .iter()
                    .any(|p| close(&p.concentrations, &concentrations, opts.merge_rel_tol));
                if !duplicate {
                    let class_totals = (&w * DVector::from_column_slice(start)).as_slice().to_vec();
                    points.push(EquilibriumPoint {
                        concentrations,
                        start_index: index,
                        start: start.clone(),
                        class_totals,
                    });
                }
            }
            EquilibriumOutcome::NotFound { reason } => failed.push(FailedStart {
                start_index: index,
                start: start.clone(),
                reason,
            }),
        }
    }
    EquilibriumSet {
        species: sys.network().species_names(),
        points,
        failed,
        n_starts: starts.len(),
    }
}

fn close(a: &[f64], b: &[f64], rel_tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= rel_tol * x.abs().max(y.abs()))
}

fn draw_starts(m: usize, opts: &SampleOptions) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (ln_lo, ln_hi) = (opts.box_lo.ln(), opts.box_hi.ln());
    (0..opts.n_starts)
        .map(|_| {
            let mut c: Vec<f64> = (0..m)
                .map(|_| {
                    if ln_hi > ln_lo {
                        rng.random_range(ln_lo..ln_hi).exp()
                    } else {
                        opts.box_lo
                    }
                })
                .collect();
            if let Some(total) = &opts.total {
                let target = if total.hi > total.lo {
                    rng.random_range(total.lo..total.hi)
                } else {
                    total.lo
                };
                let current: f64 = c.iter().zip(&total.weights).map(|(x, w)| x * w).sum();
                if current > 0.0 {
                    for x in &mut c {
                        *x *= target / current;
                    }
                }
            }
            c
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcrCheckError {
    #[error("equilibrium set is empty")]
    EmptySet,
    #[error("species index {0} out of range")]
    UnknownSpecies(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcrNumericReport {
    pub species: String,
    pub index: usize,
    pub count: usize,
    pub min: f64,
    pub max: f64,
    /// `(max - min) / max |value|`.
    pub relative_spread: f64,
    pub robust: bool,
    /// Fewer than two points, or all points in one compatibility class.
    pub low_confidence: bool,
}

/// Checks that `species` takes the same value at every sampled equilibrium.
pub fn verify_acr_numerically(
    set: &EquilibriumSet,
    species: usize,
    rel_tol: f64,
) -> Result<AcrNumericReport, AcrCheckError> {
    if set.points.is_empty() {
        return Err(AcrCheckError::EmptySet);
    }
    if species >= set.species.len() {
        return Err(AcrCheckError::UnknownSpecies(species));
    }
    let values: Vec<f64> = set.points.iter().map(|p| p.concentrations[species]).collect();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mag = min.abs().max(max.abs());
    let relative_spread = if mag == 0.0 { 0.0 } else { (max - min) / mag };
    let distinct_classes = {
        let mut classes: Vec<&Vec<f64>> = Vec::new();
        for p in &set.points {
            if !classes.iter().any(|c| close(c, &p.class_totals, 1e-9)) {
                classes.push(&p.class_totals);
            }
        }
        classes.len()
    };
    Ok(AcrNumericReport {
        species: set.species[species].clone(),
        index: species,
        count: values.len(),
        min,
        max,
        relative_spread,
        robust: relative_spread < rel_tol,
        low_confidence: values.len() < 2 || distinct_classes < 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn toy_equilibrium_matches_closed_form() {
        let sys = fixtures::toy_system(1.0, 2.0);
        let out = find_equilibrium(&sys, &[1.0, 1.0], &EquilibriumOptions::default()).unwrap();
        let c = out.concentrations().expect("found");
        assert!((c[0] - 0.25).abs() < 1e-12);
        assert!((c[1] - 1.75).abs() < 1e-12);
    }

    #[test]
    fn toy_below_threshold_has_no_equilibrium() {
        let sys = fixtures::toy_system(1.0, 2.0);
        let out = find_equilibrium(&sys, &[0.1, 0.1], &EquilibriumOptions::default()).unwrap();
        assert!(matches!(out, EquilibriumOutcome::NotFound { .. }), "{out:?}");
    }

    #[test]
    fn carbon_equilibrium_from_initial_state() {
        let sys = fixtures::carbon_system();
        let c0 = fixtures::carbon_initial_state();
        let out = find_equilibrium(&sys, &c0, &EquilibriumOptions::default()).unwrap();
        let c = out.concentrations().expect("found");
        assert!((c[0] - 0.7).abs() < 1e-9, "{c:?}");
        assert!((c[1] - 0.15).abs() < 1e-9);
        assert!((c[2] - 0.15).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_deterministic_for_a_seed() {
        let sys = fixtures::toy_system(1.0, 2.0);
        let opts = SampleOptions {
            n_starts: 6,
            seed: 7,
            total: Some(TotalConstraint {
                weights: vec![1.0, 1.0],
                lo: 0.5,
                hi: 5.0,
            }),
            ..SampleOptions::default()
        };
        let a = sample_equilibria(&sys, &opts);
        let b = sample_equilibria(&sys, &SampleOptions { parallel: false, ..opts });
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 6);
        let report = verify_acr_numerically(&a, 0, 1e-6).unwrap();
        assert!(report.robust && !report.low_confidence);
    }

    #[test]
    fn empty_and_singleton_sets() {
        let empty = EquilibriumSet {
            species: vec!["X".into()],
            points: vec![],
            failed: vec![],
            n_starts: 0,
        };
        assert_eq!(verify_acr_numerically(&empty, 0, 1e-6), Err(AcrCheckError::EmptySet));
        let single = EquilibriumSet {
            points: vec![EquilibriumPoint {
                concentrations: vec![1.0],
                start_index: 0,
                start: vec![1.0],
                class_totals: vec![],
            }],
            ..empty
        };
        let r = verify_acr_numerically(&single, 0, 1e-6).unwrap();
        assert!(r.robust && r.low_confidence);
    }
}
