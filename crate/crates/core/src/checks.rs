//! Numerical checks of structural properties: kernel supports of the Laplacian,
//! the nullity bound for `Y A_kappa`, and log-constraint residuals between
//! sampled equilibria.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::equilibria::{sample_equilibria, EquilibriumSet, SampleOptions};
use crate::kinetics::{laplacian, KineticsError, PowerLawKineticSystem, DEFAULT_ORDER_TOL};
use crate::linalg::{numeric_null_space, numeric_rank};
use crate::network::ReactionNetwork;
use crate::random::random_rates;

/// Relative singular-value cutoff for numerical nullities.
pub const NULLITY_TOL: f64 = 1e-10;
/// Off-support entries of kernel vectors must stay below this, relative.
pub const SUPPORT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportCheck {
    pub class: Vec<usize>,
    pub class_labels: Vec<String>,
    /// Largest off-class entry relative to the vector's largest entry.
    pub max_off_support: f64,
    /// Smallest in-class entry relative to the vector's largest entry.
    pub min_on_support: f64,
    pub same_sign: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplacianKernelReport {
    pub nullity: usize,
    pub num_terminal_classes: usize,
    pub supports: Vec<SupportCheck>,
    pub passed: bool,
}

/// Checks that `ker A_kappa` has one nonnegative basis vector per terminal
/// strong linkage class, supported exactly on that class.
pub fn laplacian_kernel_check(
    net: &ReactionNetwork,
    kappa: &[f64],
) -> Result<LaplacianKernelReport, KineticsError> {
    let (a, d) = column_balanced(laplacian(net, kappa)?);
    // kernel of A D mapped back through D; supports and dimension are unchanged
    let kernel = DMatrix::from_diagonal(&d) * numeric_null_space(&a, NULLITY_TOL);
    let terminal = net.terminal_strong_linkage_classes();
    let n = net.num_complexes();
    let mut supports = Vec::with_capacity(terminal.len());
    if kernel.ncols() == terminal.len() {
        for class in &terminal {
            let off: Vec<usize> = (0..n).filter(|i| !class.contains(i)).collect();
            let coeffs = smallest_right_singular_vector(&kernel.select_rows(off.iter()));
            let b = &kernel * coeffs;
            let scale = b.amax();
            let max_off = off.iter().map(|&i| b[i].abs()).fold(0.0, f64::max) / scale;
            let min_on = class.iter().map(|&i| b[i].abs()).fold(f64::INFINITY, f64::min) / scale;
            let sign = b[class[0]].signum();
            let same_sign = class.iter().all(|&i| b[i].signum() == sign);
            supports.push(SupportCheck {
                class: class.clone(),
                class_labels: class.iter().map(|&i| net.complex_label(i)).collect(),
                max_off_support: max_off,
                min_on_support: min_on,
                same_sign,
                passed: max_off < SUPPORT_TOL && min_on > SUPPORT_TOL && same_sign,
            });
        }
    }
    let passed = kernel.ncols() == terminal.len() && supports.iter().all(|s| s.passed);
    Ok(LaplacianKernelReport {
        nullity: kernel.ncols(),
        num_terminal_classes: terminal.len(),
        supports,
        passed,
    })
}

/// Scales each nonzero column to unit max-norm, returning the scaled matrix
/// and the diagonal of the scaling. Rates can span many orders of magnitude,
/// which would otherwise defeat a relative singular-value cutoff.
fn column_balanced(mut a: DMatrix<f64>) -> (DMatrix<f64>, nalgebra::DVector<f64>) {
    let d = nalgebra::DVector::from_iterator(
        a.ncols(),
        (0..a.ncols()).map(|j| {
            let s = a.column(j).amax();
            if s > 0.0 {
                1.0 / s
            } else {
                1.0
            }
        }),
    );
    for j in 0..a.ncols() {
        a.column_mut(j).scale_mut(d[j]);
    }
    (a, d)
}

/// Unit vector minimizing `|M a|`.
fn smallest_right_singular_vector(m: &DMatrix<f64>) -> nalgebra::DVector<f64> {
    let k = m.ncols();
    if m.nrows() == 0 {
        let mut e = nalgebra::DVector::zeros(k);
        e[0] = 1.0;
        return e;
    }
    let rows = m.nrows().max(k);
    let mut padded = DMatrix::zeros(rows, k);
    padded.view_mut((0, 0), (m.nrows(), k)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
    v_t.row(idx).transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullityBoundReport {
    pub nullity: usize,
    pub deficiency: usize,
    pub num_terminal_classes: usize,
    pub bound: usize,
    pub passed: bool,
}

/// `dim ker (Y A_kappa) <= deficiency + t`.
pub fn nullity_bound_check(
    net: &ReactionNetwork,
    kappa: &[f64],
) -> Result<NullityBoundReport, KineticsError> {
    let (a, _) = column_balanced(laplacian(net, kappa)?);
    let ya = net.complex_matrix().to_f64() * a;
    let nullity = ya.ncols() - numeric_rank(&ya, NULLITY_TOL);
    let deficiency = net.deficiency();
    let t = net.terminal_strong_linkage_classes().len();
    Ok(NullityBoundReport {
        nullity,
        deficiency,
        num_terminal_classes: t,
        bound: deficiency + t,
        passed: nullity <= deficiency + t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogResidualReport {
    pub equilibria: usize,
    pub pairs_checked: usize,
    pub max_abs_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Evaluates `(T_y - T_y') . (log c2 - log c1)` for every pair of sampled
/// equilibria and every pair of nonterminal complexes. `None` with fewer than
/// two equilibria.
pub fn log_residual_check(
    sys: &PowerLawKineticSystem,
    set: &EquilibriumSet,
    order_tol: f64,
    tolerance: f64,
) -> Result<Option<LogResidualReport>, KineticsError> {
    if set.points.len() < 2 {
        return Ok(None);
    }
    let t = sys.t_matrix(order_tol)?;
    let nonterminal = sys.network().nonterminal_complexes();
    let logs: Vec<Vec<f64>> = set
        .points
        .iter()
        .map(|p| p.concentrations.iter().map(|x| x.ln()).collect())
        .collect();
    let mut worst = 0.0_f64;
    let mut count = 0;
    for (a, &y) in nonterminal.iter().enumerate() {
        for &z in &nonterminal[a + 1..] {
            let (Some(cy), Some(cz)) = (t.column_of(y), t.column_of(z)) else {
                continue;
            };
            let diff = cy - cz;
            for i in 0..logs.len() {
                for j in i + 1..logs.len() {
                    let r: f64 = (0..diff.len()).map(|s| diff[s] * (logs[j][s] - logs[i][s])).sum();
                    worst = worst.max(r.abs());
                    count += 1;
                }
            }
        }
    }
    Ok(Some(LogResidualReport {
        equilibria: set.points.len(),
        pairs_checked: count,
        max_abs_residual: worst,
        tolerance,
        passed: worst < tolerance,
    }))
}

/// Where the Laplacian weights of a trial came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaSource {
    /// Reaction rates at a computed equilibrium.
    Equilibrium,
    /// Log-uniform random weights.
    Random,
    /// Supplied by the caller.
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaTrial {
    pub source: KappaSource,
    pub kappa: Vec<f64>,
    pub kernel: LaplacianKernelReport,
    pub nullity_bound: NullityBoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub trials: Vec<KappaTrial>,
    pub equilibria_found: usize,
    /// Present when at least two distinct equilibria were found.
    pub log_residual: Option<LogResidualReport>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Fixed weights; when `None`, weights come from an equilibrium (if the
    /// system has kinetics and one is found) and from random draws.
    pub kappa: Option<Vec<f64>>,
    pub trials: usize,
    pub seed: u64,
    pub sampling: SampleOptions,
    pub residual_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            kappa: None,
            trials: 3,
            seed: 0,
            sampling: SampleOptions::default(),
            residual_tol: 1e-6,
        }
    }
}

/// Runs the kernel-support check and the nullity bound for each weight
/// vector, and the log-constraint residual check over sampled equilibria.
pub fn verify(
    net: &ReactionNetwork,
    sys: Option<&PowerLawKineticSystem>,
    opts: &VerifyOptions,
) -> Result<VerificationReport, KineticsError> {
    let r = net.num_reactions();
    let set = sys.map(|s| sample_equilibria(s, &opts.sampling));
    let mut weights: Vec<(KappaSource, Vec<f64>)> = Vec::new();
    match &opts.kappa {
        Some(k) => weights.push((KappaSource::Given, k.clone())),
        None => {
            if let (Some(s), Some(p)) = (sys, set.as_ref().and_then(|set| set.points.first())) {
                weights.push((KappaSource::Equilibrium, s.kappa_from_equilibrium(&p.concentrations)?));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            while weights.len() < opts.trials.max(1) {
                weights.push((KappaSource::Random, random_rates(&mut rng, r)));
            }
        }
    }
    let mut trials = Vec::with_capacity(weights.len());
    for (source, kappa) in weights {
        let kernel = laplacian_kernel_check(net, &kappa)?;
        let nullity_bound = nullity_bound_check(net, &kappa)?;
        trials.push(KappaTrial {
            source,
            kappa,
            kernel,
            nullity_bound,
        });
    }
    let log_residual = match (sys, &set) {
        (Some(s), Some(set)) if s.classify(DEFAULT_ORDER_TOL).is_pl_rdk => {
            log_residual_check(s, set, DEFAULT_ORDER_TOL, opts.residual_tol)?
        }
        _ => None,
    };
    let passed = trials.iter().all(|t| t.kernel.passed && t.nullity_bound.passed)
        && log_residual.as_ref().is_none_or(|l| l.passed);
    Ok(VerificationReport {
        trials,
        equilibria_found: set.map_or(0, |s| s.points.len()),
        log_residual,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn toy_kernel_supports() {
        let net = fixtures::toy_network();
        let r = laplacian_kernel_check(&net, &[1.0, 2.0]).unwrap();
        assert_eq!((r.nullity, r.num_terminal_classes), (2, 2));
        assert!(r.passed, "{r:?}");
        let labels: Vec<Vec<String>> = r.supports.iter().map(|s| s.class_labels.clone()).collect();
        assert!(labels.contains(&vec!["X1".to_string()]));
        assert!(labels.contains(&vec!["2X2".to_string()]));
        let b = nullity_bound_check(&net, &[1.0, 2.0]).unwrap();
        assert!(b.passed && b.bound == 3, "{b:?}");
    }

    #[test]
    fn carbon_kernel_supports() {
        let sys = fixtures::carbon_system();
        let kappa = sys.kappa_from_equilibrium(&[0.7, 0.15, 0.15]).unwrap();
        let r = laplacian_kernel_check(sys.network(), &kappa).unwrap();
        assert!(r.passed && r.nullity == 3, "{r:?}");
    }
}
