//! Absolute concentration robustness for deficiency-one PL-RDK systems.
//!
//! The structural test looks for pairs of nonterminal complexes whose
//! kinetic-order columns in `T` differ in exactly one species. When the network
//! has deficiency one and the system has a positive equilibrium, every such
//! species takes the same value at all positive equilibria. The criterion is
//! sufficient only: when it does not apply, nothing is concluded.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::equilibria::{sample_equilibria, verify_acr_numerically, AcrNumericReport, SampleOptions};
use crate::kinetics::{KineticsError, PowerLawKineticSystem};

/// Two nonterminal reactant complexes whose T-columns differ in one species only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcrCandidatePair {
    pub y: usize,
    pub y_prime: usize,
    pub species: usize,
    /// `T[species, y] - T[species, y_prime]`.
    pub delta_order: f64,
}

/// All candidate pairs `(y, y')` with `y < y'`.
pub fn acr_candidate_pairs(
    sys: &PowerLawKineticSystem,
    tol: f64,
) -> Result<Vec<AcrCandidatePair>, KineticsError> {
    let t = sys.t_matrix(tol)?;
    let nonterminal = sys.network().nonterminal_complexes();
    let m = sys.network().num_species();
    let mut pairs = Vec::new();
    for (a, &y) in nonterminal.iter().enumerate() {
        for &y_prime in &nonterminal[a + 1..] {
            // nonterminal complexes have an outgoing arc, so both are reactants
            let (Some(cy), Some(cz)) = (t.column_of(y), t.column_of(y_prime)) else {
                continue;
            };
            let differing: Vec<usize> = (0..m).filter(|&i| (cy[i] - cz[i]).abs() > tol).collect();
            if let [species] = differing[..] {
                pairs.push(AcrCandidatePair {
                    y,
                    y_prime,
                    species,
                    delta_order: cy[species] - cz[species],
                });
            }
        }
    }
    Ok(pairs)
}

/// `(T_y - T_y') . (log c2 - log c1)`; zero for any two positive equilibria of
/// a deficiency-one PL-RDK system when `y, y'` are nonterminal.
pub fn log_constraint_residual(
    sys: &PowerLawKineticSystem,
    c1: &[f64],
    c2: &[f64],
    y: usize,
    y_prime: usize,
    tol: f64,
) -> Result<f64, KineticsError> {
    for c in [c1, c2] {
        sys.rates(c)?;
    }
    let t = sys.t_matrix(tol)?;
    let missing = |idx| {
        KineticsError::DimensionMismatch(format!("complex {idx} is not a reactant complex"))
    };
    let cy = t.column_of(y).ok_or_else(|| missing(y))?;
    let cz = t.column_of(y_prime).ok_or_else(|| missing(y_prime))?;
    Ok((0..c1.len())
        .map(|i| (cy[i] - cz[i]) * (c2[i].ln() - c1[i].ln()))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumMode {
    /// Take the existence of a positive equilibrium as given.
    Assume,
    /// Search for equilibria numerically and confirm the verdict.
    Verify,
}

#[derive(Debug, Clone)]
pub struct AcrOptions {
    pub order_tol: f64,
    pub mode: EquilibriumMode,
    pub sampling: SampleOptions,
    /// Relative spread allowed when confirming ACR numerically.
    pub numeric_rel_tol: f64,
}

impl Default for AcrOptions {
    fn default() -> Self {
        Self {
            order_tol: crate::kinetics::DEFAULT_ORDER_TOL,
            mode: EquilibriumMode::Assume,
            sampling: SampleOptions::default(),
            numeric_rel_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EquilibriumStatus {
    Assumed,
    Verified { equilibrium: Vec<f64>, count: usize },
    NotFound { starts: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum AcrVerdict {
    /// The criterion applies; ACR holds in the listed species.
    Acr { species: Vec<String> },
    /// The criterion does not apply. This is not evidence against ACR.
    Inapplicable { reason: String },
    /// Structural conditions hold but a hypothesis could not be established.
    HypothesisFailed { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcrReport {
    pub deficiency: usize,
    pub deficiency_ok: bool,
    pub equilibrium_status: EquilibriumStatus,
    pub candidates: Vec<AcrCandidatePair>,
    pub acr_species: Vec<usize>,
    pub verdict: AcrVerdict,
    pub numeric_confirmation: Vec<AcrNumericReport>,
}

/// Applies the deficiency-one ACR criterion for PL-RDK systems.
pub fn shinar_feinberg_acr(
    sys: &PowerLawKineticSystem,
    options: &AcrOptions,
) -> Result<AcrReport, KineticsError> {
    let candidates = acr_candidate_pairs(sys, options.order_tol)?;
    let deficiency = sys.network().deficiency();
    let deficiency_ok = deficiency == 1;
    let mut acr_species: Vec<usize> = candidates.iter().map(|p| p.species).collect();
    acr_species.sort_unstable();
    acr_species.dedup();
    let names = sys.network().species_names();

    let (equilibrium_status, equilibria) = match options.mode {
        EquilibriumMode::Assume => (EquilibriumStatus::Assumed, None),
        EquilibriumMode::Verify => {
            let set = sample_equilibria(sys, &options.sampling);
            match set.points.first() {
                Some(p) => (
                    EquilibriumStatus::Verified {
                        equilibrium: p.concentrations.clone(),
                        count: set.points.len(),
                    },
                    Some(set),
                ),
                None => (
                    EquilibriumStatus::NotFound {
                        starts: options.sampling.n_starts,
                    },
                    None,
                ),
            }
        }
    };

    let verdict = if !deficiency_ok {
        AcrVerdict::Inapplicable {
            reason: format!("deficiency is {deficiency}, the criterion needs deficiency one"),
        }
    } else if candidates.is_empty() {
        AcrVerdict::Inapplicable {
            reason: "no pair of nonterminal complexes has kinetic orders differing in exactly one species"
                .into(),
        }
    } else if matches!(equilibrium_status, EquilibriumStatus::NotFound { .. }) {
        AcrVerdict::HypothesisFailed {
            detail: "no positive equilibrium was found".into(),
        }
    } else {
        AcrVerdict::Acr {
            species: acr_species.iter().map(|&i| names[i].clone()).collect(),
        }
    };
    if !matches!(verdict, AcrVerdict::Acr { .. }) {
        acr_species.clear();
    }

    let numeric_confirmation = match &equilibria {
        Some(set) => acr_species
            .iter()
            .filter_map(|&i| verify_acr_numerically(set, i, options.numeric_rel_tol).ok())
            .collect(),
        None => Vec::new(),
    };

    Ok(AcrReport {
        deficiency,
        deficiency_ok,
        equilibrium_status,
        candidates,
        acr_species,
        verdict,
        numeric_confirmation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PlRlkAcrOutcome {
    /// Hypotheses hold: the system is PL-RLK and has ACR in `species`.
    Confirmed { species: Vec<String> },
    NotApplicable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlRlkAcrReport {
    pub reactant_deficiency: usize,
    /// `T * Y_res^-1`, when `Y_res` is square and invertible.
    pub y_hat: Option<Vec<Vec<f64>>>,
    pub outcome: PlRlkAcrOutcome,
}

/// Sufficient condition for PL-RLK plus ACR: zero reactant deficiency,
/// `T Y_res^-1` diagonal with nonzero diagonal, and two nonterminal complexes
/// differing (as complexes) in a single species. Only the case of a square,
/// invertible reactant matrix is handled.
pub fn plrlk_acr_check(
    sys: &PowerLawKineticSystem,
    tol: f64,
) -> Result<PlRlkAcrReport, KineticsError> {
    let net = sys.network();
    let report = net.structural_report();
    let not_applicable = |reason: String, y_hat| PlRlkAcrReport {
        reactant_deficiency: report.reactant_deficiency,
        y_hat,
        outcome: PlRlkAcrOutcome::NotApplicable { reason },
    };
    if report.deficiency != 1 {
        return Ok(not_applicable(
            format!("deficiency is {}, not one", report.deficiency),
            None,
        ));
    }
    if report.reactant_deficiency != 0 {
        return Ok(not_applicable(
            format!("reactant deficiency is {}", report.reactant_deficiency),
            None,
        ));
    }
    let y_res = net.reactant_matrix();
    let Some(inv) = (y_res.nrows() == y_res.ncols())
        .then(|| y_res.inverse())
        .flatten()
    else {
        return Ok(not_applicable(
            format!(
                "reactant matrix is {}x{}, only the square invertible case is handled",
                y_res.nrows(),
                y_res.ncols()
            ),
            None,
        ));
    };
    let t = sys.t_matrix(tol)?;
    let y_hat: DMatrix<f64> = &t.entries * inv.to_f64();
    let rows: Vec<Vec<f64>> = y_hat.row_iter().map(|r| r.iter().copied().collect()).collect();
    let m = y_hat.nrows();
    let diagonal = (0..m).all(|i| {
        (0..m).all(|j| {
            if i == j {
                y_hat[(i, j)].abs() > tol
            } else {
                y_hat[(i, j)].abs() <= tol
            }
        })
    });
    if !diagonal {
        return Ok(not_applicable(
            "T * Y_res^-1 is not diagonal with nonzero diagonal".into(),
            Some(rows),
        ));
    }
    let nonterminal = net.nonterminal_complexes();
    let names = net.species_names();
    let mut species = Vec::new();
    for (a, &y) in nonterminal.iter().enumerate() {
        for &z in &nonterminal[a + 1..] {
            let cy = &net.complexes()[y];
            let cz = &net.complexes()[z];
            let differing: Vec<usize> = (0..m)
                .filter(|&i| cy.coefficient(i) != cz.coefficient(i))
                .collect();
            if let [i] = differing[..] {
                species.push(i);
            }
        }
    }
    species.sort_unstable();
    species.dedup();
    if species.is_empty() {
        return Ok(not_applicable(
            "no two nonterminal complexes differ in exactly one species".into(),
            Some(rows),
        ));
    }
    Ok(PlRlkAcrReport {
        reactant_deficiency: 0,
        y_hat: Some(rows),
        outcome: PlRlkAcrOutcome::Confirmed {
            species: species.iter().map(|&i| names[i].clone()).collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::kinetics::DEFAULT_ORDER_TOL;
    use crate::linalg::ratio_to_f64;
    use crate::network::{Complex, ReactionNetwork};

    #[test]
    fn toy_candidate_pair() {
        let sys = fixtures::toy_system(1.0, 2.0);
        let pairs = acr_candidate_pairs(&sys, DEFAULT_ORDER_TOL).unwrap();
        assert_eq!(pairs.len(), 1);
        let p = &pairs[0];
        assert_eq!((p.y, p.y_prime, p.species), (0, 2, 0));
        // T[X1, X2] - T[X1, X1+X2] = 0 - 0.5
        assert!((p.delta_order.abs() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn carbon_candidate_pair() {
        let sys = fixtures::carbon_system();
        let pairs = acr_candidate_pairs(&sys, DEFAULT_ORDER_TOL).unwrap();
        assert_eq!(pairs.len(), 1);
        let p = &pairs[0];
        assert_eq!((p.y, p.y_prime), (0, 2));
        assert_eq!(sys.network().species()[p.species].name, "A2");
        assert!((p.delta_order - (0.580148 - 0.910864)).abs() < 1e-12);
        assert!((p.delta_order + 0.330716).abs() < 1e-9);
    }

    #[test]
    fn carbon_with_unequal_p_has_no_candidates() {
        let sys = fixtures::carbon_system_with_orders(-68.0, -60.0, 0.580148, 0.910864, 1.0, 1.0, 1.0, 1.0);
        assert!(acr_candidate_pairs(&sys, DEFAULT_ORDER_TOL).unwrap().is_empty());
    }

    #[test]
    fn structural_verdicts() {
        let toy = shinar_feinberg_acr(&fixtures::toy_system(1.0, 2.0), &AcrOptions::default()).unwrap();
        assert_eq!(toy.verdict, AcrVerdict::Acr { species: vec!["X1".into()] });
        assert_eq!(toy.equilibrium_status, EquilibriumStatus::Assumed);

        let carbon = shinar_feinberg_acr(&fixtures::carbon_system(), &AcrOptions::default()).unwrap();
        assert_eq!(carbon.verdict, AcrVerdict::Acr { species: vec!["A2".into()] });

        let net = ReactionNetwork::from_reaction_list(
            vec!["A".into(), "B".into()],
            vec![
                ("R1".into(), Complex::from_counts(&[(0, 1)]), Complex::from_counts(&[(1, 1)])),
                ("R2".into(), Complex::from_counts(&[(1, 1)]), Complex::from_counts(&[(0, 1)])),
            ],
        )
        .unwrap();
        let sys = PowerLawKineticSystem::mass_action(net, vec![1.0, 1.0]).unwrap();
        let rep = shinar_feinberg_acr(&sys, &AcrOptions::default()).unwrap();
        assert!(!rep.deficiency_ok);
        assert!(matches!(rep.verdict, AcrVerdict::Inapplicable { .. }));
        assert!(rep.acr_species.is_empty());
    }

    #[test]
    fn rate_scaling_does_not_change_candidates() {
        let sys = fixtures::carbon_system();
        let scaled = sys
            .with_rate_constants(sys.rate_constants().iter().map(|k| k * 37.5).collect())
            .unwrap();
        assert_eq!(
            acr_candidate_pairs(&sys, DEFAULT_ORDER_TOL).unwrap(),
            acr_candidate_pairs(&scaled, DEFAULT_ORDER_TOL).unwrap()
        );
    }

    #[test]
    fn log_residual_examples() {
        let sys = fixtures::toy_system(1.0, 2.0);
        let r = log_constraint_residual(&sys, &[0.25, 0.3], &[0.25, 4.0], 0, 2, DEFAULT_ORDER_TOL).unwrap();
        assert_eq!(r, 0.0);
        let r = log_constraint_residual(&sys, &[0.7, 0.3], &[0.7, 0.3], 0, 2, DEFAULT_ORDER_TOL).unwrap();
        assert_eq!(r, 0.0);
        let r = log_constraint_residual(&sys, &[1.0, 1.0], &[2.0, 1.0], 0, 2, DEFAULT_ORDER_TOL).unwrap();
        assert!((r.abs() - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((r.abs() - 0.346574).abs() < 1e-6);
        assert!(log_constraint_residual(&sys, &[0.0, 1.0], &[2.0, 1.0], 0, 2, DEFAULT_ORDER_TOL).is_err());
    }

    #[test]
    fn plrlk_on_toy() {
        // Y_res = [[0,1],[1,1]], inverse [[-1,1],[1,0]], T = [[0,0.5],[0.8,0.8]]
        // so T * Y_res^-1 = [[0.5, 0], [0, 0.8]].
        let rep = plrlk_acr_check(&fixtures::toy_system(1.0, 2.0), DEFAULT_ORDER_TOL).unwrap();
        let y_hat = rep.y_hat.clone().unwrap();
        assert!((y_hat[0][0] - 0.5).abs() < 1e-15 && y_hat[0][1].abs() < 1e-15);
        assert!(y_hat[1][0].abs() < 1e-15 && (y_hat[1][1] - 0.8).abs() < 1e-15);
        assert_eq!(
            rep.outcome,
            PlRlkAcrOutcome::Confirmed { species: vec!["X1".into()] }
        );
    }

    #[test]
    fn plrlk_constructed_diagonal_case() {
        // T = diag(a) * Y_res on the toy network with a = (1.5, 0.25)
        let net = fixtures::toy_network();
        let a = [1.5, 0.25];
        let orders = DMatrix::from_fn(2, 2, |j, i| {
            let y = &net.complexes()[net.reactions()[j].reactant];
            a[i] * ratio_to_f64(&y.coefficient(i))
        });
        let sys = PowerLawKineticSystem::new(net, orders, vec![1.0, 1.0]).unwrap();
        let rep = plrlk_acr_check(&sys, DEFAULT_ORDER_TOL).unwrap();
        assert!(matches!(rep.outcome, PlRlkAcrOutcome::Confirmed { .. }));
        assert!(sys.classify(DEFAULT_ORDER_TOL).is_pl_rlk);
    }

    #[test]
    fn plrlk_rejects_positive_reactant_deficiency() {
        // Reactants A, B, A+B span a 2-dimensional space: reactant deficiency 1.
        let net = ReactionNetwork::from_reaction_list(
            vec!["A".into(), "B".into()],
            vec![
                ("R1".into(), Complex::from_counts(&[(0, 1)]), Complex::from_counts(&[(1, 1)])),
                ("R2".into(), Complex::from_counts(&[(1, 1)]), Complex::from_counts(&[(0, 1)])),
                (
                    "R3".into(),
                    Complex::from_counts(&[(0, 1), (1, 1)]),
                    Complex::from_counts(&[(1, 2)]),
                ),
            ],
        )
        .unwrap();
        assert_eq!(net.deficiency(), 1);
        let sys = PowerLawKineticSystem::mass_action(net, vec![1.0; 3]).unwrap();
        let rep = plrlk_acr_check(&sys, DEFAULT_ORDER_TOL).unwrap();
        assert_eq!(rep.reactant_deficiency, 1);
        assert!(matches!(rep.outcome, PlRlkAcrOutcome::NotApplicable { .. }));
    }
}
