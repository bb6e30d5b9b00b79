//! Power-law kinetics on a reaction network: classification (mass action,
//! PL-RDK, PL-RLK), the T-matrix, rate evaluation and the Laplacian map.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{numeric_rank, ratio_to_f64};
use crate::network::ReactionNetwork;

/// Default absolute tolerance when comparing kinetic orders.
pub const DEFAULT_ORDER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KineticsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rate constant of reaction {index} is not positive ({value})")]
    NonpositiveRate { index: usize, value: f64 },
    #[error("kappa entry {index} is not positive ({value})")]
    NonpositiveKappa { index: usize, value: f64 },
    #[error("concentration of species {index} is not positive ({value})")]
    NonpositiveConcentration { index: usize, value: f64 },
    #[error("kinetic order of reaction {reaction}, species {species} is not finite")]
    NonfiniteOrder { reaction: usize, species: usize },
    #[error("system is not PL-RDK: reactions {0} and {1} share a reactant complex but have different kinetic orders")]
    NotPlRdk(usize, usize),
}

/// A network with power-law rates `K_j(c) = k_j * prod_i c_i^F_ji`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawKineticSystem {
    network: ReactionNetwork,
    orders: DMatrix<f64>,
    rate_constants: Vec<f64>,
    stoich: DMatrix<f64>,
}

impl PowerLawKineticSystem {
    /// Attaches a kinetic order matrix (r x m) and rate vector (length r).
    pub fn new(
        network: ReactionNetwork,
        orders: DMatrix<f64>,
        rate_constants: Vec<f64>,
    ) -> Result<Self, KineticsError> {
        let (r, m) = (network.num_reactions(), network.num_species());
        if orders.nrows() != r || orders.ncols() != m {
            return Err(KineticsError::DimensionMismatch(format!(
                "kinetic order matrix is {}x{}, expected {r}x{m}",
                orders.nrows(),
                orders.ncols()
            )));
        }
        if rate_constants.len() != r {
            return Err(KineticsError::DimensionMismatch(format!(
                "{} rate constants for {r} reactions",
                rate_constants.len()
            )));
        }
        if let Some((index, &value)) = rate_constants
            .iter()
            .enumerate()
            .find(|(_, &k)| !(k > 0.0 && k.is_finite()))
        {
            return Err(KineticsError::NonpositiveRate { index, value });
        }
        for j in 0..r {
            for i in 0..m {
                if !orders[(j, i)].is_finite() {
                    return Err(KineticsError::NonfiniteOrder {
                        reaction: j,
                        species: i,
                    });
                }
            }
        }
        let stoich = network.stoichiometric_matrix().to_f64();
        Ok(Self {
            network,
            orders,
            rate_constants,
            stoich,
        })
    }

    /// Mass-action kinetics: each order row is the reactant complex.
    pub fn mass_action(
        network: ReactionNetwork,
        rate_constants: Vec<f64>,
    ) -> Result<Self, KineticsError> {
        let orders = DMatrix::from_fn(network.num_reactions(), network.num_species(), |j, i| {
            let reactant = network.reactions()[j].reactant;
            ratio_to_f64(&network.complexes()[reactant].coefficient(i))
        });
        Self::new(network, orders, rate_constants)
    }

    pub fn network(&self) -> &ReactionNetwork {
        &self.network
    }

    /// Kinetic order matrix `F` (r x m).
    pub fn orders(&self) -> &DMatrix<f64> {
        &self.orders
    }

    /// Stoichiometric matrix `N` in floating point.
    pub fn stoichiometric_f64(&self) -> &DMatrix<f64> {
        &self.stoich
    }

    pub fn rate_constants(&self) -> &[f64] {
        &self.rate_constants
    }

    pub fn with_rate_constants(&self, rate_constants: Vec<f64>) -> Result<Self, KineticsError> {
        Self::new(self.network.clone(), self.orders.clone(), rate_constants)
    }

    pub fn classify(&self, tol: f64) -> KineticsClassification {
        let net = &self.network;
        let rows_equal = |a: usize, b: usize| {
            (0..net.num_species()).all(|i| (self.orders[(a, i)] - self.orders[(b, i)]).abs() <= tol)
        };
        let reactions = net.reactions();
        let mut violation = None;
        'outer: for a in 0..reactions.len() {
            for b in a + 1..reactions.len() {
                if reactions[a].reactant == reactions[b].reactant && !rows_equal(a, b) {
                    violation = Some((a, b));
                    break 'outer;
                }
            }
        }
        let is_mass_action = reactions.iter().enumerate().all(|(j, rx)| {
            let y = &net.complexes()[rx.reactant];
            (0..net.num_species())
                .all(|i| (self.orders[(j, i)] - ratio_to_f64(&y.coefficient(i))).abs() <= tol)
        });
        let is_pl_rdk = violation.is_none();
        let is_pl_rlk = is_pl_rdk && {
            let t = self.t_matrix_unchecked();
            numeric_rank(&t.entries, 1e-9) == t.entries.ncols()
        };
        KineticsClassification {
            is_mass_action,
            is_pl_rdk,
            rdk_violation: violation,
            is_pl_rlk,
        }
    }

    /// The T-matrix (m x n_r) of a PL-RDK system.
    pub fn t_matrix(&self, tol: f64) -> Result<TMatrix, KineticsError> {
        if let Some((a, b)) = self.classify(tol).rdk_violation {
            return Err(KineticsError::NotPlRdk(a, b));
        }
        Ok(self.t_matrix_unchecked())
    }

    /// Builds T from the first reaction leaving each reactant complex.
    fn t_matrix_unchecked(&self) -> TMatrix {
        let net = &self.network;
        let reactants = net.reactant_complexes();
        let m = net.num_species();
        let mut entries = DMatrix::zeros(m, reactants.len());
        for (col, &y) in reactants.iter().enumerate() {
            let j = net
                .reactions()
                .iter()
                .position(|r| r.reactant == y)
                .expect("reactant complex has a reaction");
            for i in 0..m {
                entries[(i, col)] = self.orders[(j, i)];
            }
        }
        TMatrix {
            entries,
            reactant_complexes: reactants,
            num_complexes: net.num_complexes(),
        }
    }

    pub fn check_positive(&self, c: &[f64]) -> Result<(), KineticsError> {
        let m = self.network.num_species();
        if c.len() != m {
            return Err(KineticsError::DimensionMismatch(format!(
                "concentration vector has length {}, expected {m}",
                c.len()
            )));
        }
        match c.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
            Some((index, &value)) => Err(KineticsError::NonpositiveConcentration { index, value }),
            None => Ok(()),
        }
    }

    /// Reaction rates at a positive concentration vector.
    pub fn rates(&self, c: &[f64]) -> Result<Vec<f64>, KineticsError> {
        self.check_positive(c)?;
        let logc: Vec<f64> = c.iter().map(|x| x.ln()).collect();
        Ok(self.rates_from_log(&logc))
    }

    /// Rates evaluated from `u = log c`, skipping validation.
    pub fn rates_from_log(&self, u: &[f64]) -> Vec<f64> {
        (0..self.network.num_reactions())
            .map(|j| {
                let mut exponent = 0.0;
                for (i, ui) in u.iter().enumerate() {
                    let f = self.orders[(j, i)];
                    if f != 0.0 {
                        exponent += f * ui;
                    }
                }
                self.rate_constants[j] * exponent.exp()
            })
            .collect()
    }

    /// Species formation rate `f(c) = N K(c)`.
    pub fn species_formation_rate(&self, c: &[f64]) -> Result<Vec<f64>, KineticsError> {
        let k = self.rates(c)?;
        Ok(self.apply_stoichiometry(&k))
    }

    /// `N v` for a reaction-space vector `v`.
    pub fn apply_stoichiometry(&self, v: &[f64]) -> Vec<f64> {
        let n = &self.stoich;
        (0..n.nrows())
            .map(|i| (0..n.ncols()).map(|j| n[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Per-species gross flux `sum_j |N_ij| K_j`, the natural scale of `f_i`.
    pub fn gross_flux(&self, rates: &[f64]) -> Vec<f64> {
        let n = &self.stoich;
        (0..n.nrows())
            .map(|i| (0..n.ncols()).map(|j| n[(i, j)].abs() * rates[j]).sum())
            .collect()
    }

    /// Jacobian of `f` with respect to `u = log c`: `N diag(K) F`.
    pub fn log_jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let k = self.rates_from_log(u);
        let mut scaled = self.orders.clone();
        for j in 0..scaled.nrows() {
            for i in 0..scaled.ncols() {
                scaled[(j, i)] *= k[j];
            }
        }
        &self.stoich * scaled
    }

    /// `kappa_j = k_j * c_star^F_j`: the reaction rates at `c_star`, used as
    /// Laplacian weights.
    pub fn kappa_from_equilibrium(&self, c_star: &[f64]) -> Result<Vec<f64>, KineticsError> {
        self.rates(c_star)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KineticsClassification {
    pub is_mass_action: bool,
    pub is_pl_rdk: bool,
    /// First pair of reactions sharing a reactant complex with different orders.
    pub rdk_violation: Option<(usize, usize)>,
    pub is_pl_rlk: bool,
}

/// Kinetic-order columns indexed by reactant complex.
#[derive(Debug, Clone, PartialEq)]
pub struct TMatrix {
    /// m x n_r entries.
    pub entries: DMatrix<f64>,
    /// Complex index for each column, ascending.
    pub reactant_complexes: Vec<usize>,
    num_complexes: usize,
}

impl TMatrix {
    pub fn column_of(&self, complex: usize) -> Option<DVector<f64>> {
        self.reactant_complexes
            .iter()
            .position(|&y| y == complex)
            .map(|col| self.entries.column(col).into_owned())
    }

    /// `T` padded with zero columns for non-reactant complexes (m x n).
    pub fn y_tilde(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.entries.nrows(), self.num_complexes);
        for (col, &y) in self.reactant_complexes.iter().enumerate() {
            out.set_column(y, &self.entries.column(col));
        }
        out
    }
}

/// Laplacian map `A_kappa` (n x n): column `y` carries `-kappa` on `y` and
/// `+kappa` on each product `y'` of reactions `y -> y'`.
pub fn laplacian(net: &ReactionNetwork, kappa: &[f64]) -> Result<DMatrix<f64>, KineticsError> {
    if kappa.len() != net.num_reactions() {
        return Err(KineticsError::DimensionMismatch(format!(
            "{} kappa entries for {} reactions",
            kappa.len(),
            net.num_reactions()
        )));
    }
    if let Some((index, &value)) = kappa.iter().enumerate().find(|(_, &k)| k.is_nan() || k <= 0.0) {
        return Err(KineticsError::NonpositiveKappa { index, value });
    }
    let n = net.num_complexes();
    let mut a = DMatrix::zeros(n, n);
    for (r, &k) in net.reactions().iter().zip(kappa) {
        a[(r.product, r.reactant)] += k;
        a[(r.reactant, r.reactant)] -= k;
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::network::{Complex, ReactionNetwork};

    macro_rules! assert_close {
        ($a:expr, $b:expr, $tol:expr) => {{
            let (a, b): (f64, f64) = ($a, $b);
            assert!((a - b).abs() <= $tol * (1.0 + b.abs()), "{a} vs {b}");
        }};
    }

    #[test]
    fn toy_classification() {
        let sys = fixtures::toy_system(1.0, 2.0);
        let cls = sys.classify(DEFAULT_ORDER_TOL);
        assert!(cls.is_pl_rdk);
        assert!(!cls.is_mass_action);
        let mak = PowerLawKineticSystem::mass_action(fixtures::toy_network(), vec![1.0, 2.0]).unwrap();
        assert_eq!(mak.orders().row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert_eq!(mak.orders().row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0]);
        let cls = mak.classify(DEFAULT_ORDER_TOL);
        assert!(cls.is_mass_action && cls.is_pl_rdk);
    }

    #[test]
    fn shared_reactant_with_different_orders_is_not_rdk() {
        let net = ReactionNetwork::from_reaction_list(
            vec!["X1".into(), "X2".into()],
            vec![
                (
                    "R1".into(),
                    Complex::from_counts(&[(0, 1), (1, 1)]),
                    Complex::from_counts(&[(1, 2)]),
                ),
                (
                    "R2".into(),
                    Complex::from_counts(&[(0, 1), (1, 1)]),
                    Complex::from_counts(&[(0, 2)]),
                ),
            ],
        )
        .unwrap();
        let f = DMatrix::from_row_slice(2, 2, &[0.5, 0.8, 0.5, 0.9]);
        let sys = PowerLawKineticSystem::new(net, f, vec![1.0, 1.0]).unwrap();
        let cls = sys.classify(DEFAULT_ORDER_TOL);
        assert!(!cls.is_pl_rdk);
        assert_eq!(cls.rdk_violation, Some((0, 1)));
        assert_eq!(sys.t_matrix(DEFAULT_ORDER_TOL), Err(KineticsError::NotPlRdk(0, 1)));
    }

    #[test]
    fn attach_rejects_bad_input() {
        let net = fixtures::toy_network();
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 0.8, 0.5, 0.8]);
        assert!(matches!(
            PowerLawKineticSystem::new(net.clone(), f.clone(), vec![1.0, 0.0]),
            Err(KineticsError::NonpositiveRate { index: 1, .. })
        ));
        assert!(matches!(
            PowerLawKineticSystem::new(net, DMatrix::zeros(3, 2), vec![1.0, 1.0]),
            Err(KineticsError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn mass_action_rows() {
        let net = ReactionNetwork::from_reaction_list(
            vec!["A".into(), "B".into(), "C".into()],
            vec![(
                "R1".into(),
                Complex::from_counts(&[(0, 1), (1, 1)]),
                Complex::from_counts(&[(2, 1)]),
            )],
        )
        .unwrap();
        let sys = PowerLawKineticSystem::mass_action(net, vec![1.0]).unwrap();
        assert_eq!(sys.orders().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0]);
        let t = sys.t_matrix(DEFAULT_ORDER_TOL).unwrap();
        assert_eq!(t.entries.column(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0]);

        let dimer = ReactionNetwork::from_reaction_list(
            vec!["A".into(), "B".into()],
            vec![("R1".into(), Complex::from_counts(&[(0, 2)]), Complex::from_counts(&[(1, 1)]))],
        )
        .unwrap();
        let sys = PowerLawKineticSystem::mass_action(dimer, vec![1.0]).unwrap();
        assert_eq!(sys.orders().row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 0.0]);
    }

    #[test]
    fn toy_t_matrix_and_y_tilde() {
        let sys = fixtures::toy_system(1.0, 2.0);
        let t = sys.t_matrix(DEFAULT_ORDER_TOL).unwrap();
        assert_eq!(t.reactant_complexes, vec![0, 2]);
        assert_eq!(t.column_of(0).unwrap().as_slice(), &[0.0, 0.8]);
        assert_eq!(t.column_of(2).unwrap().as_slice(), &[0.5, 0.8]);
        let yt = t.y_tilde();
        assert_eq!(yt.ncols(), 4);
        assert_eq!(yt.column(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_eq!(yt.column(2).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.8]);
    }

    #[test]
    fn toy_rates_and_formation() {
        let sys = fixtures::toy_system(1.0, 2.0);
        let k = sys.rates(&[1.0, 1.0]).unwrap();
        assert_eq!(k, vec![1.0, 2.0]);
        let k = sys.rates(&[0.25, 0.5]).unwrap();
        let expected = 0.5_f64.powf(0.8);
        assert_close!(k[0], expected, 1e-14);
        assert_close!(k[1], 2.0 * 0.25_f64.sqrt() * expected, 1e-14);
        assert_close!(k[0], 0.574349, 1e-6);
        let f = sys.species_formation_rate(&[1.0, 1.0]).unwrap();
        assert_eq!(f, vec![-1.0, 1.0]);
        for x2 in [0.01, 0.3, 7.0] {
            let f = sys.species_formation_rate(&[0.25, x2]).unwrap();
            assert!(f.iter().all(|v| v.abs() < 1e-15));
        }
        assert!(matches!(
            sys.rates(&[0.0, 1.0]),
            Err(KineticsError::NonpositiveConcentration { index: 0, .. })
        ));
    }

    #[test]
    fn laplacian_examples() {
        let net = ReactionNetwork::from_reaction_list(
            vec!["A".into(), "B".into()],
            vec![
                ("R1".into(), Complex::from_counts(&[(0, 1)]), Complex::from_counts(&[(1, 1)])),
                ("R2".into(), Complex::from_counts(&[(1, 1)]), Complex::from_counts(&[(0, 1)])),
            ],
        )
        .unwrap();
        let a = laplacian(&net, &[1.0, 1.0]).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));

        let a = laplacian(&fixtures::toy_network(), &[3.0, 5.0]).unwrap();
        // columns: X2, X1, X1+X2, 2X2
        assert_eq!(a.column(0).iter().copied().collect::<Vec<_>>(), vec![-3.0, 3.0, 0.0, 0.0]);
        assert_eq!(a.column(1).iter().copied().collect::<Vec<_>>(), vec![0.0; 4]);
        assert_eq!(a.column(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, -5.0, 5.0]);
        assert_eq!(a.column(3).iter().copied().collect::<Vec<_>>(), vec![0.0; 4]);
        for j in 0..4 {
            assert_eq!(a.column(j).sum(), 0.0);
        }
        assert!(matches!(
            laplacian(&fixtures::toy_network(), &[1.0, -1.0]),
            Err(KineticsError::NonpositiveKappa { index: 1, .. })
        ));
    }

    #[test]
    fn kappa_at_equilibria() {
        let sys = fixtures::toy_system(1.0, 2.0);
        let kappa = sys.kappa_from_equilibrium(&[0.25, 0.5]).unwrap();
        assert_close!(kappa[0], kappa[1], 1e-14);
        assert_close!(kappa[0], 0.574349, 1e-6);
        assert_eq!(sys.kappa_from_equilibrium(&[1.0, 1.0]).unwrap(), vec![1.0, 2.0]);

        let carbon = fixtures::carbon_system();
        let kappa = carbon.kappa_from_equilibrium(&[0.7, 0.15, 0.15]).unwrap();
        assert!((kappa[0] - kappa[1]).abs() <= 1e-12 * kappa[0]);
    }

    #[test]
    fn log_jacobian_matches_central_differences() {
        let sys = fixtures::toy_system(1.3, 0.7);
        let u = [0.4_f64.ln(), 1.9_f64.ln()];
        let jac = sys.log_jacobian(&u);
        let h = 1e-6;
        for j in 0..2 {
            let mut up = u;
            let mut dn = u;
            up[j] += h;
            dn[j] -= h;
            let fp = sys.apply_stoichiometry(&sys.rates_from_log(&up));
            let fm = sys.apply_stoichiometry(&sys.rates_from_log(&dn));
            for i in 0..2 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - jac[(i, j)]).abs() <= 1e-5 * jac[(i, j)].abs().max(1e-12));
            }
        }
    }
}
