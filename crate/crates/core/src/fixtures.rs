//! Built-in systems: the two-pool toy model and the pre-industrial carbon
//! cycle power-law approximation.

use nalgebra::DMatrix;

use crate::kinetics::PowerLawKineticSystem;
use crate::network::{Complex, ReactionNetwork};

/// Kinetic orders of the carbon approximation with no terrestrial off-take,
/// taken at the operating point (0.69, 0.155, 0.155).
pub const CARBON_P1: f64 = -68.0;
pub const CARBON_P2: f64 = -68.0;
pub const CARBON_Q1: f64 = 0.580148;
pub const CARBON_Q2: f64 = 0.910864;

/// `.crn` text of the toy system with k = (1, 2).
pub const TOY_CRN: &str = include_str!("../../../fixtures/toy.crn");
/// `.crn` text of the carbon fixture system.
pub const CARBON_CRN: &str = include_str!("../../../fixtures/carbon.crn");
/// Parameter file for the carbon flux model.
pub const ANDERIES_PARAMS: &str = include_str!("../../../fixtures/anderies.toml");

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// `X2 -> X1`, `X1 + X2 -> 2X2`.
pub fn toy_network() -> ReactionNetwork {
    ReactionNetwork::from_reaction_list(
        names(&["X1", "X2"]),
        vec![
            (
                "R1".into(),
                Complex::from_counts(&[(1, 1)]),
                Complex::from_counts(&[(0, 1)]),
            ),
            (
                "R2".into(),
                Complex::from_counts(&[(0, 1), (1, 1)]),
                Complex::from_counts(&[(1, 2)]),
            ),
        ],
    )
    .expect("toy network is valid")
}

/// Toy network with orders `X2^0.8` and `X1^0.5 X2^0.8`.
pub fn toy_system(k1: f64, k2: f64) -> PowerLawKineticSystem {
    let orders = DMatrix::from_row_slice(2, 2, &[0.0, 0.8, 0.5, 0.8]);
    PowerLawKineticSystem::new(toy_network(), orders, vec![k1, k2]).expect("positive rates")
}

/// Land (A1), atmosphere (A2), ocean (A3):
/// `A1 + 2A2 -> 2A1 + A2`, `A1 + A2 -> 2A2`, `A2 -> A3`, `A3 -> A2`.
pub fn carbon_network() -> ReactionNetwork {
    ReactionNetwork::from_reaction_list(
        names(&["A1", "A2", "A3"]),
        vec![
            (
                "R1".into(),
                Complex::from_counts(&[(0, 1), (1, 2)]),
                Complex::from_counts(&[(0, 2), (1, 1)]),
            ),
            (
                "R2".into(),
                Complex::from_counts(&[(0, 1), (1, 1)]),
                Complex::from_counts(&[(1, 2)]),
            ),
            (
                "R3".into(),
                Complex::from_counts(&[(1, 1)]),
                Complex::from_counts(&[(2, 1)]),
            ),
            (
                "R4".into(),
                Complex::from_counts(&[(2, 1)]),
                Complex::from_counts(&[(1, 1)]),
            ),
        ],
    )
    .expect("carbon network is valid")
}

#[allow(clippy::too_many_arguments)]
pub fn carbon_system_with_orders(
    p1: f64,
    p2: f64,
    q1: f64,
    q2: f64,
    k1: f64,
    k2: f64,
    a_m: f64,
    beta: f64,
) -> PowerLawKineticSystem {
    #[rustfmt::skip]
    let orders = DMatrix::from_row_slice(4, 3, &[
        p1, q1, 0.0,
        p2, q2, 0.0,
        0.0, 1.0, 0.0,
        0.0, 0.0, 1.0,
    ]);
    PowerLawKineticSystem::new(carbon_network(), orders, vec![k1, k2, a_m, a_m * beta])
        .expect("positive rates")
}

/// Rate constant `k2` placing the atmospheric equilibrium at `a2` when `k1 = 1`.
pub fn carbon_k2_for_atmosphere(a2: f64) -> f64 {
    a2.powf(CARBON_Q1 - CARBON_Q2)
}

/// The carbon fixture: k1 = 1, k2 = 0.15^(q1 - q2), a_m = 1, beta = 1, so every
/// positive equilibrium has A2 = A3 = 0.15 and A1 = A0 - 0.3.
pub fn carbon_system() -> PowerLawKineticSystem {
    carbon_system_with_orders(
        CARBON_P1,
        CARBON_P2,
        CARBON_Q1,
        CARBON_Q2,
        1.0,
        carbon_k2_for_atmosphere(0.15),
        1.0,
        1.0,
    )
}

/// Initial pools (2850, 750, 900) / 4500.
pub fn carbon_initial_state() -> Vec<f64> {
    vec![2850.0 / 4500.0, 750.0 / 4500.0, 900.0 / 4500.0]
}
