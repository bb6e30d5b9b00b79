//! Seeded random networks and power-law systems for property tests.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::kinetics::PowerLawKineticSystem;
use crate::network::{Complex, ReactionNetwork};

#[derive(Debug, Clone)]
pub struct RandomNetworkOptions {
    pub min_species: usize,
    pub max_species: usize,
    pub max_complexes: usize,
    /// Coefficients are drawn from `0..=max_coefficient`.
    pub max_coefficient: i64,
    pub max_reactions: usize,
}

impl Default for RandomNetworkOptions {
    fn default() -> Self {
        Self {
            min_species: 2,
            max_species: 6,
            max_complexes: 10,
            max_coefficient: 2,
            max_reactions: 14,
        }
    }
}

/// A valid network: distinct complexes, each in at least one reaction, no
/// self-loops or repeated reactions. Linkage classes are built as random
/// spanning trees, then extra arcs are added.
pub fn random_network<R: Rng + ?Sized>(rng: &mut R, opts: &RandomNetworkOptions) -> ReactionNetwork {
    let m = rng.random_range(opts.min_species..=opts.max_species);
    let distinct = (opts.max_coefficient as usize + 1).saturating_pow(m as u32);
    let max_n = opts.max_complexes.min(distinct).min(opts.max_reactions + 1);
    let n = rng.random_range(3.min(max_n)..=max_n);

    let mut complexes: Vec<Complex> = Vec::with_capacity(n);
    while complexes.len() < n {
        let counts: Vec<(usize, i64)> = (0..m)
            .map(|i| (i, rng.random_range(0..=opts.max_coefficient)))
            .collect();
        let c = Complex::from_counts(&counts);
        if !complexes.contains(&c) {
            complexes.push(c);
        }
    }

    // split complexes into groups of at least two, one spanning tree each
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut rest = &order[..];
    while !rest.is_empty() {
        let size = if rest.len() <= 3 {
            rest.len()
        } else {
            rng.random_range(2..=rest.len() - 2)
        };
        groups.push(rest[..size].to_vec());
        rest = &rest[size..];
    }
    let mut arcs: Vec<(usize, usize)> = Vec::new();
    for g in &groups {
        for k in 1..g.len() {
            let other = g[rng.random_range(0..k)];
            let arc = if rng.random_bool(0.5) { (g[k], other) } else { (other, g[k]) };
            arcs.push(arc);
        }
    }
    let extra = rng.random_range(0..=opts.max_reactions.saturating_sub(arcs.len()));
    for _ in 0..extra {
        let g = &groups[rng.random_range(0..groups.len())];
        let a = g[rng.random_range(0..g.len())];
        let b = g[rng.random_range(0..g.len())];
        if a != b && !arcs.contains(&(a, b)) {
            arcs.push((a, b));
        }
    }
    arcs.shuffle(rng);

    let species = (1..=m).map(|i| format!("S{i}")).collect();
    let reactions = arcs
        .iter()
        .enumerate()
        .map(|(j, &(a, b))| (format!("R{}", j + 1), complexes[a].clone(), complexes[b].clone()))
        .collect();
    ReactionNetwork::from_reaction_list(species, reactions).expect("generated network is valid")
}

/// Positive rates, log-uniform in `[1e-3, 1e3]`.
pub fn random_rates<R: Rng + ?Sized>(rng: &mut R, r: usize) -> Vec<f64> {
    (0..r).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect()
}

/// Random power-law system on a random network. About a third of the orders
/// are zero; the rest are uniform in `[-3, 3]`.
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, opts: &RandomNetworkOptions) -> PowerLawKineticSystem {
    let net = random_network(rng, opts);
    let (r, m) = (net.num_reactions(), net.num_species());
    let orders = DMatrix::from_fn(r, m, |_, _| {
        if rng.random_bool(1.0 / 3.0) {
            0.0
        } else {
            rng.random_range(-3.0..3.0)
        }
    });
    let rates = random_rates(rng, r);
    PowerLawKineticSystem::new(net, orders, rates).expect("positive rates")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_networks_respect_bounds() {
        let opts = RandomNetworkOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let net = random_network(&mut rng, &opts);
            assert!((2..=6).contains(&net.num_species()));
            assert!((3..=10).contains(&net.num_complexes()));
            assert!(net.num_reactions() <= 14);
        }
    }

    #[test]
    fn same_seed_same_system() {
        let opts = RandomNetworkOptions::default();
        let a = random_system(&mut ChaCha8Rng::seed_from_u64(11), &opts);
        let b = random_system(&mut ChaCha8Rng::seed_from_u64(11), &opts);
        assert_eq!(a, b);
    }
}
