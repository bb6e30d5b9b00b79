//! Reaction network representation and structural analysis: linkage classes,
//! strong linkage classes, the complex/incidence/stoichiometric matrices and
//! the deficiency indices.
//!
//! All indices here are computed exactly over the rationals.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{Rational, RationalMatrix};
use num_traits::{Signed, Zero};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("network has no species")]
    NoSpecies,
    #[error("network has no reactions")]
    NoReactions,
    #[error("duplicate species name `{0}`")]
    DuplicateSpecies(String),
    #[error("complexes {0} and {1} are identical")]
    DuplicateComplex(usize, usize),
    #[error("reaction `{0}` has identical reactant and product")]
    SelfLoopReaction(String),
    #[error("reaction `{0}` duplicates an earlier reaction between the same complexes")]
    DuplicateReaction(String),
    #[error("complex {0} takes part in no reaction")]
    IsolatedComplex(usize),
    #[error("unknown species index {0}")]
    UnknownSpecies(usize),
    #[error("unknown complex index {0}")]
    UnknownComplex(usize),
    #[error("negative stoichiometric coefficient for species {0}")]
    NegativeCoefficient(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Species {
    pub name: String,
    pub index: usize,
}

/// A formal non-negative combination of species. Zero coefficients are never
/// stored, so the empty map is the zero complex.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Complex {
    coefficients: BTreeMap<usize, Rational>,
}

impl Complex {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds a complex from `(species, coefficient)` terms. Repeated species are
    /// summed and zero entries dropped.
    pub fn from_terms<I>(terms: I) -> Result<Self, NetworkError>
    where
        I: IntoIterator<Item = (usize, Rational)>,
    {
        let mut coefficients = BTreeMap::new();
        for (species, coeff) in terms {
            if coeff.is_negative() {
                return Err(NetworkError::NegativeCoefficient(species));
            }
            *coefficients.entry(species).or_insert_with(Rational::zero) += coeff;
        }
        coefficients.retain(|_, c| !c.is_zero());
        Ok(Self { coefficients })
    }

    /// Integer-coefficient shorthand, mostly for fixtures and tests.
    pub fn from_counts(counts: &[(usize, i64)]) -> Self {
        Self::from_terms(counts.iter().map(|&(s, c)| (s, Rational::from_integer(c))))
            .expect("non-negative counts")
    }

    pub fn coefficient(&self, species: usize) -> Rational {
        self.coefficients
            .get(&species)
            .copied()
            .unwrap_or_else(Rational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, Rational)> + '_ {
        self.coefficients.iter().map(|(&s, &c)| (s, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.coefficients.keys().copied()
    }

    pub fn to_dense(&self, m: usize) -> Vec<Rational> {
        (0..m).map(|i| self.coefficient(i)).collect()
    }

    /// Renders with species names, e.g. `X1 + 2X2`, `3/2A`, or `0`.
    pub fn display<'a>(&'a self, names: &'a [String]) -> ComplexDisplay<'a> {
        ComplexDisplay {
            complex: self,
            names,
        }
    }
}

pub struct ComplexDisplay<'a> {
    complex: &'a Complex,
    names: &'a [String],
}

impl fmt::Display for ComplexDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.complex.is_zero() {
            return f.write_str("0");
        }
        for (k, (s, c)) in self.complex.terms().enumerate() {
            if k > 0 {
                f.write_str(" + ")?;
            }
            if c != Rational::from_integer(1) {
                write!(f, "{c}")?;
            }
            f.write_str(&self.names[s])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reaction {
    pub reactant: usize,
    pub product: usize,
    pub label: String,
}

/// A validated reaction network: species, distinct complexes, and reactions
/// between them with no self-loops and no isolated complexes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactionNetwork {
    species: Vec<Species>,
    complexes: Vec<Complex>,
    reactions: Vec<Reaction>,
}

impl ReactionNetwork {
    pub fn new(
        species: Vec<String>,
        complexes: Vec<Complex>,
        reactions: Vec<Reaction>,
    ) -> Result<Self, NetworkError> {
        if species.is_empty() {
            return Err(NetworkError::NoSpecies);
        }
        if reactions.is_empty() {
            return Err(NetworkError::NoReactions);
        }
        for (i, name) in species.iter().enumerate() {
            if species[..i].contains(name) {
                return Err(NetworkError::DuplicateSpecies(name.clone()));
            }
        }
        let m = species.len();
        for (i, c) in complexes.iter().enumerate() {
            if let Some(s) = c.support().find(|&s| s >= m) {
                return Err(NetworkError::UnknownSpecies(s));
            }
            if let Some(j) = complexes[..i].iter().position(|d| d == c) {
                return Err(NetworkError::DuplicateComplex(j, i));
            }
        }
        let n = complexes.len();
        let mut touched = vec![false; n];
        for (j, r) in reactions.iter().enumerate() {
            for idx in [r.reactant, r.product] {
                if idx >= n {
                    return Err(NetworkError::UnknownComplex(idx));
                }
            }
            if r.reactant == r.product {
                return Err(NetworkError::SelfLoopReaction(r.label.clone()));
            }
            if reactions[..j]
                .iter()
                .any(|q| q.reactant == r.reactant && q.product == r.product)
            {
                return Err(NetworkError::DuplicateReaction(r.label.clone()));
            }
            touched[r.reactant] = true;
            touched[r.product] = true;
        }
        if let Some(i) = touched.iter().position(|t| !t) {
            return Err(NetworkError::IsolatedComplex(i));
        }
        Ok(Self {
            species: species
                .into_iter()
                .enumerate()
                .map(|(index, name)| Species { name, index })
                .collect(),
            complexes,
            reactions,
        })
    }

    /// Builds a network from reactions given as complex pairs, collecting the
    /// distinct complexes in order of first appearance.
    pub fn from_reaction_list(
        species: Vec<String>,
        reactions: Vec<(String, Complex, Complex)>,
    ) -> Result<Self, NetworkError> {
        let mut complexes: Vec<Complex> = Vec::new();
        let index_of = |c: Complex, complexes: &mut Vec<Complex>| {
            if let Some(i) = complexes.iter().position(|d| *d == c) {
                i
            } else {
                complexes.push(c);
                complexes.len() - 1
            }
        };
        let mut arcs = Vec::with_capacity(reactions.len());
        for (label, reactant, product) in reactions {
            let reactant = index_of(reactant, &mut complexes);
            let product = index_of(product, &mut complexes);
            arcs.push(Reaction {
                reactant,
                product,
                label,
            });
        }
        Self::new(species, complexes, arcs)
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn species_names(&self) -> Vec<String> {
        self.species.iter().map(|s| s.name.clone()).collect()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn complexes(&self) -> &[Complex] {
        &self.complexes
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    /// Number of species, `m`.
    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    /// Number of complexes, `n`.
    pub fn num_complexes(&self) -> usize {
        self.complexes.len()
    }

    /// Number of reactions, `r`.
    pub fn num_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn complex_label(&self, i: usize) -> String {
        self.complexes[i].display(&self.species_names()).to_string()
    }

    /// Complexes that are the reactant of at least one reaction, ascending.
    pub fn reactant_complexes(&self) -> Vec<usize> {
        let mut is_reactant = vec![false; self.num_complexes()];
        for r in &self.reactions {
            is_reactant[r.reactant] = true;
        }
        (0..self.num_complexes()).filter(|&i| is_reactant[i]).collect()
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_complexes()];
        for r in &self.reactions {
            adj[r.reactant].push(r.product);
        }
        adj
    }

    /// Weakly connected components of the complex digraph.
    pub fn linkage_classes(&self) -> Vec<Vec<usize>> {
        let n = self.num_complexes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for r in &self.reactions {
            let a = find(&mut parent, r.reactant);
            let b = find(&mut parent, r.product);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        group_by_label(&roots)
    }

    /// Strongly connected components of the complex digraph (Tarjan).
    pub fn strong_linkage_classes(&self) -> Vec<Vec<usize>> {
        let comp = tarjan(&self.successors());
        group_by_label(&comp)
    }

    /// Strong linkage classes with no arc leaving the class.
    pub fn terminal_strong_linkage_classes(&self) -> Vec<Vec<usize>> {
        let classes = self.strong_linkage_classes();
        let mut class_of = vec![0; self.num_complexes()];
        for (k, class) in classes.iter().enumerate() {
            for &i in class {
                class_of[i] = k;
            }
        }
        let mut has_exit = vec![false; classes.len()];
        for r in &self.reactions {
            if class_of[r.reactant] != class_of[r.product] {
                has_exit[class_of[r.reactant]] = true;
            }
        }
        classes
            .into_iter()
            .enumerate()
            .filter(|(k, _)| !has_exit[*k])
            .map(|(_, c)| c)
            .collect()
    }

    /// Complexes outside every terminal strong linkage class, ascending.
    pub fn nonterminal_complexes(&self) -> Vec<usize> {
        let mut terminal = vec![false; self.num_complexes()];
        for class in self.terminal_strong_linkage_classes() {
            for i in class {
                terminal[i] = true;
            }
        }
        (0..self.num_complexes()).filter(|&i| !terminal[i]).collect()
    }

    /// Matrix of complexes `Y` (m x n).
    pub fn complex_matrix(&self) -> RationalMatrix {
        let mut y = RationalMatrix::zeros(self.num_species(), self.num_complexes());
        for (j, c) in self.complexes.iter().enumerate() {
            for (i, v) in c.terms() {
                y.set(i, j, v);
            }
        }
        y
    }

    /// Incidence matrix `I_a` (n x r): column j is `e_product - e_reactant`.
    pub fn incidence_matrix(&self) -> RationalMatrix {
        let mut ia = RationalMatrix::zeros(self.num_complexes(), self.num_reactions());
        for (j, r) in self.reactions.iter().enumerate() {
            ia.set(r.product, j, Rational::from_integer(1));
            ia.set(r.reactant, j, Rational::from_integer(-1));
        }
        ia
    }

    /// Stoichiometric matrix `N = Y I_a` (m x r).
    pub fn stoichiometric_matrix(&self) -> RationalMatrix {
        self.complex_matrix().mul(&self.incidence_matrix())
    }

    pub fn matrices(&self) -> NetworkMatrices {
        let y = self.complex_matrix();
        let incidence = self.incidence_matrix();
        let stoichiometric = y.mul(&incidence);
        NetworkMatrices {
            y,
            incidence,
            stoichiometric,
        }
    }

    /// Reactant matrix: `Y` restricted to reactant-complex columns.
    pub fn reactant_matrix(&self) -> RationalMatrix {
        self.complex_matrix().select_columns(&self.reactant_complexes())
    }

    /// Rank of the network, the dimension of the stoichiometric subspace.
    pub fn rank(&self) -> usize {
        self.stoichiometric_matrix().rank()
    }

    pub fn deficiency(&self) -> usize {
        self.structural_report().deficiency
    }

    pub fn structural_report(&self) -> StructuralReport {
        let names = self.species_names();
        let label = |i: usize| self.complexes[i].display(&names).to_string();
        let linkage_classes = self.linkage_classes();
        let strong = self.strong_linkage_classes();
        let terminal = self.terminal_strong_linkage_classes();
        let nonterminal = self.nonterminal_complexes();
        let reactants = self.reactant_complexes();
        let n = self.num_complexes();
        let rank = self.rank();
        let reactant_rank = self.reactant_matrix().rank();
        let ell = linkage_classes.len();
        let labelled = |classes: &[Vec<usize>]| -> Vec<Vec<String>> {
            classes
                .iter()
                .map(|c| c.iter().map(|&i| label(i)).collect())
                .collect()
        };
        StructuralReport {
            species: names.clone(),
            complexes: (0..n).map(label).collect(),
            n,
            r: self.num_reactions(),
            m: self.num_species(),
            linkage_class_labels: labelled(&linkage_classes),
            strong_linkage_class_labels: labelled(&strong),
            terminal_class_labels: labelled(&terminal),
            nonterminal_labels: nonterminal.iter().map(|&i| label(i)).collect(),
            num_linkage_classes: ell,
            num_strong_linkage_classes: strong.len(),
            num_terminal_classes: terminal.len(),
            rank,
            // n - l - s is non-negative for every network
            deficiency: n - ell - rank,
            num_reactant_complexes: reactants.len(),
            reactant_rank,
            reactant_deficiency: reactants.len() - reactant_rank,
            linkage_classes,
            strong_linkage_classes: strong,
            terminal_classes: terminal,
            nonterminal_complexes: nonterminal,
        }
    }

    /// Basis of the left null space of `N`: vectors `w` with `w^T N = 0`,
    /// scaled to primitive integers.
    pub fn conservation_laws(&self) -> Vec<Vec<Rational>> {
        self.stoichiometric_matrix().transpose().null_space()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkMatrices {
    pub y: RationalMatrix,
    pub incidence: RationalMatrix,
    pub stoichiometric: RationalMatrix,
}

/// CRNT indices of a network. Complex indices refer to the network's complex
/// list; the `*_labels` fields carry the same partitions rendered as text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StructuralReport {
    pub species: Vec<String>,
    pub complexes: Vec<String>,
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub linkage_classes: Vec<Vec<usize>>,
    pub strong_linkage_classes: Vec<Vec<usize>>,
    pub terminal_classes: Vec<Vec<usize>>,
    pub nonterminal_complexes: Vec<usize>,
    pub linkage_class_labels: Vec<Vec<String>>,
    pub strong_linkage_class_labels: Vec<Vec<String>>,
    pub terminal_class_labels: Vec<Vec<String>>,
    pub nonterminal_labels: Vec<String>,
    pub num_linkage_classes: usize,
    pub num_strong_linkage_classes: usize,
    pub num_terminal_classes: usize,
    pub rank: usize,
    pub deficiency: usize,
    pub num_reactant_complexes: usize,
    pub reactant_rank: usize,
    pub reactant_deficiency: usize,
}

/// Groups indices `0..labels.len()` by label, classes ordered by smallest member.
fn group_by_label(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut slot: BTreeMap<usize, usize> = BTreeMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        let k = *slot.entry(l).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[k].push(i);
    }
    groups
}

/// Iterative Tarjan; returns a component id per vertex.
fn tarjan(adj: &[Vec<usize>]) -> Vec<usize> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![UNSEEN; n];
    let mut next_index = 0;
    let mut next_comp = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (vertex, next edge position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}
