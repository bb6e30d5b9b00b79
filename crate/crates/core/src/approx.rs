//! Power-law (GMA) approximation of flux models.
//!
//! Each flux rate `V` is replaced at an operating point `x0` by
//! `alpha * prod_i x_i^p_i` with `p_i = dV/dx_i * x_i / V` and
//! `alpha = V(x0) * prod_i x0_i^-p_i`, which matches `V` and its gradient at
//! `x0`. One reaction per flux yields the total CRN representation.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use exmex::{Differentiate, Express, FlatEx};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::equilibria::OdeSystem;
use crate::format::{parse_reaction_head, resolve_terms, FormatError};
use crate::kinetics::{KineticsClassification, KineticsError, PowerLawKineticSystem, DEFAULT_ORDER_TOL};
use crate::linalg::ratio_to_f64;
use crate::network::{Complex, NetworkError, ReactionNetwork};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApproxError {
    #[error("flux `{flux}` has rate {value} at the operating point; it must be positive")]
    ZeroRateAtOperatingPoint { flux: String, value: f64 },
    #[error("operating point coordinate {0} is not strictly positive")]
    NonpositivePoint(usize),
    #[error("operating point has {got} coordinates, model has {expected} pools")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("flux `{0}` provides no analytic gradient")]
    NoGradient(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("rate constant must be positive, got {0}")]
    NonpositiveRate(f64),
    #[error("non-finite derivative for flux `{0}`")]
    NonfiniteDerivative(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
}

/// A flux rate as a function of the pool vector.
pub trait RateFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Gradient with respect to the pools, when known in closed form.
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// `(alpha, orders)` when the rate already is a power law.
    fn as_power_law(&self) -> Option<(f64, Vec<f64>)> {
        None
    }
}

/// `k * prod_i x_i^p_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawRate {
    pub k: f64,
    pub orders: Vec<f64>,
}

impl RateFunction for PowerLawRate {
    fn value(&self, x: &[f64]) -> f64 {
        self.k * x.iter().zip(&self.orders).map(|(xi, p)| xi.powf(*p)).product::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let v = self.value(x);
        Some(x.iter().zip(&self.orders).map(|(xi, p)| p * v / xi).collect())
    }

    fn as_power_law(&self) -> Option<(f64, Vec<f64>)> {
        Some((self.k, self.orders.clone()))
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Rate given by closures, with an optional analytic gradient.
#[derive(Clone)]
pub struct ClosureRate {
    value: ScalarFn,
    gradient: Option<GradFn>,
}

impl ClosureRate {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }
}

impl RateFunction for ClosureRate {
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }
}

pub struct Flux {
    pub label: String,
    pub reactant: Complex,
    pub product: Complex,
    pub rate: Box<dyn RateFunction>,
}

pub struct FluxModel {
    pub pools: Vec<String>,
    pub fluxes: Vec<Flux>,
    pub params: BTreeMap<String, f64>,
}

impl FluxModel {
    /// The model as an ODE system `dc/dt = N V(c)` for simulation.
    pub fn ode(&self) -> Result<FluxOde<'_>, ApproxError> {
        let net = self.network()?;
        let laws = net.conservation_laws();
        let m = self.pools.len();
        Ok(FluxOde {
            model: self,
            stoich: net.stoichiometric_matrix().to_f64(),
            conservation: DMatrix::from_fn(laws.len(), m, |l, i| ratio_to_f64(&laws[l][i])),
        })
    }

    pub fn network(&self) -> Result<ReactionNetwork, NetworkError> {
        ReactionNetwork::from_reaction_list(
            self.pools.clone(),
            self.fluxes
                .iter()
                .map(|f| (f.label.clone(), f.reactant.clone(), f.product.clone()))
                .collect(),
        )
    }
}

pub struct FluxOde<'a> {
    model: &'a FluxModel,
    stoich: DMatrix<f64>,
    conservation: DMatrix<f64>,
}

impl FluxOde<'_> {
    fn gradient(&self, rate: &dyn RateFunction, c: &[f64]) -> Vec<f64> {
        rate.gradient(c).unwrap_or_else(|| {
            (0..c.len())
                .map(|j| {
                    let h = 1e-7 * c[j];
                    let mut plus = c.to_vec();
                    let mut minus = c.to_vec();
                    plus[j] += h;
                    minus[j] -= h;
                    (rate.value(&plus) - rate.value(&minus)) / (plus[j] - minus[j])
                })
                .collect()
        })
    }
}

impl OdeSystem for FluxOde<'_> {
    fn species_names(&self) -> Vec<String> {
        self.model.pools.clone()
    }

    fn rate_of_change(&self, u: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        let v = DVector::from_iterator(
            self.model.fluxes.len(),
            self.model.fluxes.iter().map(|f| f.rate.value(&c)),
        );
        (&self.stoich * v).as_slice().to_vec()
    }

    fn log_jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let c: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        let m = c.len();
        let mut dv = DMatrix::zeros(self.model.fluxes.len(), m);
        for (r, flux) in self.model.fluxes.iter().enumerate() {
            let g = self.gradient(flux.rate.as_ref(), &c);
            for j in 0..m {
                dv[(r, j)] = g[j] * c[j];
            }
        }
        &self.stoich * dv
    }

    fn conservation_matrix(&self) -> DMatrix<f64> {
        self.conservation.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OrderMode {
    /// Central differences with step `h_rel * x0_i`.
    FiniteDifference { h_rel: f64 },
    /// Uses the rate's own gradient.
    Analytic,
}

impl Default for OrderMode {
    fn default() -> Self {
        Self::FiniteDifference { h_rel: 1e-6 }
    }
}

fn check_point(x0: &[f64]) -> Result<(), ApproxError> {
    match x0.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        Some(i) => Err(ApproxError::NonpositivePoint(i)),
        None => Ok(()),
    }
}

fn positive_value(v: &dyn RateFunction, x0: &[f64], label: &str) -> Result<f64, ApproxError> {
    let value = v.value(x0);
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ApproxError::ZeroRateAtOperatingPoint {
            flux: label.to_string(),
            value,
        })
    }
}

fn orders_for(v: &dyn RateFunction, x0: &[f64], mode: OrderMode, label: &str) -> Result<Vec<f64>, ApproxError> {
    check_point(x0)?;
    let value = positive_value(v, x0, label)?;
    let grad = match mode {
        OrderMode::Analytic => {
            if let Some((_, p)) = v.as_power_law() {
                return Ok(p);
            }
            v.gradient(x0).ok_or_else(|| ApproxError::NoGradient(label.to_string()))?
        }
        OrderMode::FiniteDifference { h_rel } => (0..x0.len())
            .map(|i| {
                let h = h_rel * x0[i];
                let mut plus = x0.to_vec();
                let mut minus = x0.to_vec();
                plus[i] += h;
                minus[i] -= h;
                (v.value(&plus) - v.value(&minus)) / (plus[i] - minus[i])
            })
            .collect(),
    };
    if grad.len() != x0.len() {
        return Err(ApproxError::DimensionMismatch {
            expected: x0.len(),
            got: grad.len(),
        });
    }
    let p: Vec<f64> = grad.iter().zip(x0).map(|(g, x)| g * x / value).collect();
    if p.iter().any(|x| !x.is_finite()) {
        return Err(ApproxError::NonfiniteDerivative(label.to_string()));
    }
    Ok(p)
}

/// `p_i = dV/dx_i * x0_i / V(x0)`.
pub fn kinetic_orders(v: &dyn RateFunction, x0: &[f64], mode: OrderMode) -> Result<Vec<f64>, ApproxError> {
    orders_for(v, x0, mode, "rate")
}

/// `alpha = V(x0) * prod_i x0_i^-p_i`.
pub fn rate_constant(v: &dyn RateFunction, x0: &[f64], p: &[f64]) -> Result<f64, ApproxError> {
    rate_constant_for(v, x0, p, "rate")
}

fn rate_constant_for(v: &dyn RateFunction, x0: &[f64], p: &[f64], label: &str) -> Result<f64, ApproxError> {
    check_point(x0)?;
    let value = positive_value(v, x0, label)?;
    let log_scale: f64 = p.iter().zip(x0).map(|(pi, xi)| pi * xi.ln()).sum();
    let alpha = value * (-log_scale).exp();
    if alpha > 0.0 && alpha.is_finite() {
        Ok(alpha)
    } else {
        Err(ApproxError::NonpositiveRate(alpha))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxApproximation {
    pub label: String,
    pub orders: Vec<f64>,
    pub rate_constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmaApproximation {
    pub operating_point: Vec<f64>,
    pub fluxes: Vec<FluxApproximation>,
    pub system: PowerLawKineticSystem,
    pub classification: KineticsClassification,
    pub warnings: Vec<String>,
}

/// Approximates every flux separately and assembles the power-law system.
pub fn approximate_flux_model(
    model: &FluxModel,
    x0: &[f64],
    mode: OrderMode,
) -> Result<GmaApproximation, ApproxError> {
    if x0.len() != model.pools.len() {
        return Err(ApproxError::DimensionMismatch {
            expected: model.pools.len(),
            got: x0.len(),
        });
    }
    check_point(x0)?;
    let mut fluxes = Vec::with_capacity(model.fluxes.len());
    for flux in &model.fluxes {
        let rate = flux.rate.as_ref();
        let (orders, alpha) = match (mode, rate.as_power_law()) {
            (OrderMode::Analytic, Some((k, p))) => (p, k),
            _ => {
                let p = orders_for(rate, x0, mode, &flux.label)?;
                let alpha = rate_constant_for(rate, x0, &p, &flux.label)?;
                (p, alpha)
            }
        };
        fluxes.push(FluxApproximation {
            label: flux.label.clone(),
            orders,
            rate_constant: alpha,
        });
    }
    let network = model.network()?;
    let m = model.pools.len();
    let orders = DMatrix::from_fn(fluxes.len(), m, |j, i| fluxes[j].orders[i]);
    let rates = fluxes.iter().map(|f| f.rate_constant).collect();
    let system = PowerLawKineticSystem::new(network, orders, rates)?;
    let classification = system.classify(DEFAULT_ORDER_TOL);
    let mut warnings = Vec::new();
    if let Some((a, b)) = classification.rdk_violation {
        warnings.push(format!(
            "result is not PL-RDK: fluxes `{}` and `{}` share a reactant complex but differ in kinetic orders",
            fluxes[a].label, fluxes[b].label
        ));
    }
    Ok(GmaApproximation {
        operating_point: x0.to_vec(),
        fluxes,
        system,
        classification,
        warnings,
    })
}

/// Two pools with `X2 -> X1` at `k1 X2^0.8` and `X1 + X2 -> 2X2` at
/// `k2 X1^0.5 X2^0.8`.
pub fn toy_model(k1: f64, k2: f64) -> Result<FluxModel, ApproxError> {
    for k in [k1, k2] {
        if !(k > 0.0 && k.is_finite()) {
            return Err(ApproxError::NonpositiveRate(k));
        }
    }
    Ok(FluxModel {
        pools: vec!["X1".into(), "X2".into()],
        fluxes: vec![
            Flux {
                label: "R1".into(),
                reactant: Complex::from_counts(&[(1, 1)]),
                product: Complex::from_counts(&[(0, 1)]),
                rate: Box::new(PowerLawRate {
                    k: k1,
                    orders: vec![0.0, 0.8],
                }),
            },
            Flux {
                label: "R2".into(),
                reactant: Complex::from_counts(&[(0, 1), (1, 1)]),
                product: Complex::from_counts(&[(1, 2)]),
                rate: Box::new(PowerLawRate {
                    k: k2,
                    orders: vec![0.5, 0.8],
                }),
            },
        ],
        params: BTreeMap::from([("k1".into(), k1), ("k2".into(), k2)]),
    })
}

/// Parameter names of the carbon model.
pub const CARBON_PARAMETERS: [&str; 15] = [
    "r_tc",
    "k",
    "alpha_offtake",
    "a_m",
    "beta",
    "a_f",
    "b_f",
    "a_p",
    "b_p",
    "c_p",
    "a_r",
    "b_r",
    "c_r",
    "a_T",
    "b_T",
];

#[derive(Debug, Clone, Copy)]
struct CarbonParams {
    r_tc: f64,
    k: f64,
    alpha: f64,
    a_f: f64,
    b_f: f64,
    a_p: f64,
    b_p: f64,
    c_p: f64,
    a_r: f64,
    b_r: f64,
    c_r: f64,
    a_t: f64,
    b_t: f64,
}

impl CarbonParams {
    fn temperature(&self, a2: f64) -> f64 {
        self.a_t * a2 + self.b_t
    }

    /// Photosynthesis `P(A2)` and `dP/dA2`.
    fn photosynthesis(&self, a2: f64) -> (f64, f64) {
        let t = self.temperature(a2);
        let p = self.a_f * a2.powf(self.b_f) * self.a_p * t.powf(self.b_p) * (-self.c_p * t).exp();
        let dp = p * (self.b_f / a2 + self.a_t * (self.b_p / t - self.c_p));
        (p, dp)
    }

    /// Respiration `R(A2)` and `dR/dA2`.
    fn respiration(&self, a2: f64) -> (f64, f64) {
        let t = self.temperature(a2);
        let r = self.a_r * t.powf(self.b_r) * (-self.c_r * t).exp();
        let dr = r * self.a_t * (self.b_r / t - self.c_r);
        (r, dr)
    }

    /// Logistic land factor `A1 (1 - A1/k)` and its derivative.
    fn logistic(&self, a1: f64) -> (f64, f64) {
        (a1 * (1.0 - a1 / self.k), 1.0 - 2.0 * a1 / self.k)
    }
}

/// Pre-industrial carbon cycle over land (A1), atmosphere (A2) and ocean (A3).
///
/// All parameters in [`CARBON_PARAMETERS`] are required; any other key is
/// rejected. The land fluxes carry analytic gradients.
pub fn carbon_preindustrial(params: &BTreeMap<String, f64>) -> Result<FluxModel, ApproxError> {
    if let Some(unknown) = params.keys().find(|k| !CARBON_PARAMETERS.contains(&k.as_str())) {
        return Err(ApproxError::UnknownParameter(unknown.clone()));
    }
    let get = |name: &str| {
        params
            .get(name)
            .copied()
            .ok_or_else(|| ApproxError::MissingParameter(name.to_string()))
    };
    let cp = CarbonParams {
        r_tc: get("r_tc")?,
        k: get("k")?,
        alpha: get("alpha_offtake")?,
        a_f: get("a_f")?,
        b_f: get("b_f")?,
        a_p: get("a_p")?,
        b_p: get("b_p")?,
        c_p: get("c_p")?,
        a_r: get("a_r")?,
        b_r: get("b_r")?,
        c_r: get("c_r")?,
        a_t: get("a_T")?,
        b_t: get("b_T")?,
    };
    let a_m = get("a_m")?;
    let beta = get("beta")?;

    let uptake = ClosureRate::new(move |x: &[f64]| {
        cp.r_tc * cp.photosynthesis(x[1]).0 * cp.logistic(x[0]).0
    })
    .with_gradient(move |x: &[f64]| {
        let (p, dp) = cp.photosynthesis(x[1]);
        let (l, dl) = cp.logistic(x[0]);
        vec![cp.r_tc * p * dl, cp.r_tc * dp * l, 0.0]
    });
    let release = ClosureRate::new(move |x: &[f64]| {
        cp.r_tc * cp.respiration(x[1]).0 * cp.logistic(x[0]).0 + cp.alpha * x[0]
    })
    .with_gradient(move |x: &[f64]| {
        let (r, dr) = cp.respiration(x[1]);
        let (l, dl) = cp.logistic(x[0]);
        vec![cp.r_tc * r * dl + cp.alpha, cp.r_tc * dr * l, 0.0]
    });

    Ok(FluxModel {
        pools: vec!["A1".into(), "A2".into(), "A3".into()],
        fluxes: vec![
            Flux {
                label: "R1".into(),
                reactant: Complex::from_counts(&[(0, 1), (1, 2)]),
                product: Complex::from_counts(&[(0, 2), (1, 1)]),
                rate: Box::new(uptake),
            },
            Flux {
                label: "R2".into(),
                reactant: Complex::from_counts(&[(0, 1), (1, 1)]),
                product: Complex::from_counts(&[(1, 2)]),
                rate: Box::new(release),
            },
            Flux {
                label: "R3".into(),
                reactant: Complex::from_counts(&[(1, 1)]),
                product: Complex::from_counts(&[(2, 1)]),
                rate: Box::new(PowerLawRate {
                    k: a_m,
                    orders: vec![0.0, 1.0, 0.0],
                }),
            },
            Flux {
                label: "R4".into(),
                reactant: Complex::from_counts(&[(2, 1)]),
                product: Complex::from_counts(&[(1, 1)]),
                rate: Box::new(PowerLawRate {
                    k: a_m * beta,
                    orders: vec![0.0, 0.0, 1.0],
                }),
            },
        ],
        params: params.clone(),
    })
}

/// Rate given by a parsed expression over pools and named parameters.
struct ExpressionRate {
    expr: FlatEx<f64>,
    /// Per expression variable: pool index, or a fixed parameter value.
    slots: Vec<Slot>,
    /// Per pool: derivative expression, `None` when the pool does not occur.
    partials: Vec<Option<FlatEx<f64>>>,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Pool(usize),
    Param(f64),
}

impl ExpressionRate {
    fn args(&self, x: &[f64]) -> Vec<f64> {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Pool(i) => x[*i],
                Slot::Param(v) => *v,
            })
            .collect()
    }
}

impl RateFunction for ExpressionRate {
    fn value(&self, x: &[f64]) -> f64 {
        self.expr.eval(&self.args(x)).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let args = self.args(x);
        self.partials
            .iter()
            .map(|p| match p {
                Some(d) => d.eval(&args).ok(),
                None => Some(0.0),
            })
            .collect()
    }
}

/// Parses a flux-model file.
///
/// ```text
/// pools A B
/// param k = 0.7
/// flux F1: A -> B = k * A^2 / (1 + B)
/// ```
///
/// Expressions may use pools and parameters, the usual arithmetic operators,
/// `^`, and functions such as `exp`, `ln`, `sqrt`. `PI` and `E` are reserved
/// constants. Parameters from `overrides` replace values given in the file.
pub fn parse_flux_model(text: &str, overrides: &BTreeMap<String, f64>) -> Result<FluxModel, ApproxError> {
    let mut pools: Vec<String> = Vec::new();
    let mut params: BTreeMap<String, f64> = BTreeMap::new();
    let mut lines_with_flux = Vec::new();
    let syntax = |line: usize, col: usize, expected: &str| {
        ApproxError::Format(FormatError::Syntax {
            line,
            col,
            expected: expected.into(),
        })
    };
    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full.split('#').next().unwrap_or("");
        let trimmed = content.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - trimmed.len();
        let (keyword, rest) = trimmed.split_at(trimmed.find(char::is_whitespace).unwrap_or(trimmed.len()));
        match keyword {
            "pools" => {
                for name in rest.split_whitespace() {
                    if !is_identifier(name) {
                        return Err(syntax(line, indent + 1, "pool name"));
                    }
                    if pools.iter().any(|p| p == name) {
                        return Err(semantic(line, format!("pool `{name}` declared twice")));
                    }
                    pools.push(name.to_string());
                }
            }
            "param" => {
                let Some((name, value)) = rest.split_once('=') else {
                    return Err(syntax(line, indent + keyword.len() + 1, "`name = value`"));
                };
                let name = name.trim();
                if !is_identifier(name) {
                    return Err(syntax(line, indent + keyword.len() + 2, "parameter name"));
                }
                let value: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| syntax(line, indent + keyword.len() + 2, "numeric parameter value"))?;
                params.insert(name.to_string(), value);
            }
            "flux" => lines_with_flux.push((line, indent + keyword.len(), rest.to_string())),
            _ => return Err(syntax(line, indent + 1, "`pools`, `param` or `flux`")),
        }
    }
    if pools.is_empty() && lines_with_flux.is_empty() {
        return Err(FormatError::Empty.into());
    }
    for (name, value) in overrides {
        params.insert(name.clone(), *value);
    }
    let lookup: HashMap<String, usize> = pools.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();

    let mut fluxes = Vec::with_capacity(lines_with_flux.len());
    for (line, offset, rest) in lines_with_flux {
        let (label, reactant, product, stop) = parse_reaction_head(&rest, line).map_err(|e| shift(e, offset))?;
        let tail: String = rest.chars().skip(stop).collect();
        let tail_trim = tail.trim_start();
        let Some(expr_text) = tail_trim.strip_prefix('=') else {
            let col = offset + stop + (tail.len() - tail_trim.len()) + 1;
            return Err(syntax(line, col, "`=` followed by a rate expression"));
        };
        let reactant = resolve_terms(&reactant, &lookup, line)?;
        let product = resolve_terms(&product, &lookup, line)?;
        let rate = build_expression(expr_text.trim(), &lookup, &params, line)?;
        fluxes.push(Flux {
            label,
            reactant,
            product,
            rate: Box::new(rate),
        });
    }
    Ok(FluxModel { pools, fluxes, params })
}

fn shift(e: FormatError, offset: usize) -> FormatError {
    match e {
        FormatError::Syntax { line, col, expected } => FormatError::Syntax {
            line,
            col: col + offset,
            expected,
        },
        other => other,
    }
}

fn semantic(line: usize, message: String) -> ApproxError {
    ApproxError::Format(FormatError::Semantic { line, message })
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn build_expression(
    text: &str,
    pools: &HashMap<String, usize>,
    params: &BTreeMap<String, f64>,
    line: usize,
) -> Result<ExpressionRate, ApproxError> {
    let expr = FlatEx::<f64>::parse(text).map_err(|e| semantic(line, format!("rate expression: {e}")))?;
    let mut slots = Vec::new();
    for name in expr.var_names() {
        if let Some(&i) = pools.get(name) {
            slots.push(Slot::Pool(i));
        } else if let Some(&v) = params.get(name) {
            slots.push(Slot::Param(v));
        } else {
            return Err(ApproxError::MissingParameter(name.clone()));
        }
    }
    let mut partials = vec![None; pools.len()];
    for (var_idx, slot) in slots.iter().enumerate() {
        if let Slot::Pool(i) = slot {
            let d = expr
                .clone()
                .partial(var_idx)
                .map_err(|e| semantic(line, format!("cannot differentiate rate expression: {e}")))?;
            partials[*i] = Some(d);
        }
    }
    Ok(ExpressionRate { expr, slots, partials })
}
