//! Time integration of `dc/dt = f(c)` in log-concentration coordinates.
//!
//! With `u = log c` the system becomes `du_i/dt = f_i(c) / c_i`, which keeps
//! every state strictly positive and makes power laws with negative or
//! fractional orders smooth. Three methods are provided: classical RK4 with a
//! fixed step, Dormand-Prince 5(4), and a linearly implicit Rosenbrock 2(3)
//! pair (the Shampine-Reichelt `ode23s` scheme) for stiff systems. After each
//! accepted step the state can be projected back onto its stoichiometric
//! compatibility class.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::format::fmt_g17;
use crate::kinetics::PowerLawKineticSystem;
use crate::linalg::ratio_to_f64;

/// An autonomous system `dc/dt = f(c)` on the positive orthant, evaluated in
/// log coordinates `u = log c`.
pub trait OdeSystem: Sync {
    fn species_names(&self) -> Vec<String>;

    /// `f(e^u)`.
    fn rate_of_change(&self, u: &[f64]) -> Vec<f64>;

    /// `df_i/du_j`.
    fn log_jacobian(&self, u: &[f64]) -> DMatrix<f64>;

    /// Conservation laws as rows; may have zero rows.
    fn conservation_matrix(&self) -> DMatrix<f64>;
}

impl OdeSystem for PowerLawKineticSystem {
    fn species_names(&self) -> Vec<String> {
        self.network().species_names()
    }

    fn rate_of_change(&self, u: &[f64]) -> Vec<f64> {
        let k = self.rates_from_log(u);
        self.apply_stoichiometry(&k)
    }

    fn log_jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        PowerLawKineticSystem::log_jacobian(self, u)
    }

    fn conservation_matrix(&self) -> DMatrix<f64> {
        let laws = self.network().conservation_laws();
        let m = self.network().num_species();
        DMatrix::from_fn(laws.len(), m, |l, i| ratio_to_f64(&laws[l][i]))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("initial state is not strictly positive (species {0})")]
    NonpositiveInitial(usize),
    #[error("t_end must be positive, got {0}")]
    BadHorizon(f64),
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64, state: Vec<f64> },
    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64, state: Vec<f64> },
    #[error("species {species} depleted below representable range at t = {t}")]
    Depleted { t: f64, species: usize, state: Vec<f64> },
    #[error("maximum number of steps ({0}) exceeded")]
    MaxSteps(usize, Vec<f64>),
}

impl IntegrationError {
    /// Last accepted state, when integration got under way.
    pub fn last_state(&self) -> Option<&[f64]> {
        match self {
            Self::StepSizeUnderflow { state, .. }
            | Self::BlowUp { state, .. }
            | Self::Depleted { state, .. }
            | Self::MaxSteps(_, state) => Some(state),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with a fixed step.
    Rk4,
    /// Dormand-Prince 5(4) embedded pair.
    Dopri5,
    /// Rosenbrock 2(3), L-stable; suited to stiff systems.
    Rosenbrock,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rk4" => Ok(Self::Rk4),
            "dopri5" | "rk45" => Ok(Self::Dopri5),
            "rosenbrock" | "ros23" => Ok(Self::Rosenbrock),
            other => Err(format!("unknown method `{other}` (rk4, dopri5, rosenbrock)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub method: Method,
    pub atol: f64,
    pub rtol: f64,
    /// Number of steps for the fixed-step method.
    pub fixed_steps: usize,
    pub max_steps: usize,
    /// Concentrations above this bound abort with `BlowUp`.
    pub max_concentration: f64,
    /// Log-concentrations below this bound abort with `Depleted`.
    pub min_log_concentration: f64,
    pub project_conservation: bool,
    /// Store every accepted step (otherwise only the end points).
    pub record: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            method: Method::Rosenbrock,
            atol: 1e-10,
            rtol: 1e-8,
            fixed_steps: 10_000,
            max_steps: 2_000_000,
            max_concentration: 1e12,
            min_log_concentration: -600.0,
            project_conservation: true,
            record: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub method: Method,
    pub stats: StepStats,
    pub projected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub species: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    /// CSV with header `t,<species...>`, all values at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,{}", self.species.join(","))?;
        for (t, c) in self.times.iter().zip(&self.states) {
            let mut row = fmt_g17(*t);
            for x in c {
                row.push(',');
                row.push_str(&fmt_g17(*x));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Integrates from `c0` over `[0, t_end]`.
pub fn integrate(
    sys: &dyn OdeSystem,
    c0: &[f64],
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, IntegrationError> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(IntegrationError::BadHorizon(t_end));
    }
    let mut integrator = Integrator::new(sys, c0, opts.clone())?;
    let mut times = vec![0.0];
    let mut states = vec![c0.to_vec()];
    let record = opts.record;
    integrator.advance(t_end, |_| false, |t, c| {
        if record {
            times.push(t);
            states.push(c.to_vec());
        }
    })?;
    if !record {
        times.push(integrator.t);
        states.push(integrator.concentrations());
    }
    Ok(Trajectory {
        species: sys.species_names(),
        times,
        states,
        meta: TrajectoryMeta {
            method: opts.method,
            stats: integrator.stats.clone(),
            projected: integrator.projector.is_some(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stop {
    ReachedEnd,
    Predicate,
}

/// Resumable integrator state in log coordinates.
pub(crate) struct Integrator<'a> {
    sys: &'a dyn OdeSystem,
    opts: IntegrateOptions,
    pub(crate) t: f64,
    pub(crate) u: DVector<f64>,
    h: Option<f64>,
    pub(crate) stats: StepStats,
    projector: Option<ClassProjector>,
}

impl<'a> Integrator<'a> {
    pub(crate) fn new(
        sys: &'a dyn OdeSystem,
        c0: &[f64],
        opts: IntegrateOptions,
    ) -> Result<Self, IntegrationError> {
        let m = sys.species_names().len();
        if c0.len() != m {
            return Err(IntegrationError::NonpositiveInitial(c0.len().min(m)));
        }
        if let Some(i) = c0.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(IntegrationError::NonpositiveInitial(i));
        }
        let projector = opts
            .project_conservation
            .then(|| ClassProjector::new(sys, c0))
            .flatten();
        Ok(Self {
            sys,
            opts,
            t: 0.0,
            u: DVector::from_iterator(m, c0.iter().map(|x| x.ln())),
            h: None,
            stats: StepStats::default(),
            projector,
        })
    }

    pub(crate) fn concentrations(&self) -> Vec<f64> {
        self.u.iter().map(|x| x.exp()).collect()
    }

    /// `du/dt = f(c) / c`.
    fn rhs(&mut self, u: &DVector<f64>) -> DVector<f64> {
        self.stats.rhs_evals += 1;
        let f = self.sys.rate_of_change(u.as_slice());
        DVector::from_iterator(u.len(), f.iter().zip(u.iter()).map(|(fi, ui)| fi * (-ui).exp()))
    }

    fn jacobian(&mut self, u: &DVector<f64>, g: &DVector<f64>) -> DMatrix<f64> {
        self.stats.jacobian_evals += 1;
        let mut d = self.sys.log_jacobian(u.as_slice());
        for i in 0..d.nrows() {
            let inv_c = (-u[i]).exp();
            for j in 0..d.ncols() {
                d[(i, j)] *= inv_c;
            }
            d[(i, i)] -= g[i];
        }
        d
    }

    /// Scaled max-norm of a log-space error estimate.
    fn error_norm(&self, err: &DVector<f64>, u_new: &DVector<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..err.len() {
            let c = self.u[i].exp().max(u_new[i].exp());
            // tolerance on log c, capped so tiny species cannot take huge log steps
            let tol = ((self.opts.atol + self.opts.rtol * c) / c).min(1e-3);
            worst = worst.max(err[i].abs() / tol);
        }
        worst
    }

    fn check_state(&self, u: &DVector<f64>) -> Result<(), IntegrationError> {
        let state = || u.iter().map(|x| x.exp()).collect::<Vec<_>>();
        if u.iter().any(|x| !x.is_finite()) || u.iter().any(|x| x.exp() > self.opts.max_concentration)
        {
            return Err(IntegrationError::BlowUp {
                t: self.t,
                state: state(),
            });
        }
        if let Some(species) = u.iter().position(|&x| x < self.opts.min_log_concentration) {
            return Err(IntegrationError::Depleted {
                t: self.t,
                species,
                state: state(),
            });
        }
        Ok(())
    }

    fn initial_step(&mut self, t_end: f64) -> f64 {
        let u = self.u.clone();
        let g = self.rhs(&u);
        let gmax = g.amax();
        let span = t_end - self.t;
        if gmax == 0.0 {
            span
        } else {
            (1e-3 / gmax).min(span * 1e-3).max(1e-14 * span.max(1.0))
        }
    }

    /// Integrates up to `t_end` or until `stop` holds on the concentrations.
    pub(crate) fn advance<S, R>(
        &mut self,
        t_end: f64,
        mut stop: S,
        mut on_step: R,
    ) -> Result<Stop, IntegrationError>
    where
        S: FnMut(&[f64]) -> bool,
        R: FnMut(f64, &[f64]),
    {
        if self.opts.method == Method::Rk4 {
            return self.advance_fixed(t_end, stop, on_step);
        }
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(t_end),
        };
        let (order_exp, safety) = match self.opts.method {
            Method::Dopri5 => (1.0 / 5.0, 0.9),
            _ => (1.0 / 3.0, 0.9),
        };
        let mut steps = 0;
        while self.t < t_end {
            if steps >= self.opts.max_steps {
                return Err(IntegrationError::MaxSteps(self.opts.max_steps, self.concentrations()));
            }
            steps += 1;
            let remaining = t_end - self.t;
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            if !(h_try > 16.0 * f64::EPSILON * self.t.abs() && h_try > f64::MIN_POSITIVE) {
                return Err(IntegrationError::StepSizeUnderflow {
                    t: self.t,
                    state: self.concentrations(),
                });
            }
            let attempt = match self.opts.method {
                Method::Dopri5 => self.dopri5_step(h_try),
                _ => self.rosenbrock_step(h_try),
            };
            let (u_new, err) = match attempt {
                Some(pair) => pair,
                None => {
                    self.stats.rejected += 1;
                    h = h_try * 0.1;
                    continue;
                }
            };
            let norm = self.error_norm(&err, &u_new);
            if !norm.is_finite() || norm > 1.0 {
                self.stats.rejected += 1;
                let factor = if norm.is_finite() {
                    (safety * norm.powf(-order_exp)).clamp(0.1, 0.9)
                } else {
                    0.1
                };
                h = h_try * factor;
                continue;
            }
            self.stats.accepted += 1;
            self.t = if last { t_end } else { self.t + h_try };
            self.u = u_new;
            if let Some(p) = &self.projector {
                p.project(&mut self.u);
            }
            self.check_state(&self.u)?;
            let c = self.concentrations();
            on_step(self.t, &c);
            let factor = if norm == 0.0 {
                5.0
            } else {
                (safety * norm.powf(-order_exp)).clamp(0.2, 5.0)
            };
            h = h_try * factor;
            self.h = Some(h);
            if stop(&c) {
                return Ok(Stop::Predicate);
            }
        }
        Ok(Stop::ReachedEnd)
    }

    fn advance_fixed<S, R>(
        &mut self,
        t_end: f64,
        mut stop: S,
        mut on_step: R,
    ) -> Result<Stop, IntegrationError>
    where
        S: FnMut(&[f64]) -> bool,
        R: FnMut(f64, &[f64]),
    {
        let n = self.opts.fixed_steps.max(1);
        let t0 = self.t;
        let h = (t_end - t0) / n as f64;
        for step in 1..=n {
            let u = self.u.clone();
            let k1 = self.rhs(&u);
            let k2 = self.rhs(&(&u + &k1 * (h / 2.0)));
            let k3 = self.rhs(&(&u + &k2 * (h / 2.0)));
            let k4 = self.rhs(&(&u + &k3 * h));
            self.u = &u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            self.t = if step == n { t_end } else { t0 + h * step as f64 };
            if let Some(p) = &self.projector {
                p.project(&mut self.u);
            }
            self.check_state(&self.u)?;
            self.stats.accepted += 1;
            let c = self.concentrations();
            on_step(self.t, &c);
            if stop(&c) {
                return Ok(Stop::Predicate);
            }
        }
        Ok(Stop::ReachedEnd)
    }

    fn dopri5_step(&mut self, h: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        const A: [[f64; 6]; 6] = [
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const E: [f64; 7] = [
            71.0 / 57600.0,
            0.0,
            -71.0 / 16695.0,
            71.0 / 1920.0,
            -17253.0 / 339200.0,
            22.0 / 525.0,
            -1.0 / 40.0,
        ];
        let u = self.u.clone();
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        k.push(self.rhs(&u));
        for row in A.iter() {
            let mut stage = u.clone();
            for (j, a) in row.iter().enumerate().take(k.len()) {
                if *a != 0.0 {
                    stage += &k[j] * (h * a);
                }
            }
            if stage.iter().any(|x| !x.is_finite()) {
                return None;
            }
            k.push(self.rhs(&stage));
        }
        // the last stage is evaluated at the 5th-order solution
        let mut u_new = u.clone();
        for (j, a) in A[5].iter().enumerate() {
            if *a != 0.0 {
                u_new += &k[j] * (h * a);
            }
        }
        let mut err = DVector::zeros(u.len());
        for (j, e) in E.iter().enumerate() {
            if *e != 0.0 {
                err += &k[j] * (h * e);
            }
        }
        if k.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return None;
        }
        Some((u_new, err))
    }

    fn rosenbrock_step(&mut self, h: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
        let e32 = 6.0 + std::f64::consts::SQRT_2;
        let u = self.u.clone();
        let n = u.len();
        let f0 = self.rhs(&u);
        let jac = self.jacobian(&u, &f0);
        let w = DMatrix::<f64>::identity(n, n) - jac * (h * d);
        let lu = w.lu();
        let k1 = lu.solve(&f0)?;
        let mid = &u + &k1 * (0.5 * h);
        if mid.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let f1 = self.rhs(&mid);
        let k2 = lu.solve(&(&f1 - &k1))? + &k1;
        let u_new = &u + &k2 * h;
        if u_new.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let f2 = self.rhs(&u_new);
        let rhs3 = &f2 - (&k2 - &f1) * e32 - (&k1 - &f0) * 2.0;
        let k3 = lu.solve(&rhs3)?;
        let err = (&k1 - &k2 * 2.0 + &k3) * (h / 6.0);
        if err.iter().any(|x| !x.is_finite()) || f2.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some((u_new, err))
    }
}

/// Multiplicative projection `c <- c * exp(W^T lambda)` onto `W c = W c0`.
struct ClassProjector {
    w: DMatrix<f64>,
    target: DVector<f64>,
}

impl ClassProjector {
    fn new(sys: &dyn OdeSystem, c0: &[f64]) -> Option<Self> {
        let w = sys.conservation_matrix();
        if w.nrows() == 0 {
            return None;
        }
        let target = &w * DVector::from_column_slice(c0);
        Some(Self { w, target })
    }

    fn project(&self, u: &mut DVector<f64>) {
        for _ in 0..20 {
            let c = u.map(|x| x.exp());
            let resid = &self.w * &c - &self.target;
            let scale = self.target.amax().max(1e-300);
            if resid.amax() <= 1e-15 * scale {
                return;
            }
            let jac = &self.w * DMatrix::from_diagonal(&c) * self.w.transpose();
            let Some(lambda) = jac.lu().solve(&(-resid)) else {
                return;
            };
            *u += self.w.transpose() * lambda;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn opts(method: Method) -> IntegrateOptions {
        IntegrateOptions {
            method,
            ..IntegrateOptions::default()
        }
    }

    #[test]
    fn toy_relaxes_to_closed_form_with_each_method() {
        let sys = fixtures::toy_system(1.0, 2.0);
        for method in [Method::Rk4, Method::Dopri5, Method::Rosenbrock] {
            let traj = integrate(&sys, &[1.75, 0.25], 60.0, &opts(method)).unwrap();
            let c = traj.final_state();
            assert!((c[0] - 0.25).abs() < 1e-6, "{method:?}: {c:?}");
            assert!((c[1] - 1.75).abs() < 1e-6, "{method:?}: {c:?}");
            assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
            assert!(traj.states.iter().flatten().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let sys = fixtures::toy_system(1.0, 2.0);
        let traj = integrate(&sys, &[0.25, 0.6], 10.0, &opts(Method::Dopri5)).unwrap();
        for s in &traj.states {
            assert!((s[0] - 0.25).abs() < 1e-12 && (s[1] - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn carbon_power_law_equilibrium_is_unstable() {
        // with q1 < q2 the atmosphere feeds back positively on itself, so a
        // trajectory started next to the equilibrium runs away from it
        let sys = fixtures::carbon_system();
        let u: Vec<f64> = [0.7_f64, 0.15, 0.15].iter().map(|x| x.ln()).collect();
        let mut jac = OdeSystem::log_jacobian(&sys, &u);
        for i in 0..3 {
            for j in 0..3 {
                jac[(i, j)] /= u[j].exp();
            }
        }
        let eig = jac.complex_eigenvalues();
        assert!(eig.iter().any(|l| l.re > 1e6), "{eig:?}");
        let result = integrate(&sys, &fixtures::carbon_initial_state(), 500.0, &opts(Method::Rosenbrock));
        assert!(result.is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let sys = fixtures::toy_system(1.0, 2.0);
        assert!(matches!(
            integrate(&sys, &[0.0, 1.0], 1.0, &IntegrateOptions::default()),
            Err(IntegrationError::NonpositiveInitial(0))
        ));
        assert!(matches!(
            integrate(&sys, &[1.0, 1.0], 0.0, &IntegrateOptions::default()),
            Err(IntegrationError::BadHorizon(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let sys = fixtures::toy_system(1.0, 2.0);
        let o = IntegrateOptions {
            method: Method::Rk4,
            fixed_steps: 2,
            ..IntegrateOptions::default()
        };
        let csv = integrate(&sys, &[1.0, 1.0], 1.0, &o).unwrap().to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,X1,X2");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,1,1"));
        let last: Vec<f64> = lines[3].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(last[0], 1.0);
    }
}
