//! Acceptance criteria 1-12. Runs without the libtest harness so that every
//! criterion prints one PASS/FAIL line, then exits nonzero if any failed.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plrdk::acr::{shinar_feinberg_acr, AcrOptions, AcrVerdict, EquilibriumMode};
use plrdk::approx::{
    approximate_flux_model, carbon_preindustrial, kinetic_orders, rate_constant, ClosureRate, OrderMode,
    PowerLawRate, RateFunction,
};
use plrdk::checks::{laplacian_kernel_check, log_residual_check, nullity_bound_check};
use plrdk::equilibria::{
    find_equilibrium, integrate, sample_equilibria, EquilibriumOptions, IntegrateOptions, Method, OdeSystem,
    SampleOptions, TotalConstraint,
};
use plrdk::fixtures::{
    self, carbon_initial_state, carbon_system, toy_system, ANDERIES_PARAMS, CARBON_CRN, CARBON_P1, CARBON_P2,
    CARBON_Q1, CARBON_Q2, TOY_CRN,
};
use plrdk::format::{emit_system, parse_crn, parse_params};
use plrdk::kinetics::{PowerLawKineticSystem, DEFAULT_ORDER_TOL};
use plrdk::random::{random_network, random_rates, random_system, RandomNetworkOptions};
use plrdk::report::{structure_of, RunReport};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn parsed_system(text: &str) -> Result<PowerLawKineticSystem, String> {
    parse_crn(text)
        .map_err(|e| e.to_string())?
        .system()
        .ok_or("fixture has no kinetics")?
        .map_err(|e| e.to_string())
}

fn toy_sampling(seed: u64) -> SampleOptions {
    SampleOptions {
        n_starts: 20,
        seed,
        total: Some(TotalConstraint {
            weights: vec![1.0, 1.0],
            lo: 0.5,
            hi: 5.0,
        }),
        ..SampleOptions::default()
    }
}

fn carbon_sampling(seed: u64) -> SampleOptions {
    SampleOptions {
        n_starts: 20,
        seed,
        total: Some(TotalConstraint {
            weights: vec![1.0, 1.0, 1.0],
            lo: 0.5,
            hi: 2.0,
        }),
        ..SampleOptions::default()
    }
}

fn toy_structure() -> Outcome {
    let file = parse_crn(TOY_CRN).map_err(|e| e.to_string())?;
    let s = structure_of(&file.network);
    let got = (s.n, s.num_linkage_classes, s.rank, s.deficiency, s.num_terminal_classes);
    ensure(got == (4, 2, 1, 1, 2), || format!("(n, l, s, delta, t) = {got:?}"))?;
    let nonterminal: BTreeSet<&str> = s.nonterminal_labels.iter().map(String::as_str).collect();
    ensure(nonterminal == BTreeSet::from(["X2", "X1 + X2"]), || {
        format!("nonterminal = {nonterminal:?}")
    })?;
    let mut report = RunReport::new("analyze", None);
    report.structure = Some(s);
    let text = report.to_text();
    ensure(text.contains("n=4 ℓ=2 s=1 δ=1 t=2"), || format!("text report:\n{text}"))?;
    Ok("n=4 l=2 s=1 delta=1 t=2, nonterminal {X2, X1 + X2}".into())
}

fn toy_acr() -> Outcome {
    let sys = parsed_system(TOY_CRN)?;
    ensure(sys.rate_constants() == [1.0, 2.0], || "fixture rates are not (1, 2)".into())?;
    let sampling = toy_sampling(1);
    let options = AcrOptions {
        mode: EquilibriumMode::Verify,
        sampling: sampling.clone(),
        ..AcrOptions::default()
    };
    let report = shinar_feinberg_acr(&sys, &options).map_err(|e| e.to_string())?;
    ensure(
        report.verdict == AcrVerdict::Acr {
            species: vec!["X1".into()],
        },
        || format!("verdict {:?}", report.verdict),
    )?;
    let set = sample_equilibria(&sys, &sampling);
    ensure(set.failed.is_empty() && set.points.len() == 20, || {
        format!("{} equilibria, {} failed starts", set.points.len(), set.failed.len())
    })?;
    let worst = set
        .points
        .iter()
        .map(|p| rel(p.concentrations[0], 0.25))
        .fold(0.0, f64::max);
    ensure(worst < 1e-6, || format!("X1 deviates from 0.25 by {worst:.2e} relative"))?;
    let x2: Vec<f64> = set.points.iter().map(|p| p.concentrations[1]).collect();
    let spread = x2.iter().cloned().fold(f64::MIN, f64::max) - x2.iter().cloned().fold(f64::MAX, f64::min);
    ensure(spread > 0.1, || format!("X2 spread {spread}"))?;
    Ok(format!("ACR in X1; max X1 error {worst:.1e}; X2 spread {spread:.3}"))
}

fn toy_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let k1 = 10f64.powf(rng.random_range(-1.0..1.0));
        let k2 = 10f64.powf(rng.random_range(-1.0..1.0));
        let x1 = (k1 / k2).powi(2);
        let total = x1 * (1.0 + 10f64.powf(rng.random_range(-1.0..1.0)));
        let sys = toy_system(k1, k2);
        let c0 = [total / 2.0, total / 2.0];
        let out = find_equilibrium(&sys, &c0, &EquilibriumOptions::default()).map_err(|e| e.to_string())?;
        let c = out
            .concentrations()
            .ok_or_else(|| format!("no equilibrium for k1={k1} k2={k2} total={total}"))?;
        let err = rel(c[0], x1).max(rel(c[1], total - x1));
        ensure(err < 1e-9, || format!("k1={k1} k2={k2} total={total}: got {c:?}"))?;
        worst = worst.max(err);
    }
    Ok(format!("10 draws, max relative error {worst:.1e}"))
}

fn carbon_structure() -> Outcome {
    let sys = parsed_system(CARBON_CRN)?;
    let s = structure_of(sys.network());
    let got = (s.n, s.num_linkage_classes, s.rank, s.deficiency);
    ensure(got == (6, 3, 2, 1), || format!("(n, l, s, delta) = {got:?}"))?;
    let t = sys.t_matrix(DEFAULT_ORDER_TOL).map_err(|e| e.to_string())?;
    let net = sys.network();
    let expected = [
        ("A1 + 2A2", [CARBON_P1, CARBON_Q1, 0.0]),
        ("A1 + A2", [CARBON_P2, CARBON_Q2, 0.0]),
        ("A2", [0.0, 1.0, 0.0]),
        ("A3", [0.0, 0.0, 1.0]),
    ];
    ensure(t.reactant_complexes.len() == expected.len(), || "T has wrong column count".into())?;
    for (label, column) in expected {
        let y = (0..net.num_complexes())
            .find(|&i| net.complex_label(i) == label)
            .ok_or_else(|| format!("complex {label} missing"))?;
        let got = t.column_of(y).ok_or_else(|| format!("{label} is not a reactant"))?;
        ensure(got.iter().eq(column.iter()), || format!("T column {label} = {got:?}"))?;
    }
    ensure(
        CARBON_P1 == -68.0 && CARBON_P2 == -68.0 && CARBON_Q1 == 0.580148 && CARBON_Q2 == 0.910864,
        || "fixture constants changed".into(),
    )?;
    Ok("n=6 l=3 s=2 delta=1; T columns match".into())
}

fn carbon_acr() -> Outcome {
    let sys = carbon_system();
    let set = sample_equilibria(&sys, &carbon_sampling(5));
    ensure(set.failed.is_empty() && set.points.len() == 20, || {
        format!("{} equilibria, {} failed starts", set.points.len(), set.failed.len())
    })?;
    let mut worst: f64 = 0.0;
    for p in &set.points {
        let c = &p.concentrations;
        let a0 = p.class_totals[0];
        let err = (c[1] - 0.15).abs().max((c[2] - 0.15).abs()).max((c[0] - (a0 - 0.3)).abs());
        ensure(err < 1e-5, || format!("A0={a0}: equilibrium {c:?}"))?;
        worst = worst.max(err);
    }
    let params = parse_params(ANDERIES_PARAMS).map_err(|e| e.to_string())?;
    let model = carbon_preindustrial(&params).map_err(|e| e.to_string())?;
    let ode = model.ode().map_err(|e| e.to_string())?;
    let traj = integrate(&ode, &carbon_initial_state(), 500.0, &IntegrateOptions::default())
        .map_err(|e| e.to_string())?;
    let end = traj.final_state();
    let dist = end
        .iter()
        .zip([0.7, 0.15, 0.15])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(dist < 1e-4, || format!("trajectory ends at {end:?}"))?;
    Ok(format!(
        "20 equilibria, max error {worst:.1e}; flux-model trajectory ends {dist:.1e} from (0.7, 0.15, 0.15)"
    ))
}

fn gma_tangency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut fd_worst, mut an_worst, mut tangent_worst): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..10 {
        let c = 10f64.powf(rng.random_range(-2.0..2.0));
        let a = rng.random_range(-3.0..3.0);
        let b = rng.random_range(-3.0..3.0);
        let x0 = [rng.random_range(0.1..5.0), rng.random_range(0.1..5.0)];
        let v = ClosureRate::new(move |x: &[f64]| c * x[0].powf(a) * x[1].powf(b)).with_gradient(move |x: &[f64]| {
            let v = c * x[0].powf(a) * x[1].powf(b);
            vec![a * v / x[0], b * v / x[1]]
        });
        for (mode, tol, worst) in [
            (OrderMode::default(), 1e-6, &mut fd_worst),
            (OrderMode::Analytic, 1e-12, &mut an_worst),
        ] {
            let p = kinetic_orders(&v, &x0, mode).map_err(|e| e.to_string())?;
            let alpha = rate_constant(&v, &x0, &p).map_err(|e| e.to_string())?;
            let err = (p[0] - a).abs().max((p[1] - b).abs()).max(rel(alpha, c));
            ensure(err < tol, || format!("{mode:?}: ({a}, {b}, {c}) recovered as ({p:?}, {alpha})"))?;
            *worst = worst.max(err);
            let approx = PowerLawRate { k: alpha, orders: p };
            let tangent = rel(approx.value(&x0), v.value(&x0));
            ensure(tangent < 1e-12, || format!("rate mismatch {tangent:.2e} at the operating point"))?;
            tangent_worst = tangent_worst.max(tangent);
            let again = kinetic_orders(&approx, &x0, OrderMode::Analytic).map_err(|e| e.to_string())?;
            ensure(again == approx.orders, || "re-approximation changed the orders".into())?;
        }
    }
    Ok(format!(
        "finite difference {fd_worst:.1e}, analytic {an_worst:.1e}, rate match {tangent_worst:.1e}"
    ))
}

fn carbon_orders() -> Outcome {
    let params = parse_params(ANDERIES_PARAMS).map_err(|e| e.to_string())?;
    ensure(params.get("k") == Some(&0.7), || "parameter file does not set k = 0.7".into())?;
    let model = carbon_preindustrial(&params).map_err(|e| e.to_string())?;
    let x0 = [0.69, 0.155, 0.155];
    let k = 0.7;
    let exact = (2.0 * x0[0] - k) / (x0[0] - k);
    let fd = approximate_flux_model(&model, &x0, OrderMode::default()).map_err(|e| e.to_string())?;
    let an = approximate_flux_model(&model, &x0, OrderMode::Analytic).map_err(|e| e.to_string())?;
    let mut fd_worst: f64 = 0.0;
    for j in 0..2 {
        let p_fd = fd.fluxes[j].orders[0];
        let p_an = an.fluxes[j].orders[0];
        ensure((p_fd + 68.0).abs() < 1e-4, || format!("finite-difference order {p_fd}"))?;
        ensure(rel(p_an, exact) < 1e-12, || format!("analytic order {p_an}, formula {exact}"))?;
        fd_worst = fd_worst.max((p_fd + 68.0).abs());
    }
    Ok(format!("finite difference within {fd_worst:.1e} of -68; analytic equals (2A1-k)/(A1-k) = {exact}"))
}

fn stlk_suite() -> Outcome {
    let opts = RandomNetworkOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..100 {
        let net = random_network(&mut rng, &opts);
        let kappa = random_rates(&mut rng, net.num_reactions());
        let report = laplacian_kernel_check(&net, &kappa).map_err(|e| e.to_string())?;
        ensure(report.passed && report.nullity == net.terminal_strong_linkage_classes().len(), || {
            format!("network {trial}: {report:?}")
        })?;
    }
    Ok("100 networks: nullity = t and supports match".into())
}

fn nullity_bound_suite() -> Outcome {
    let opts = RandomNetworkOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut tight = 0;
    for trial in 0..100 {
        let net = random_network(&mut rng, &opts);
        let kappa = random_rates(&mut rng, net.num_reactions());
        let report = nullity_bound_check(&net, &kappa).map_err(|e| e.to_string())?;
        ensure(report.passed && report.nullity <= report.deficiency + report.num_terminal_classes, || {
            format!("network {trial}: {report:?}")
        })?;
        tight += usize::from(report.nullity == report.bound);
    }
    Ok(format!("100 networks within the bound ({tight} attain it)"))
}

fn log_residuals() -> Outcome {
    let mut parts = Vec::new();
    for (name, sys, sampling) in [
        ("toy", toy_system(1.0, 2.0), toy_sampling(10)),
        ("carbon", carbon_system(), carbon_sampling(10)),
    ] {
        let set = sample_equilibria(&sys, &sampling);
        let report = log_residual_check(&sys, &set, DEFAULT_ORDER_TOL, 1e-6)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("{name}: fewer than two equilibria"))?;
        ensure(report.passed && report.max_abs_residual < 1e-6, || format!("{name}: {report:?}"))?;
        parts.push(format!(
            "{name} max {:.1e} over {} pairs",
            report.max_abs_residual, report.pairs_checked
        ));
    }
    Ok(parts.join("; "))
}

fn max_drift(ode: &dyn OdeSystem, c0: &[f64], method: Method) -> Result<f64, String> {
    let opts = IntegrateOptions {
        method,
        ..IntegrateOptions::default()
    };
    let traj = integrate(ode, c0, 500.0, &opts).map_err(|e| e.to_string())?;
    let w = ode.conservation_matrix();
    let totals = |c: &[f64]| -> Vec<f64> {
        (0..w.nrows())
            .map(|l| (0..c.len()).map(|i| w[(l, i)] * c[i]).sum())
            .collect()
    };
    let initial = totals(c0);
    let mut worst: f64 = 0.0;
    for state in &traj.states {
        for (now, then) in totals(state).iter().zip(&initial) {
            worst = worst.max(rel(*now, *then));
        }
    }
    Ok(worst)
}

fn conservation_drift() -> Outcome {
    let toy = toy_system(1.0, 2.0);
    let params = parse_params(ANDERIES_PARAMS).map_err(|e| e.to_string())?;
    let model = carbon_preindustrial(&params).map_err(|e| e.to_string())?;
    let carbon = model.ode().map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for (name, ode, c0, method) in [
        ("toy dopri5", &toy as &dyn OdeSystem, vec![1.75, 0.25], Method::Dopri5),
        ("toy rosenbrock", &toy, vec![1.75, 0.25], Method::Rosenbrock),
        ("carbon rosenbrock", &carbon, carbon_initial_state(), Method::Rosenbrock),
    ] {
        let drift = max_drift(ode, &c0, method)?;
        ensure(drift < 1e-8, || format!("{name}: drift {drift:.2e}"))?;
        parts.push(format!("{name} {drift:.1e}"));
    }
    Ok(parts.join(", "))
}

fn parser_round_trip() -> Outcome {
    let opts = RandomNetworkOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..50 {
        let sys = random_system(&mut rng, &opts);
        let first = emit_system(&sys);
        let parsed = parse_crn(&first).map_err(|e| format!("system {trial}: {e}\n{first}"))?;
        let back = parsed
            .system()
            .ok_or_else(|| format!("system {trial}: kinetics lost"))?
            .map_err(|e| e.to_string())?;
        let second = emit_system(&back);
        ensure(first == second, || format!("system {trial} differs:\n{first}\n{second}"))?;
    }
    let toy = emit_system(&fixtures::toy_system(1.0, 2.0));
    ensure(toy == TOY_CRN, || "toy fixture does not re-emit identically".into())?;
    Ok("50 random systems re-emit byte-identically".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("toy structural analysis", toy_structure),
        ("toy ACR with numeric confirmation", toy_acr),
        ("toy closed-form equilibrium", toy_closed_form),
        ("carbon structural analysis", carbon_structure),
        ("carbon ACR and steady state", carbon_acr),
        ("GMA tangency and idempotence", gma_tangency),
        ("carbon kinetic order derivation", carbon_orders),
        ("Laplacian kernel supports", stlk_suite),
        ("nullity bound", nullity_bound_suite),
        ("log-constraint residual", log_residuals),
        ("conservation drift", conservation_drift),
        ("parser round-trip", parser_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (status, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {:>2} {status}: {name} ({detail}) [{:.2}s]",
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
