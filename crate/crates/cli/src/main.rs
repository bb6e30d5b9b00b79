use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use plrdk::acr::{plrlk_acr_check, shinar_feinberg_acr, AcrOptions, AcrVerdict, EquilibriumMode};
use plrdk::approx::{
    approximate_flux_model, carbon_preindustrial, parse_flux_model, toy_model, ApproxError, FluxModel,
    OrderMode,
};
use plrdk::checks::{verify, VerifyOptions};
use plrdk::equilibria::{integrate, IntegrateOptions, Method, OdeSystem, SampleOptions, TotalConstraint};
use plrdk::fixtures::ANDERIES_PARAMS;
use plrdk::format::{emit_system, parse_crn, parse_params, FormatError};
use plrdk::kinetics::{PowerLawKineticSystem, DEFAULT_ORDER_TOL};
use plrdk::network::ReactionNetwork;
use plrdk::report::{structure_of, ApproximationSection, KineticsSection, RunReport, SimulationSection};

const EXIT_USAGE: u8 = 2;
const EXIT_INVALID: u8 = 3;
const EXIT_NO_EQUILIBRIUM: u8 = 4;
const EXIT_INTEGRATION: u8 = 5;
const EXIT_APPROXIMATION: u8 = 6;

/// Deficiency and robustness analysis for power-law reaction networks.
#[derive(Parser)]
#[command(name = "plrdk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structural indices, linkage classes and kinetics classification.
    Analyze {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Deficiency-one ACR criterion, optionally confirmed numerically.
    Acr {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Take a positive equilibrium as given (default).
        #[arg(long, conflicts_with = "verify")]
        assume_equilibrium: bool,
        /// Search for equilibria and check the ACR species numerically.
        #[arg(long)]
        verify: bool,
        #[command(flatten)]
        sampling: Sampling,
        /// Relative spread allowed in the numeric check.
        #[arg(long, default_value_t = 1e-5, value_parser = positive_f64)]
        tol: f64,
    },
    /// Integrate a system and write its trajectory as CSV.
    Simulate {
        /// A `.crn` file with kinetics; omit when using --builtin.
        #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
        path: Option<PathBuf>,
        #[arg(long, value_enum)]
        builtin: Option<Builtin>,
        /// Parameter file for the built-in model.
        #[arg(long, requires = "builtin")]
        params: Option<PathBuf>,
        /// Initial concentrations, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        init: Vec<f64>,
        #[arg(long, value_parser = positive_f64)]
        t_end: f64,
        /// rk4, dopri5 or rosenbrock.
        #[arg(long, default_value = "rosenbrock")]
        method: Method,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Power-law approximation of a flux model at an operating point.
    Approximate {
        /// Flux model file; omit when using --builtin.
        #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
        model: Option<PathBuf>,
        #[arg(long, value_enum)]
        builtin: Option<Builtin>,
        /// Operating point, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        at: Vec<f64>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Analytic)]
        mode: Mode,
        /// Relative step for finite differences.
        #[arg(long, default_value_t = 1e-6, value_parser = positive_f64)]
        h_rel: f64,
        /// Destination for the `.crn` output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Kernel-support, nullity-bound and log-residual checks.
    Verify {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
        /// `auto`, or a file with one rate per reaction.
        #[arg(long, default_value = "auto")]
        kappa: String,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[command(flatten)]
        sampling: Sampling,
        /// Tolerance for the log residual.
        #[arg(long, default_value_t = 1e-6, value_parser = positive_f64)]
        tol: f64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    json: bool,
    /// Attach mass-action kinetics with these rate constants.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    mass_action: Option<Vec<f64>>,
}

#[derive(Args)]
struct Sampling {
    #[arg(long, default_value_t = 20)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start box `lo,hi` for each concentration.
    #[arg(long = "box", value_delimiter = ',')]
    start_box: Option<Vec<f64>>,
    /// Weights `w` for a drawn total `w . c`.
    #[arg(long, value_delimiter = ',', num_args = 1.., requires = "total_range")]
    total_weights: Option<Vec<f64>>,
    /// Range `lo,hi` of the drawn total.
    #[arg(long, value_delimiter = ',', requires = "total_weights")]
    total_range: Option<Vec<f64>>,
}

impl Sampling {
    fn options(&self) -> SampleOptions {
        let mut opts = SampleOptions {
            n_starts: self.starts,
            seed: self.seed,
            ..SampleOptions::default()
        };
        if let Some(b) = &self.start_box {
            opts.box_lo = b[0];
            opts.box_hi = b[1];
        }
        if let (Some(w), Some(r)) = (&self.total_weights, &self.total_range) {
            opts.total = Some(TotalConstraint {
                weights: w.clone(),
                lo: r[0],
                hi: r[1],
            });
        }
        opts
    }

    fn validate(&self, m: usize) -> Result<(), Failure> {
        if let Some(b) = &self.start_box {
            if b.len() != 2 || !(b[0] > 0.0 && b[1] >= b[0] && b[1].is_finite()) {
                return Err(Failure::usage("--box needs 0 < lo <= hi"));
            }
        }
        if let Some(w) = &self.total_weights {
            if w.len() != m {
                return Err(Failure::invalid(format!(
                    "--total-weights has {} entries, network has {m} species",
                    w.len()
                )));
            }
        }
        if let Some(r) = &self.total_range {
            if r.len() != 2 || !(r[0] > 0.0 && r[1] >= r[0] && r[1].is_finite()) {
                return Err(Failure::usage("--total-range needs 0 < lo <= hi"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Toy,
    Carbon,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Analytic,
    Fd,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn invalid(message: impl Display) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.to_string(),
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        if e.is_syntax() {
            Self::usage(e)
        } else {
            Self::invalid(e)
        }
    }
}

impl From<ApproxError> for Failure {
    fn from(e: ApproxError) -> Self {
        match e {
            ApproxError::Format(f) => f.into(),
            ApproxError::ZeroRateAtOperatingPoint { .. }
            | ApproxError::MissingParameter(_)
            | ApproxError::NoGradient(_)
            | ApproxError::NonfiniteDerivative(_) => Self {
                code: EXIT_APPROXIMATION,
                message: e.to_string(),
            },
            other => Self::invalid(other),
        }
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a positive number, got {s}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

/// The network of a `.crn` file and its kinetics, from the file or from
/// `--mass-action`.
fn load(path: &Path, mass_action: Option<&[f64]>) -> Result<(ReactionNetwork, Option<PowerLawKineticSystem>), Failure> {
    let file = parse_crn(&read(path)?)?;
    let sys = match (mass_action, file.system()) {
        (Some(_), Some(_)) => {
            return Err(Failure::usage("--mass-action given for a file that already has kinetics"))
        }
        (Some(k), None) => Some(
            PowerLawKineticSystem::mass_action(file.network.clone(), k.to_vec()).map_err(Failure::invalid)?,
        ),
        (None, Some(sys)) => Some(sys.map_err(Failure::invalid)?),
        (None, None) => None,
    };
    Ok((file.network, sys))
}

fn require_kinetics(sys: Option<PowerLawKineticSystem>) -> Result<PowerLawKineticSystem, Failure> {
    sys.ok_or_else(|| Failure::invalid("the network has no kinetics; add rate/orders or pass --mass-action"))
}

fn render(report: &RunReport, json: bool) -> String {
    if json {
        report.to_json()
    } else {
        report.to_text()
    }
}

fn run(command: Command) -> Result<String, Failure> {
    match command {
        Command::Analyze { path, common } => {
            let (net, sys) = load(&path, common.mass_action.as_deref())?;
            let mut report = RunReport::new("analyze", Some(&path.display().to_string()));
            report.structure = Some(structure_of(&net));
            report.kinetics = sys.as_ref().map(KineticsSection::from_system);
            Ok(render(&report, common.json))
        }
        Command::Acr {
            path,
            common,
            assume_equilibrium: _,
            verify,
            sampling,
            tol,
        } => {
            let (net, sys) = load(&path, common.mass_action.as_deref())?;
            let sys = require_kinetics(sys)?;
            sampling.validate(net.num_species())?;
            let options = AcrOptions {
                mode: if verify {
                    EquilibriumMode::Verify
                } else {
                    EquilibriumMode::Assume
                },
                sampling: sampling.options(),
                numeric_rel_tol: tol,
                ..AcrOptions::default()
            };
            let acr = shinar_feinberg_acr(&sys, &options).map_err(Failure::invalid)?;
            let failed = matches!(acr.verdict, AcrVerdict::HypothesisFailed { .. });
            let mut report = RunReport::new("acr", Some(&path.display().to_string()));
            report.structure = Some(structure_of(&net));
            report.kinetics = Some(KineticsSection::from_system(&sys));
            report.plrlk = Some(plrlk_acr_check(&sys, DEFAULT_ORDER_TOL).map_err(Failure::invalid)?);
            report.acr = Some(acr);
            let out = render(&report, common.json);
            if failed {
                // the report still goes to stdout
                print!("{out}");
                return Err(Failure {
                    code: EXIT_NO_EQUILIBRIUM,
                    message: "no positive equilibrium found".into(),
                });
            }
            Ok(out)
        }
        Command::Simulate {
            path,
            builtin,
            params,
            init,
            t_end,
            method,
            out,
            json,
        } => {
            let mut report = RunReport::new("simulate", path.as_ref().map(|p| p.display().to_string()).as_deref());
            let opts = IntegrateOptions {
                method,
                ..IntegrateOptions::default()
            };
            let run_ode = |ode: &dyn OdeSystem| {
                if init.len() != ode.species_names().len() {
                    return Err(Failure::invalid(format!(
                        "--init has {} values, the system has {} species",
                        init.len(),
                        ode.species_names().len()
                    )));
                }
                integrate(ode, &init, t_end, &opts).map_err(|e| Failure {
                    code: EXIT_INTEGRATION,
                    message: e.to_string(),
                })
            };
            let trajectory = match (path, builtin) {
                (Some(path), _) => {
                    let (_, sys) = load(&path, None)?;
                    run_ode(&require_kinetics(sys)?)?
                }
                (None, Some(b)) => {
                    let model = builtin_model(b, params.as_deref(), &mut report.warnings)?;
                    run_ode(&model.ode()?)?
                }
                (None, None) => unreachable!("clap requires a path or --builtin"),
            };
            let csv = trajectory.to_csv_string();
            if let Some(p) = &out {
                write(p, &csv)?;
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            report.simulation = Some(SimulationSection {
                species: trajectory.species.clone(),
                t_end,
                final_state: trajectory.final_state().to_vec(),
                meta: trajectory.meta.clone(),
                output: out.as_ref().map(|p| p.display().to_string()),
            });
            if out.is_none() && !json {
                return Ok(csv);
            }
            report.warnings.clear();
            Ok(render(&report, json))
        }
        Command::Approximate {
            model,
            builtin,
            at,
            params,
            mode,
            h_rel,
            out,
            json,
        } => {
            let mut report = RunReport::new("approximate", model.as_ref().map(|p| p.display().to_string()).as_deref());
            let flux_model = match (model, builtin) {
                (Some(path), _) => {
                    let overrides = match &params {
                        Some(p) => parse_params(&read(p)?)?,
                        None => BTreeMap::new(),
                    };
                    parse_flux_model(&read(&path)?, &overrides)?
                }
                (None, Some(b)) => builtin_model(b, params.as_deref(), &mut report.warnings)?,
                (None, None) => unreachable!("clap requires a model or --builtin"),
            };
            let mode = match mode {
                Mode::Analytic => OrderMode::Analytic,
                Mode::Fd => OrderMode::FiniteDifference { h_rel },
            };
            let gma = approximate_flux_model(&flux_model, &at, mode)?;
            report.warnings.extend(gma.warnings.iter().cloned());
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let crn = emit_system(&gma.system);
            if let Some(p) = &out {
                write(p, &crn)?;
            } else if !json {
                return Ok(crn);
            }
            report.structure = Some(structure_of(gma.system.network()));
            report.kinetics = Some(KineticsSection::from_system(&gma.system));
            report.approximation = Some(ApproximationSection::from(&gma));
            Ok(render(&report, json))
        }
        Command::Verify {
            path,
            common,
            kappa,
            trials,
            sampling,
            tol,
        } => {
            let (net, sys) = load(&path, common.mass_action.as_deref())?;
            sampling.validate(net.num_species())?;
            let kappa = match kappa.as_str() {
                "auto" => None,
                file => Some(read_kappa(Path::new(file), net.num_reactions())?),
            };
            let opts = VerifyOptions {
                kappa,
                trials,
                seed: sampling.seed,
                sampling: sampling.options(),
                residual_tol: tol,
            };
            let verification = verify(&net, sys.as_ref(), &opts).map_err(Failure::invalid)?;
            let mut report = RunReport::new("verify", Some(&path.display().to_string()));
            report.structure = Some(structure_of(&net));
            report.verification = Some(verification);
            Ok(render(&report, common.json))
        }
    }
}

fn read_kappa(path: &Path, r: usize) -> Result<Vec<f64>, Failure> {
    let text = read(path)?;
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Failure::usage(format!("{}: `{s}` is not a number", path.display())))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if values.len() != r {
        return Err(Failure::invalid(format!(
            "{}: {} rates given, network has {r} reactions",
            path.display(),
            values.len()
        )));
    }
    if let Some(bad) = values.iter().find(|&&k| !(k > 0.0 && k.is_finite())) {
        return Err(Failure::invalid(format!("rate {bad} is not positive")));
    }
    Ok(values)
}

fn builtin_model(b: Builtin, params: Option<&Path>, warnings: &mut Vec<String>) -> Result<FluxModel, Failure> {
    let given = match params {
        Some(p) => Some(parse_params(&read(p)?)?),
        None => None,
    };
    match b {
        Builtin::Toy => {
            let p = given.unwrap_or_default();
            if let Some(unknown) = p.keys().find(|k| !matches!(k.as_str(), "k1" | "k2")) {
                return Err(ApproxError::UnknownParameter(unknown.clone()).into());
            }
            let k1 = p.get("k1").copied().unwrap_or(1.0);
            let k2 = p.get("k2").copied().unwrap_or(2.0);
            Ok(toy_model(k1, k2)?)
        }
        Builtin::Carbon => {
            let p = match given {
                Some(p) => p,
                None => {
                    warnings.push("no --params given; using the shipped placeholder parameters".into());
                    parse_params(ANDERIES_PARAMS)?
                }
            };
            Ok(carbon_preindustrial(&p)?)
        }
    }
}
