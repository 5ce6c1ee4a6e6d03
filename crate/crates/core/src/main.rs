use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use num_complex::Complex64 as C64;

use nearcomm::assembly::{solve, Mode, SolveConfig};
use nearcomm::harness::{generate, run_scaling_study, InstanceSpec};
use nearcomm::povm::build_scheme;
use nearcomm::recursion::{induction_check, RecursionParams};
use nearcomm::reduction::{lr_bound, lr_leakage};
use nearcomm::spectral::{load_matrix, save_matrix, HMat};
use nearcomm::Error;

#[derive(Parser)]
#[command(name = "nearcomm", version, about = "Nearby commuting pairs for almost-commuting Hermitian matrices")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Auto,
    Block,
    Tridiag,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Auto => Mode::Auto,
            ModeArg::Block => Mode::Block,
            ModeArg::Tridiag => Mode::Tridiag,
        }
    }
}

#[derive(Args)]
struct SolveFlags {
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    mode: ModeArg,
    /// bandwidth floor for numerically commuting inputs
    #[arg(long, default_value_t = 1e-3)]
    delta_floor: f64,
}

impl SolveFlags {
    fn config(&self) -> SolveConfig {
        SolveConfig { mode: self.mode.into(), delta_floor: self.delta_floor, subspace: None }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a named instance and write the operators as matrix JSON files
    Generate {
        /// uniform_chain | spin_pair | spin_triple | random_pair | random_block_tridiag
        #[arg(long)]
        kind: String,
        /// chain length
        #[arg(long)]
        n: Option<usize>,
        /// total spin (half-integers allowed)
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
        /// perturbation size for random_pair
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 4)]
        block_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// output prefix; files are <prefix>_0.json, <prefix>_1.json, ...
        #[arg(long, default_value = "instance")]
        out: String,
    },
    /// Solve: construct the nearby exactly commuting pair and report errors
    Commute {
        /// two matrix JSON files, comma separated
        #[arg(long = "in", value_delimiter = ',', required = true)]
        input: Vec<String>,
        #[arg(long)]
        json: bool,
        /// write the common eigenbasis and both spectra to this JSON file
        #[arg(long)]
        out: Option<String>,
        #[command(flatten)]
        flags: SolveFlags,
    },
    /// Run the solver across an instance family and fit the error-vs-delta law
    ScalingStudy {
        /// chain | spin | random
        #[arg(long, default_value = "chain")]
        family: String,
        /// comma-separated sizes (N for chains, S for spins, dim for random)
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024")]
        sizes: Vec<f64>,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        flags: SolveFlags,
    },
    /// Grid verification of the inverse-recursion bound (three sweeps)
    VerifyRecursion {
        #[arg(long, default_value_t = 0.02)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-4)]
        grid: f64,
        #[arg(long)]
        json: bool,
    },
    /// Sequential soft measurement of a spin family
    PovmSim {
        #[arg(long, default_value_t = 5.0)]
        s: f64,
        /// measure two (x, z) or three (x, y, z) spin components
        #[arg(long, default_value_t = 2)]
        n_ops: usize,
        #[arg(long)]
        n_win: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Check the light-cone leakage bound on random block-tridiagonal matrices
    CheckLr {
        #[arg(long, default_value_t = 8)]
        blocks: usize,
        #[arg(long, default_value_t = 4)]
        block_size: usize,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::AssemblyRank { .. }
                | Error::DenominatorNonpositive(_)
                | Error::EnumerationTooLarge(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Generate { kind, n, s, dim, eps, block_size, seed, out } => {
            let spec = match kind.as_str() {
                "uniform_chain" => InstanceSpec::UniformChain {
                    n: n.ok_or_else(|| Error::BadParameter("uniform_chain needs --n".into()))?,
                },
                "spin_pair" => InstanceSpec::SpinPair {
                    s: s.ok_or_else(|| Error::BadParameter("spin_pair needs --s".into()))?,
                },
                "spin_triple" => InstanceSpec::SpinTriple {
                    s: s.ok_or_else(|| Error::BadParameter("spin_triple needs --s".into()))?,
                },
                "random_pair" => InstanceSpec::RandomPair {
                    dim: dim.ok_or_else(|| Error::BadParameter("random_pair needs --dim".into()))?,
                    eps,
                    seed,
                },
                "random_block_tridiag" => InstanceSpec::RandomBlockTridiag {
                    blocks: dim
                        .ok_or_else(|| Error::BadParameter("random_block_tridiag needs --dim (block count)".into()))?,
                    block_size,
                    seed,
                },
                other => {
                    return Err(Error::BadParameter(format!("unknown instance kind '{other}'")))
                }
            };
            let ops = generate(&spec)?;
            for (i, m) in ops.iter().enumerate() {
                let path = format!("{out}_{i}.json");
                save_matrix(&path, m)?;
                println!("wrote {path}");
            }
            Ok(())
        }
        Cmd::Commute { input, json, out, flags } => {
            if input.len() != 2 {
                return Err(Error::BadParameter(format!(
                    "usage: commute --in A.json,B.json (got {} file(s))",
                    input.len()
                )));
            }
            let a = load_matrix(&input[0])?;
            let b = load_matrix(&input[1])?;
            let r = solve(&a, &b, &flags.config())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r.report)?);
            } else {
                println!(
                    "dim {}  mode {:?}  delta {:.3e}  band {:.3e}  n_cut {}",
                    r.report.dim, r.report.mode, r.report.delta, r.report.delta_band, r.report.n_cut
                );
                println!(
                    "err_a {:.6}  err_b {:.6}  offdiag {:.3e}  commutator {:.3e}",
                    r.report.err_a, r.report.err_b, r.report.offdiag_norm,
                    r.report.commutator_residual
                );
            }
            if let Some(path) = out {
                save_matrix(&path, &r.v)?;
                println!("wrote basis to {path}");
            }
            Ok(())
        }
        Cmd::ScalingStudy { family, sizes, eps, seed, json, csv, flags } => {
            if sizes.len() < 4 {
                return Err(Error::BadParameter("need at least 4 sizes".into()));
            }
            let specs: Vec<InstanceSpec> = sizes
                .iter()
                .enumerate()
                .map(|(i, &v)| match family.as_str() {
                    "chain" => Ok(InstanceSpec::UniformChain { n: v as usize }),
                    "spin" => Ok(InstanceSpec::SpinPair { s: v }),
                    "random" => Ok(InstanceSpec::RandomPair {
                        dim: v as usize,
                        eps,
                        seed: seed + i as u64,
                    }),
                    other => Err(Error::BadParameter(format!("unknown family '{other}'"))),
                })
                .collect::<Result<_, _>>()?;
            let rep = run_scaling_study(&family, &specs, &flags.config())?;
            if csv {
                print!("{}", rep.to_csv());
            }
            if json || !csv {
                println!("{}", serde_json::to_string_pretty(&rep)?);
            }
            Ok(())
        }
        Cmd::VerifyRecursion { lambda, grid, json } => {
            let p = RecursionParams { lambda, grid, ..Default::default() };
            p.validate()?;
            let (ok, certs) = induction_check(&p);
            if json {
                println!("{}", serde_json::to_string_pretty(&certs)?);
            } else {
                for c in &certs {
                    println!(
                        "{}: {}  max_G {:.6} at ({:.4}, {:.4})  violations {}",
                        c.simulation,
                        if c.pass { "pass" } else { "FAIL" },
                        c.max_g, c.argmax.0, c.argmax.1, c.violations
                    );
                }
                println!("induction: {}", if ok { "pass" } else { "FAIL" });
            }
            if ok {
                Ok(())
            } else {
                Err(Error::BadParameter("recursion verification failed".into()))
            }
        }
        Cmd::PovmSim { s, n_ops, n_win, samples, seed, json } => {
            let spec = match n_ops {
                2 => InstanceSpec::SpinPair { s },
                3 => InstanceSpec::SpinTriple { s },
                k => return Err(Error::BadParameter(format!("n_ops must be 2 or 3, got {k}"))),
            };
            let ops = generate(&spec)?;
            let scheme = build_scheme(&ops, n_win)?;
            let d = scheme.dim();
            let rho: Array2<C64> = Array2::eye(d).mapv(|z: C64| z / d as f64);
            let completeness = scheme.completeness_residual();
            let exact: Vec<f64> = (0..scheme.num_ops())
                .map(|i| scheme.exact_ms_error(&rho, i))
                .collect::<Result<_, _>>()?;
            let (mc, se) = scheme.mc_ms_error(&rho, 0, samples, seed)?;
            let summary = serde_json::json!({
                "s": s,
                "n_ops": scheme.num_ops(),
                "n_win": scheme.n_win,
                "kappa": scheme.kappa,
                "delta": scheme.delta,
                "completeness_residual": completeness,
                "exact_ms_error": exact,
                "mc_ms_error": mc,
                "mc_std_error": se,
                "samples": samples,
            });
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                println!(
                    "spin {s}: {} windows, kappa {:.4}, delta {:.4}",
                    scheme.n_win, scheme.kappa, scheme.delta
                );
                println!("completeness residual {completeness:.3e}");
                for (i, e) in exact.iter().enumerate() {
                    println!("operator {i}: exact mean-square error {e:.6}");
                }
                println!("operator 0: MC estimate {mc:.6} +- {se:.6} ({samples} samples)");
            }
            Ok(())
        }
        Cmd::CheckLr { blocks, block_size, trials, seed } => {
            let delta = 1.0;
            let mut worst: f64 = 0.0;
            for k in 0..trials {
                let m = nearcomm::harness::random_block_tridiag(blocks, block_size, seed + k as u64);
                let h = HMat::new(m).expect("generator output is Hermitian");
                let s1: Vec<usize> = (0..block_size).collect();
                for far in 4..blocks {
                    let dist = far as f64 * delta;
                    let s2: Vec<usize> = (far * block_size..(far + 1) * block_size).collect();
                    let t = dist / (std::f64::consts::E.powi(2) * delta);
                    let leak = lr_leakage(&h, t, &s1, &s2);
                    let bound = lr_bound(dist, delta);
                    worst = worst.max(leak / bound);
                    if leak > bound {
                        return Err(Error::BadParameter(format!(
                            "leakage {leak:.3e} exceeds bound {bound:.3e} at distance {far}"
                        )));
                    }
                }
            }
            println!("light-cone bound holds on {trials} instances; worst leak/bound ratio {worst:.3e}");
            Ok(())
        }
    }
}
