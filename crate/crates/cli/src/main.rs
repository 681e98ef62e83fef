use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use veridl_cli::commands::{
    self, keys, matrix_csv, proof_size_sweep, read_artifact, sign, soundness_matrix, train_certify, verify_artifacts,
    write_artifact, BenchRow,
};
use veridl_cli::dataset::load_csv;
use veridl_cli::{demo, exit, CliError, RunConfig};
use veridl_core::{
    AttackKind, AttackSpec, DatasetSignature, InitialModel, Mode, ModelUpdate, Proof, PublicKey, SecretKey,
};

/// Verifiable outsourced training: keys, signing, certified training,
/// verification, attacks and benchmarks.
#[derive(Parser)]
#[command(name = "veridl", version)]
struct Cli {
    /// TOML run configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed (and VERIDL_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts whose path is not given explicitly.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Proof mode: basic or unique-value.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair.
    Genkey,
    /// Sign a dataset with the secret key.
    Setup {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        secret_key: Option<PathBuf>,
        #[arg(long)]
        public_key: Option<PathBuf>,
        /// Signature output file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train to convergence and write the update and its proof.
    TrainCertify {
        #[command(flatten)]
        data: DataArg,
        /// Initial model; generated from the seed (and written) when absent.
        #[arg(long)]
        initial: Option<PathBuf>,
        /// Tamper with the result before writing it.
        #[arg(long)]
        attack: Option<AttackKind>,
    },
    /// Check an update and proof; exit 0 on accept, 2 on reject, 1 on malformed input.
    Verify {
        #[arg(long)]
        initial: Option<PathBuf>,
        #[arg(long)]
        update: Option<PathBuf>,
        #[arg(long)]
        proof: Option<PathBuf>,
        #[arg(long)]
        signature: Option<PathBuf>,
        #[arg(long)]
        public_key: Option<PathBuf>,
    },
    /// Run every attack against the standard configurations and emit CSV.
    Attack {
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// CSV output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep first-layer widths and emit proof sizes and timings as CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 4)]
        input_dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve training requests over TCP.
    DemoServe {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Stop after this many connections.
        #[arg(long)]
        connections: Option<usize>,
        #[arg(long)]
        attack: Option<AttackKind>,
    },
    /// Outsource training to a demo server and verify the answer.
    DemoRun {
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        #[command(flatten)]
        data: DataArg,
    },
}

#[derive(Args)]
struct DataArg {
    /// CSV dataset; the bundled synthetic dataset when absent.
    #[arg(long)]
    data: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::ACCEPT };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("veridl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = cli.out_dir {
        config.out_dir = dir;
    }
    if let Some(mode) = cli.mode {
        config.mode = mode;
    }
    let dir = config.out_dir.clone();
    let path = |given: Option<PathBuf>, name: &str| given.unwrap_or_else(|| dir.join(name));

    match cli.command {
        Command::Genkey => {
            let (sk, pk) = keys(&config)?;
            let (skp, pkp) = (dir.join(commands::SECRET_KEY), dir.join(commands::PUBLIC_KEY));
            write_artifact(&skp, &sk)?;
            write_artifact(&pkp, &pk)?;
            println!("secret key: {}\npublic key: {}", skp.display(), pkp.display());
            Ok(exit::ACCEPT)
        }
        Command::Setup { data, secret_key, public_key, out } => {
            config.data = data.data.or(config.data);
            let params = config.codec()?;
            let dataset = load_csv(config.data.as_deref(), &params, config.max_samples)?;
            let sk: SecretKey = read_artifact(&path(secret_key, commands::SECRET_KEY))?;
            let pk: PublicKey = read_artifact(&path(public_key, commands::PUBLIC_KEY))?;
            let signature = sign(&dataset, &sk, &pk)?;
            let out = path(out, commands::SIGNATURE);
            write_artifact(&out, &signature)?;
            println!("signed {} samples: {}", dataset.len(), out.display());
            Ok(exit::ACCEPT)
        }
        Command::TrainCertify { data, initial, attack } => {
            config.data = data.data.or(config.data);
            let params = config.codec()?;
            let dataset = load_csv(config.data.as_deref(), &params, config.max_samples)?;
            let initial = match initial {
                Some(p) => read_artifact::<InitialModel>(&p)?.0,
                None => {
                    let w = commands::initial_model(&config, dataset.input_dim().expect("nonempty dataset"))?;
                    let p = dir.join(commands::INITIAL_MODEL);
                    write_artifact(&p, &InitialModel(w.clone()))?;
                    println!("initial model: {}", p.display());
                    w
                }
            };
            let spec = match attack {
                Some(kind) => Some(match &config.attack {
                    Some(a) if a.kind == kind => a.spec(config.seed),
                    _ => AttackSpec::new(kind, config.seed),
                }),
                None => config.attack_spec(),
            };
            let out = train_certify(&config, dataset, initial, spec.as_ref())?;
            let (up, pp) = (dir.join(commands::UPDATE), dir.join(commands::PROOF));
            write_artifact(&up, &ModelUpdate(out.update.clone()))?;
            write_artifact(&pp, &out.proof)?;
            let outcome = &out.run.outcome;
            println!("epochs: {}", outcome.epochs());
            println!("E1: {:e}\nE2: {:e}", outcome.e1(&config.codec()?), outcome.e2(&config.codec()?));
            if let Some((spec, t)) = &out.attack {
                println!("attack: {}\n|E1'-E1|: {:e}", spec.label(), t.e1_diff());
            }
            println!(
                "update: {}\nproof: {} ({} bytes)",
                up.display(),
                pp.display(),
                fs::metadata(&pp).map_or(0, |m| m.len())
            );
            Ok(exit::ACCEPT)
        }
        Command::Verify { initial, update, proof, signature, public_key } => {
            let initial: InitialModel = read_artifact(&path(initial, commands::INITIAL_MODEL))?;
            let update: ModelUpdate = read_artifact(&path(update, commands::UPDATE))?;
            let proof: Proof = read_artifact(&path(proof, commands::PROOF))?;
            let signature: DatasetSignature = read_artifact(&path(signature, commands::SIGNATURE))?;
            let pk: PublicKey = read_artifact(&path(public_key, commands::PUBLIC_KEY))?;
            let report = verify_artifacts(&config, &initial.0, &update.0, &proof, &signature, &pk)?;
            print_report(&report);
            Ok(if report.is_accept() { exit::ACCEPT } else { exit::REJECT })
        }
        Command::Attack { trials, out } => {
            let rows = soundness_matrix(&config, trials)?;
            write_output(out.as_deref(), &matrix_csv(&rows))?;
            let missed = rows.iter().filter(|r| !r.as_expected).count();
            eprintln!("{} of {} rows as expected", rows.len() - missed, rows.len());
            Ok(if missed == 0 { exit::ACCEPT } else { exit::REJECT })
        }
        Command::Bench { widths, samples, input_dim, out } => {
            let rows = proof_size_sweep(&config, &widths, samples, input_dim)?;
            let mut csv = format!("{}\n", BenchRow::CSV_HEADER);
            for r in &rows {
                csv.push_str(&r.to_csv());
                csv.push('\n');
            }
            write_output(out.as_deref(), &csv)?;
            Ok(exit::ACCEPT)
        }
        Command::DemoServe { listen, connections, attack } => {
            let spec = attack.map(|k| AttackSpec::new(k, config.seed)).or_else(|| config.attack_spec());
            let listener = TcpListener::bind(&listen)?;
            println!("listening on {}", listener.local_addr()?);
            std::io::stdout().flush()?;
            demo::serve(&listener, &config, spec.as_ref(), connections)?;
            Ok(exit::ACCEPT)
        }
        Command::DemoRun { connect, data } => {
            config.data = data.data.or(config.data);
            let report = demo::run(connect.as_str(), &config)?;
            print_report(&report);
            Ok(if report.is_accept() { exit::ACCEPT } else { exit::REJECT })
        }
    }
}

fn print_report(report: &veridl_core::VerificationReport) {
    println!("verdict: {}", report.verdict().name());
    println!("failed_step: {}", report.failed_step_name());
    if let Some(f) = report.failure.as_ref().filter(|f| !f.detail.is_empty()) {
        println!("detail: {}", f.detail);
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
