//! The work behind each subcommand, kept free of argument parsing and
//! printing so it can be driven from tests.

use std::fs;
use std::path::Path;
use std::time::Instant;

use veridl_core::adversary::{matrix_attacks, run_soundness_matrix, standard_matrix_configs, MatrixRow, Tampered};
use veridl_core::dnn::synthetic::linearly_separable;
use veridl_core::{
    apply_attack, genkey, setup, verify, Artifact, AttackSpec, DatasetSignature, Mode, NetworkConfig, Proof, PublicKey,
    QuantizedDataset, QuantizedWeights, SecretKey, ServerRun, VerificationReport, VerifyContext, Weights,
    SECURITY_BITS,
};

use crate::config::RunConfig;
use crate::error::CliError;

pub const SECRET_KEY: &str = "secret.key";
pub const PUBLIC_KEY: &str = "public.key";
pub const SIGNATURE: &str = "signature.sig";
pub const INITIAL_MODEL: &str = "initial.model";
pub const UPDATE: &str = "update.bin";
pub const PROOF: &str = "proof.bin";

pub fn read_artifact<T: Artifact>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    T::from_bytes(&bytes).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))
}

pub fn write_artifact<T: Artifact>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, value.to_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn keys(config: &RunConfig) -> Result<(SecretKey, PublicKey), CliError> {
    Ok(genkey(SECURITY_BITS, config.seed)?)
}

pub fn sign(data: &QuantizedDataset, sk: &SecretKey, pk: &PublicKey) -> Result<DatasetSignature, CliError> {
    Ok(setup(data, sk, pk)?)
}

/// The client's seeded initial model for a dataset of `input_dim` features.
pub fn initial_model(config: &RunConfig, input_dim: usize) -> Result<QuantizedWeights, CliError> {
    let network = config.network(input_dim)?;
    let params = config.codec()?;
    Ok(Weights::random(&network, &params, config.seed).quantize(&params)?)
}

/// Network configuration for a model: the shape comes from the weights, the
/// training settings from `config`.
pub fn network_for(config: &RunConfig, weights: &QuantizedWeights) -> Result<NetworkConfig, CliError> {
    let first = weights.hidden.first().ok_or_else(|| CliError::Malformed("model has no hidden layer".into()))?;
    let shaped = RunConfig {
        network: crate::config::NetworkSection {
            hidden: weights.hidden.iter().map(|m| m.cols()).collect(),
            ..config.network.clone()
        },
        ..config.clone()
    };
    shaped.network(first.rows())
}

/// Server output, possibly tampered with.
#[derive(Clone, Debug)]
pub struct Certified {
    pub run: ServerRun,
    pub update: QuantizedWeights,
    pub proof: Proof,
    pub attack: Option<(AttackSpec, Tampered)>,
}

pub fn train_certify(
    config: &RunConfig,
    data: QuantizedDataset,
    initial: QuantizedWeights,
    attack: Option<&AttackSpec>,
) -> Result<Certified, CliError> {
    let network = network_for(config, &initial)?;
    if data.input_dim() != Some(network.input_dim) {
        return Err(CliError::Malformed(format!(
            "dataset has {:?} features, the initial model expects {}",
            data.input_dim(),
            network.input_dim
        )));
    }
    let run = ServerRun::train(&network, &config.codec()?, data, initial, config.mode)?;
    match attack {
        None => Ok(Certified { update: run.update.clone(), proof: run.proof.clone(), run, attack: None }),
        Some(spec) => {
            let t = apply_attack(spec, &run)?;
            Ok(Certified { update: t.update.clone(), proof: t.proof.clone(), run, attack: Some((spec.clone(), t)) })
        }
    }
}

pub fn verify_artifacts(
    config: &RunConfig,
    initial: &QuantizedWeights,
    update: &QuantizedWeights,
    proof: &Proof,
    signature: &DatasetSignature,
    public_key: &PublicKey,
) -> Result<VerificationReport, CliError> {
    let network = network_for(config, initial)?;
    let params = config.codec()?;
    let ctx = VerifyContext { config: &network, params: &params, public_key };
    Ok(verify(&ctx, initial, update, proof, signature)?)
}

/// Runs the standard soundness matrix.
pub fn soundness_matrix(config: &RunConfig, trials: usize) -> Result<Vec<MatrixRow>, CliError> {
    let params = config.codec()?;
    Ok(run_soundness_matrix(&standard_matrix_configs(), trials, &matrix_attacks(), &params, config.mode, config.seed)?)
}

pub fn matrix_csv(rows: &[MatrixRow]) -> String {
    let mut out = String::from(MatrixRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// One line of the proof-size benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub width: usize,
    /// `N·(m + d1) + m·d1`.
    pub terms: usize,
    pub mode: Mode,
    pub proof_bytes: usize,
    pub train_ms: f64,
    pub certify_ms: f64,
    pub verify_ms: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "d1,terms,mode,proof_bytes,train_ms,certify_ms,verify_ms";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.3},{:.3}",
            self.width,
            self.terms,
            self.mode.name(),
            self.proof_bytes,
            self.train_ms,
            self.certify_ms,
            self.verify_ms
        )
    }
}

/// Trains, certifies and verifies a one-hidden-layer network per width in
/// `widths` on the same `samples × input_dim` dataset, in both modes.
pub fn proof_size_sweep(
    config: &RunConfig,
    widths: &[usize],
    samples: usize,
    input_dim: usize,
) -> Result<Vec<BenchRow>, CliError> {
    let params = config.codec()?;
    let data = linearly_separable(samples, input_dim, config.seed).quantize(&params)?;
    let (sk, pk) = keys(config)?;
    let signature = sign(&data, &sk, &pk)?;
    let mut rows = Vec::new();
    for &width in widths {
        let shaped = RunConfig {
            network: crate::config::NetworkSection { hidden: vec![width], ..config.network.clone() },
            ..config.clone()
        };
        let initial = initial_model(&shaped, input_dim)?;
        let t = Instant::now();
        let run = ServerRun::train(&shaped.network(input_dim)?, &params, data.clone(), initial, Mode::Basic)?;
        let train_ms = ms(t);
        for mode in [Mode::Basic, Mode::UniqueValue] {
            let t = Instant::now();
            let run = run.with_mode(mode)?;
            let certify_ms = ms(t);
            let t = Instant::now();
            let report = verify_artifacts(&shaped, &run.initial, &run.update, &run.proof, &signature, &pk)?;
            let verify_ms = ms(t);
            if !report.is_accept() {
                return Err(CliError::Protocol(format!("honest run rejected at d1 = {width}: {report}")));
            }
            rows.push(BenchRow {
                width,
                terms: samples * (input_dim + width) + input_dim * width,
                mode,
                proof_bytes: run.proof.to_bytes().len(),
                train_ms,
                certify_ms,
                verify_ms,
            });
        }
    }
    Ok(rows)
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
