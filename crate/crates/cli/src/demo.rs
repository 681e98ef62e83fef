//! Socket demo: `demo-serve` plays the cloud server, `demo-run` plays the
//! data owner and the verifier.
//!
//! Each connection carries one request and one response:
//!
//! | request                              | response                          |
//! |--------------------------------------|-----------------------------------|
//! | `HELLO` (empty)                      | `HELLO` with the server's name    |
//! | `TASK` [initial model, dataset CSV]  | `RESULT` [update, proof]          |
//! | `VERDICT` [report]                   | `VERDICT` (empty acknowledgement) |
//!
//! Anything else, or any failure, is answered with `ERROR` and a message.

use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use veridl_core::{Artifact, AttackSpec, InitialModel, ModelUpdate, Proof, VerificationReport};

use crate::commands::{initial_model, keys, sign, train_certify, verify_artifacts};
use crate::config::RunConfig;
use crate::dataset::{load_csv, read_csv, write_csv};
use crate::error::CliError;
use crate::wire::{join_sections, read_frame, split_sections, write_frame, Frame, FrameType};

pub const SERVER_NAME: &str = "veridl-server/1";
const TIMEOUT: Duration = Duration::from_secs(600);

/// Answers connections one at a time; stops after `limit` of them if given.
pub fn serve(
    listener: &TcpListener,
    config: &RunConfig,
    attack: Option<&AttackSpec>,
    limit: Option<usize>,
) -> Result<(), CliError> {
    let mut served = 0;
    for stream in listener.incoming() {
        let mut stream = stream?;
        stream.set_read_timeout(Some(TIMEOUT))?;
        let request = match read_frame(&mut stream) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("dropped connection: {e}");
                continue;
            }
        };
        let response = respond(&request, config, attack).unwrap_or_else(|e| Frame::error(&e.to_string()));
        if response.kind == FrameType::Error {
            eprintln!("error: {}", String::from_utf8_lossy(&response.payload));
        }
        if let Err(e) = write_frame(&mut stream, &response) {
            eprintln!("failed to answer: {e}");
        }
        served += 1;
        if limit.is_some_and(|l| served >= l) {
            break;
        }
    }
    Ok(())
}

fn respond(request: &Frame, config: &RunConfig, attack: Option<&AttackSpec>) -> Result<Frame, CliError> {
    match request.kind {
        FrameType::Hello => Ok(Frame::new(FrameType::Hello, SERVER_NAME.as_bytes().to_vec())),
        FrameType::Task => {
            let [initial, csv] = sections::<2>(&request.payload)?;
            let initial = InitialModel::from_bytes(initial)?.0;
            let params = config.codec()?;
            let data = read_csv(csv, &params)?.quantize(&params)?;
            let out = train_certify(config, data, initial, attack)?;
            eprintln!("certified {} epochs", out.run.outcome.epochs());
            let update = ModelUpdate(out.update).to_bytes();
            Ok(Frame::new(FrameType::Result, join_sections(&[&update, &out.proof.to_bytes()])))
        }
        FrameType::Verdict => {
            let report = VerificationReport::from_bytes(&request.payload)?;
            eprintln!("client verdict: {report}");
            Ok(Frame::new(FrameType::Verdict, Vec::new()))
        }
        other => Err(CliError::Protocol(format!("unexpected {other:?} request"))),
    }
}

fn sections<const K: usize>(payload: &[u8]) -> Result<[&[u8]; K], CliError> {
    split_sections(payload)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| CliError::Malformed(format!("expected {K} payload sections")))
}

fn exchange(addr: impl ToSocketAddrs, request: &Frame, expect: FrameType) -> Result<Vec<u8>, CliError> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(TIMEOUT))?;
    write_frame(&mut stream, request)?;
    let response = read_frame(&mut stream)?;
    match response.kind {
        k if k == expect => Ok(response.payload),
        FrameType::Error => {
            Err(CliError::Protocol(format!("server error: {}", String::from_utf8_lossy(&response.payload))))
        }
        k => Err(CliError::Protocol(format!("expected {expect:?}, got {k:?}"))),
    }
}

/// Signs the dataset, outsources training, verifies the answer and reports
/// the verdict back to the server.
pub fn run(addr: impl ToSocketAddrs + Copy, config: &RunConfig) -> Result<VerificationReport, CliError> {
    let params = config.codec()?;
    let data = load_csv(config.data.as_deref(), &params, config.max_samples)?;
    let (sk, pk) = keys(config)?;
    let signature = sign(&data, &sk, &pk)?;
    let initial = initial_model(config, data.input_dim().expect("nonempty dataset"))?;

    let hello = exchange(addr, &Frame::new(FrameType::Hello, Vec::new()), FrameType::Hello)?;
    eprintln!("connected to {}", String::from_utf8_lossy(&hello));

    let mut csv = Vec::new();
    write_csv(&data.dequantize(&params), &mut csv)?;
    let task = join_sections(&[&InitialModel(initial.clone()).to_bytes(), &csv]);
    let result = exchange(addr, &Frame::new(FrameType::Task, task), FrameType::Result)?;
    let [update, proof] = sections::<2>(&result)?;
    let update = ModelUpdate::from_bytes(update)?.0;
    let proof = Proof::from_bytes(proof)?;

    let report = verify_artifacts(config, &initial, &update, &proof, &signature, &pk)?;
    exchange(addr, &Frame::new(FrameType::Verdict, report.to_bytes()), FrameType::Verdict)?;
    Ok(report)
}
