use veridl_core::adversary::{matrix_attacks, run_soundness_matrix, MatrixConfig, MatrixRow};
use veridl_core::dnn::synthetic::linearly_separable;
use veridl_core::{apply_attack, Activation, AttackKind, AttackSpec, CodecParams, Instance, Mode, NetworkConfig};

fn small(mode: Mode) -> Instance {
    let params = CodecParams::default();
    let mut config = NetworkConfig::new(3, vec![4], Activation::Tanh);
    config.threshold = 1e-6;
    let data = linearly_separable(16, 3, 4).quantize(&params).unwrap();
    Instance::honest(&config, &params, data, 4, mode).unwrap()
}

#[test]
fn attacks_fail_at_an_expected_step() {
    let inst = small(Mode::Basic);
    for spec in matrix_attacks() {
        for seed in 0..2 {
            let spec = AttackSpec { seed, ..spec.clone() };
            let t = apply_attack(&spec, &inst).unwrap();
            let report = inst.verify(&t.update, &t.proof).unwrap();
            let step = report.failed_step();
            assert!(
                step.is_some_and(|s| spec.kind.expected_steps().contains(&s)),
                "{} seed {seed}: {report}",
                spec.label()
            );
        }
    }
}

#[test]
fn attacks_are_deterministic() {
    let inst = small(Mode::UniqueValue);
    for spec in matrix_attacks() {
        let spec = AttackSpec { seed: 77, ..spec };
        let a = apply_attack(&spec, &inst).unwrap();
        let b = apply_attack(&spec, &inst).unwrap();
        assert_eq!(a, b, "{}", spec.label());
    }
}

#[test]
fn compression_moves_the_error() {
    let inst = small(Mode::Basic);
    for spec in matrix_attacks().into_iter().filter(|s| s.kind.is_compression()) {
        let t = apply_attack(&spec, &inst).unwrap();
        assert!(t.e1_diff() > 2f64.powi(-40), "{}: {}", spec.label(), t.e1_diff());
        let pre = t.pre_retrain_diff.expect("compression records the pre-retrain change");
        assert!(pre.is_finite() && pre >= 0.0);
    }
}

#[test]
fn keep_proof_claims_a_different_error() {
    let inst = small(Mode::Basic);
    let t = apply_attack(&AttackSpec::new(AttackKind::WrongE1KeepProof, 1), &inst).unwrap();
    assert_eq!(t.update, inst.update);
    assert!(t.e1_diff() > 0.0);
    assert!((t.reference_e1 - inst.e1()).abs() < 1e-12);
}

#[test]
fn parameters_are_validated() {
    let base = AttackSpec::new(AttackKind::CompressLowPrecision, 0);
    assert!(base.validate().is_ok());
    assert!(AttackSpec { bits: 12, ..base.clone() }.validate().is_err());

    let prune = AttackSpec::new(AttackKind::CompressPrune, 0);
    assert!(prune.validate().is_ok());
    assert!(AttackSpec { prune_fraction: 0.5, ..prune.clone() }.validate().is_err());
    assert!(AttackSpec { prune_fraction: 0.05, ..prune }.validate().is_err());

    let byz = AttackSpec::new(AttackKind::ByzantineNeurons, 0);
    assert!(AttackSpec { neuron_fraction: 0.0, ..byz.clone() }.validate().is_err());
    assert!(AttackSpec { boost: 1, ..byz }.validate().is_err());

    let inst = small(Mode::Basic);
    assert!(apply_attack(&AttackSpec { bits: 3, ..base }, &inst).is_err());
}

#[test]
fn kind_names_round_trip() {
    for kind in AttackKind::ALL {
        assert_eq!(kind.name().parse::<AttackKind>().unwrap(), kind);
        assert_eq!(kind.to_string(), kind.name());
    }
    assert!("flip-bits".parse::<AttackKind>().is_err());
    assert_eq!(
        AttackSpec { bits: 16, ..AttackSpec::new(AttackKind::CompressLowPrecision, 0) }.label(),
        "compress-lowprec(k=16)"
    );
    assert_eq!(AttackSpec::new(AttackKind::CompressPrune, 0).label(), "compress-prune(0.10)");
}

#[test]
fn matrix_rows_and_csv() {
    let params = CodecParams::default();
    let mut mc = MatrixConfig::new("tiny", 2, vec![3], Activation::Tanh, 10);
    mc.config.threshold = 1e-6;
    let attacks = [AttackSpec::new(AttackKind::WrongE2, 0), AttackSpec::new(AttackKind::ArbitraryWeights, 0)];
    let rows = run_soundness_matrix(&[mc], 2, &attacks, &params, Mode::Basic, 11).unwrap();
    assert_eq!(rows.len(), 2 * (1 + attacks.len()));
    assert!(rows.iter().all(|r| r.as_expected), "{rows:?}");

    let control = &rows[0];
    assert_eq!(control.kind, "honest");
    assert_eq!(control.to_csv(), "honest,tiny,0,accept,none,,");

    let e2 = rows[1].to_csv();
    let fields: Vec<&str> = e2.split(',').collect();
    assert_eq!(fields.len(), MatrixRow::CSV_HEADER.split(',').count());
    assert_eq!(&fields[..5], ["wrong-E2", "tiny", "0", "reject", "step3-E2"]);
    // only S2 is touched
    assert_eq!(fields[5].parse::<f64>().unwrap(), 0.0);
    assert_eq!(fields[6], "");
}
