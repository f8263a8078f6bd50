use pppca::linalg::{centralized_pca, gram, max_principal_angle, Matrix};
use pppca::paillier::{keygen, KeyMode};
use pppca::protocol::{
    assert_privacy, expected_message_counts, expected_type_sequence, run_he, run_session, run_ss, secure_sum_he,
    secure_sum_ss, Method, MessageType, ProtocolError, ProtocolMessage, SessionConfig, ViolationKind,
};
use pppca::transport::wire;
use pppca::PartyId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn hand_data() -> Matrix {
    Matrix::from_rows(&[
        vec![2.5, 2.4, 0.5],
        vec![0.5, 0.7, 1.9],
        vec![2.2, 2.9, -0.3],
        vec![1.9, 2.2, 0.8],
        vec![3.1, 3.0, 0.1],
        vec![2.3, 2.7, 1.2],
    ])
    .unwrap()
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, c| rng.gen_range(-2.0..2.0) * (c + 1) as f64).unwrap()
}

fn split(x: &Matrix, parts: usize) -> Vec<Matrix> {
    let n = x.rows();
    (0..parts)
        .map(|p| {
            let idx: Vec<usize> = (p * n / parts..(p + 1) * n / parts).collect();
            x.select_rows(&idx).unwrap()
        })
        .collect()
}

fn he_cfg(parties: u16, k: usize) -> SessionConfig {
    SessionConfig::new(Method::He, parties, k).with_test_keys(512).with_seed(7)
}

fn ss_cfg(parties: u16, k: usize) -> SessionConfig {
    SessionConfig::new(Method::Ss, parties, k).with_seed(7)
}

#[test]
fn he_matches_centralized_on_hand_data() {
    let x = hand_data();
    let oracle = centralized_pca(&x, 2).unwrap();
    let out = run_he(&he_cfg(2, 2), split(&x, 2)).unwrap();
    assert!(out.reduced.max_abs_diff(&oracle.reduced) <= 1e-6);
    assert!(out.covariance.max_abs_diff(&oracle.covariance) <= 1e-9);
}

#[test]
fn ss_matches_centralized_on_hand_data() {
    let x = hand_data();
    let oracle = centralized_pca(&x, 2).unwrap();
    let out = run_ss(&ss_cfg(2, 2), split(&x, 2)).unwrap();
    let tol = 2f64.powi(-24 + 4);
    assert!(out.reduced.max_abs_diff(&oracle.reduced) <= tol);
}

#[test]
fn single_provider_is_rejected() {
    let err = run_he(&he_cfg(1, 2), vec![hand_data()]).unwrap_err();
    assert!(matches!(err, ProtocolError::Config(_)), "{err}");
}

#[test]
fn replicated_data_doubles_the_gram() {
    let x = hand_data();
    let out = run_he(&he_cfg(2, 1), vec![x.clone(), x.clone()]).unwrap();
    let centered = pppca::linalg::center_columns(&x, &pppca::linalg::column_means(&x)).unwrap();
    let expected = gram(&centered).scale(2.0 / 11.0).unwrap();
    assert!(out.covariance.max_abs_diff(&expected) <= 1e-9);
}

#[test]
fn zero_variance_column_completes() {
    let noise = random_matrix(10, 4, 3);
    let x = Matrix::from_fn(10, 4, |r, c| if c == 2 { 5.0 } else { noise.get(r, c) }).unwrap();
    let out = run_ss(&ss_cfg(2, 3), split(&x, 2)).unwrap();
    assert_eq!(out.reduced.shape(), (10, 3));
    let smallest = *out.eigenvalues.last().unwrap();
    assert!(smallest.abs() <= 1e-6, "{smallest}");
}

#[test]
fn ss_transfer_is_split_invariant() {
    let x = random_matrix(40, 5, 11);
    let a = run_ss(&ss_cfg(2, 2), split(&x, 2)).unwrap();
    let b = run_ss(&ss_cfg(4, 2), split(&x, 4)).unwrap();
    assert!(a.transfer.max_abs_diff(&b.transfer) <= 1e-5);
    let c = run_ss(&ss_cfg(3, 2), split(&x, 3)).unwrap();
    assert!(a.covariance.max_abs_diff(&c.covariance) <= 3.0 * 2f64.powi(-22));
}

#[test]
fn methods_agree() {
    let x = random_matrix(24, 4, 5);
    let he = run_he(&he_cfg(3, 2), split(&x, 3)).unwrap();
    let ss = run_ss(&ss_cfg(3, 2), split(&x, 3)).unwrap();
    assert!(he.reduced.max_abs_diff(&ss.reduced) <= 1e-4);
    assert!(max_principal_angle(&he.transfer, &ss.transfer).unwrap() <= 1e-3);
}

#[test]
fn message_counts_and_order_follow_the_algorithm() {
    for method in [Method::He, Method::Ss] {
        for parties in 2..=4u16 {
            let x = random_matrix(6 * parties as usize, 4, parties as u64);
            let cfg = match method {
                Method::He => he_cfg(parties, 2),
                Method::Ss => ss_cfg(parties, 2),
            };
            let out = run_session(&cfg, split(&x, parties as usize)).unwrap();
            let t = &out.transcript;
            for (ty, n) in expected_message_counts(method, parties) {
                assert_eq!(t.count(ty), n, "{method} M={parties} {ty:?}");
            }
            let seq: Vec<MessageType> = t.type_runs().into_iter().map(|(ty, _)| ty).collect();
            assert_eq!(seq, expected_type_sequence(method), "{method} M={parties}");
            assert!(t.steps_increase_per_sender());
            assert_eq!(assert_privacy(t, &cfg), Ok(()));
        }
    }
}

#[test]
fn transcripts_are_deterministic() {
    let x = random_matrix(12, 4, 9);
    for cfg in [he_cfg(2, 2), ss_cfg(3, 2)] {
        let parts = split(&x, cfg.parties as usize);
        let a = run_session(&cfg, parts.clone()).unwrap();
        let b = run_session(&cfg, parts).unwrap();
        assert_eq!(a.transcript, b.transcript);
    }
}

#[test]
fn bad_inputs_abort() {
    let x = hand_data();
    let narrow = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let err = run_ss(&ss_cfg(2, 2), vec![x.clone(), narrow]).unwrap_err();
    assert!(matches!(err, ProtocolError::Data(_)), "{err}");
    let err = run_ss(&ss_cfg(2, 3), split(&x, 2)).unwrap_err();
    assert!(matches!(err, ProtocolError::Data(_)), "{err}");
    let mut cfg = he_cfg(2, 2);
    cfg.aggregator = 2;
    assert!(matches!(run_he(&cfg, split(&x, 2)), Err(ProtocolError::Config(_))));
}

#[test]
fn fixed_point_overflow_names_the_step() {
    let big = Matrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 * 1e7).unwrap();
    let err = run_ss(&ss_cfg(2, 1), split(&big, 2)).unwrap_err();
    match err {
        ProtocolError::Aborted { step, .. } => {
            assert!(matches!(step, pppca::protocol::Step::ColumnSums | pppca::protocol::Step::Covariance))
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn secure_sum_he_examples() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let (pk, sk) = keygen(512, KeyMode::Test, &mut rng).unwrap();
    let cfg = Default::default();
    let ids = vec![Matrix::identity(3).unwrap(); 3];
    let sum = secure_sum_he(&ids, 0, &pk, &sk, &cfg, &mut rng).unwrap();
    assert!(sum.max_abs_diff(&Matrix::identity(3).unwrap().scale(3.0).unwrap()) <= 1e-12);

    let one = random_matrix(3, 2, 1);
    let back = secure_sum_he(std::slice::from_ref(&one), 0, &pk, &sk, &cfg, &mut rng).unwrap();
    assert!(back.max_abs_diff(&one) <= 1e-12);

    let ms: Vec<Matrix> = (0..4).map(|s| random_matrix(5, 5, 100 + s)).collect();
    let plain = ms[1..].iter().fold(ms[0].clone(), |a, b| a.add(b).unwrap());
    let sum = secure_sum_he(&ms, 2, &pk, &sk, &cfg, &mut rng).unwrap();
    assert!(sum.max_abs_diff(&plain) <= 1e-9);

    let (other_pk, _) = keygen(512, KeyMode::Test, &mut rng).unwrap();
    assert!(secure_sum_he(&ms, 0, &other_pk, &sk, &cfg, &mut rng).is_err());
    let mismatched = vec![ms[0].clone(), random_matrix(2, 5, 3)];
    assert!(secure_sum_he(&mismatched, 0, &pk, &sk, &cfg, &mut rng).is_err());
}

#[test]
fn secure_sum_ss_examples() {
    let mut rng = ChaCha20Rng::seed_from_u64(22);
    let cfg = Default::default();
    let tol = |m: usize| m as f64 * 2f64.powi(-24);
    let ids = vec![Matrix::identity(3).unwrap(); 3];
    let sum = secure_sum_ss(&ids, &cfg, &mut rng).unwrap();
    assert!(sum.max_abs_diff(&Matrix::identity(3).unwrap().scale(3.0).unwrap()) <= tol(3));

    let one = random_matrix(3, 2, 1);
    let back = secure_sum_ss(std::slice::from_ref(&one), &cfg, &mut rng).unwrap();
    assert!(back.max_abs_diff(&one) <= tol(1));

    let ms: Vec<Matrix> = (0..4).map(|s| random_matrix(5, 5, 100 + s)).collect();
    let plain = ms[1..].iter().fold(ms[0].clone(), |a, b| a.add(b).unwrap());
    let sum = secure_sum_ss(&ms, &cfg, &mut rng).unwrap();
    assert!(sum.max_abs_diff(&plain) <= tol(4));
}

fn forged(msg_type: MessageType, sender: u16, receiver: u16, payload: Vec<u8>) -> ProtocolMessage {
    ProtocolMessage { msg_type, sender: PartyId(sender), receiver: PartyId(receiver), step: 999, payload }
}

fn flagged_with(
    t: &pppca::protocol::Transcript,
    cfg: &SessionConfig,
    extra: ProtocolMessage,
    kind: ViolationKind,
) -> bool {
    let mut t = t.clone();
    t.push(extra);
    match assert_privacy(&t, cfg) {
        Ok(()) => false,
        Err(v) => v.iter().any(|v| v.kind == kind),
    }
}

#[test]
fn injected_faults_are_flagged() {
    let x = hand_data();
    let cfg = he_cfg(2, 2);
    let out = run_he(&cfg, split(&x, 2)).unwrap();
    assert_eq!(assert_privacy(&out.transcript, &cfg), Ok(()));

    let rows = wire::encode_real_matrix(&x);
    let sums = wire::encode_real_vector(&pppca::linalg::column_sums(&x)).unwrap();
    let enc_s1 = out
        .transcript
        .messages()
        .iter()
        .find(|m| m.msg_type == MessageType::EncryptedSums)
        .unwrap()
        .payload
        .clone();

    assert!(flagged_with(&out.transcript, &cfg, forged(MessageType::ReducedRows, 1, 0, rows.clone()), ViolationKind::RowsExposed));
    assert!(flagged_with(&out.transcript, &cfg, forged(MessageType::PlainMean, 2, 1, sums.clone()), ViolationKind::AggregatorPlaintext));
    assert!(flagged_with(&out.transcript, &cfg, forged(MessageType::EncryptedSums, 2, 1, sums), ViolationKind::AggregatorPlaintext));
    assert!(flagged_with(&out.transcript, &cfg, forged(MessageType::ReducedRows, 1, 2, rows), ViolationKind::RowsExposed));
    assert!(flagged_with(&out.transcript, &cfg, forged(MessageType::EncryptedSums, 2, 0, enc_s1), ViolationKind::ServerNonAggregate));
    assert!(flagged_with(
        &out.transcript,
        &cfg,
        forged(MessageType::TransferMatrix, 0, 3, wire::encode_real_matrix(&out.transfer)),
        ViolationKind::ConsumerForbidden
    ));
}

#[test]
fn ss_transcript_with_four_providers_passes() {
    let x = random_matrix(20, 4, 2);
    let cfg = ss_cfg(4, 2);
    let out = run_ss(&cfg, split(&x, 4)).unwrap();
    assert_eq!(assert_privacy(&out.transcript, &cfg), Ok(()));
    let share = out.transcript.messages().iter().find(|m| m.msg_type == MessageType::ShareBundle).unwrap();
    let bundle = forged(MessageType::ShareBundle, 1, 0, share.payload.clone());
    assert!(flagged_with(&out.transcript, &cfg, bundle, ViolationKind::ServerNonAggregate));
}
