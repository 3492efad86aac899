use imba_ids::data::{
    read_csv, stratified_split, DatasetSchema, Encoder, LoadOptions, Normalizer, Preprocessor,
    SplitRatio, SynthSpec,
};
use imba_ids::trainer::{compare_strategies, evaluate, train, LossChoice, Strategy, TrainConfig};
use imba_ids::RngState;

const SCHEMA: &str = r#"
label = "label"
benign = "normal"
classes = ["normal", "dos", "probe"]
ignore = ["id"]

[[features]]
name = "proto"
kind = "categorical"

[[features]]
name = "bytes"
kind = "numeric"

[[features]]
name = "rate"
kind = "numeric"
"#;

/// Flow records whose class is recoverable from protocol and rate.
fn flows(n: usize, seed: u64) -> String {
    let mut rng = RngState::new(seed);
    let mut out = String::from("id,proto,bytes,rate,label\n");
    for i in 0..n {
        let (proto, rate, label) = match i % 6 {
            0..=3 => ("tcp", 1.0, "normal"),
            4 => ("udp", 50.0, "dos"),
            _ => ("icmp", 5.0, "probe"),
        };
        let bytes = 1000.0 + 200.0 * rng.standard_normal();
        let rate = rate + rng.standard_normal();
        out.push_str(&format!("{i},{proto},{bytes:.3},{rate:.3},{label}\n"));
    }
    out
}

fn small_config() -> TrainConfig {
    TrainConfig {
        hidden_layers: 2,
        hidden_width: 16,
        learning_rate: 1e-2,
        batch_size: 32,
        epochs: 15,
        ..TrainConfig::default()
    }
}

#[test]
fn csv_to_report_end_to_end() {
    let schema = DatasetSchema::from_toml(SCHEMA).unwrap();
    let table = read_csv(flows(600, 1).as_bytes(), &schema, LoadOptions::default()).unwrap();
    assert_eq!(table.len(), 600);
    assert_eq!(table.malformed, 0);

    let encoder = Encoder::fit(&table, &schema).unwrap();
    let encoded = encoder.encode(&table).unwrap();
    // three one-hot protocol columns plus two numeric columns
    assert_eq!(encoded.num_features(), 5);
    assert_eq!(encoded.class_counts(), vec![400, 100, 100]);

    // test share per class is round(n / 6)
    let (train_raw, test_raw) = stratified_split(
        &encoded,
        SplitRatio::new(5, 1).unwrap(),
        &mut RngState::new(0).derive(7),
    );
    assert_eq!(train_raw.class_counts(), vec![333, 83, 83]);
    assert_eq!(test_raw.class_counts(), vec![67, 17, 17]);

    let normalizer = Normalizer::fit(&train_raw);
    let train_ds = normalizer.apply(&train_raw).unwrap();
    let test_ds = normalizer.apply(&test_raw).unwrap();
    let mean_bytes: f64 = (0..train_ds.len())
        .map(|r| train_ds.features.get(r, 3))
        .sum::<f64>()
        / train_ds.len() as f64;
    assert!(mean_bytes.abs() < 1e-12);

    let (model, history) = train(&small_config(), &train_ds, Some(&test_ds)).unwrap();
    assert_eq!(history.epochs.len(), 15);
    let report = evaluate(&model, &test_ds).unwrap();
    assert!(report.cba > 95.0, "cba {}", report.cba);
    assert_eq!(
        history.epochs.last().unwrap().eval.as_ref().unwrap(),
        &report
    );

    // A preprocessor reloaded from disk transforms fresh data identically.
    let pre = Preprocessor {
        encoder,
        normalizer,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pre.toml");
    pre.save(&path).unwrap();
    let reloaded = Preprocessor::load(&path).unwrap();
    let fresh = read_csv(flows(60, 9).as_bytes(), &schema, LoadOptions::default()).unwrap();
    assert_eq!(
        pre.transform(&fresh).unwrap(),
        reloaded.transform(&fresh).unwrap()
    );
    assert!(
        evaluate(&model, &reloaded.transform(&fresh).unwrap())
            .unwrap()
            .cba
            > 90.0
    );
}

#[test]
fn unseen_category_encodes_as_zeros_and_unknown_label_fails() {
    let schema = DatasetSchema::from_toml(SCHEMA).unwrap();
    let table = read_csv(flows(60, 1).as_bytes(), &schema, LoadOptions::default()).unwrap();
    let encoder = Encoder::fit(&table, &schema).unwrap();
    let odd = "id,proto,bytes,rate,label\n0,sctp,1.0,1.0,normal\n";
    let odd = read_csv(odd.as_bytes(), &schema, LoadOptions::default()).unwrap();
    let ds = encoder.encode(&odd).unwrap();
    assert_eq!(
        (0..3).map(|c| ds.features.get(0, c)).collect::<Vec<_>>(),
        vec![0.0; 3]
    );
    assert_eq!(ds.features.get(0, 3), 1.0);

    let bad = "id,proto,bytes,rate,label\n0,tcp,1.0,1.0,worm\n";
    let bad = read_csv(bad.as_bytes(), &schema, LoadOptions::default());
    assert!(bad.is_err() || encoder.encode(&bad.unwrap()).is_err());
}

#[test]
fn training_is_seed_deterministic() {
    let mut rng = RngState::new(2);
    let ds =
        imba_ids::data::synth_generate(&SynthSpec::separable(&[200, 60, 40], 4), &mut rng).unwrap();
    let config = TrainConfig {
        epochs: 3,
        ..small_config()
    };
    let (a, ha) = train(&config, &ds, None).unwrap();
    let (b, hb) = train(&config, &ds, None).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(ha.losses(), hb.losses());

    let (c, _) = train(
        &TrainConfig {
            seed: 1,
            ..config.clone()
        },
        &ds,
        None,
    )
    .unwrap();
    assert_ne!(a.to_bytes(), c.to_bytes());

    // Without dropout the dropout stream is unused, so only initialization and
    // shuffling depend on the seed.
    let no_drop = TrainConfig {
        keep_prob: 1.0,
        ..config
    };
    let (d, _) = train(&no_drop, &ds, None).unwrap();
    assert_ne!(a.to_bytes(), d.to_bytes());
}

#[test]
fn compare_keeps_order_and_is_reproducible() {
    let mut rng = RngState::new(4);
    let ds =
        imba_ids::data::synth_generate(&SynthSpec::separable(&[300, 60, 30], 4), &mut rng).unwrap();
    let (train_ds, test_ds) = stratified_split(&ds, SplitRatio::new(5, 1).unwrap(), &mut rng);
    let base = TrainConfig {
        epochs: 3,
        ..small_config()
    };
    let strategies = [
        Strategy::Undersample,
        Strategy::CrossEntropy,
        Strategy::AttackSharing,
    ];
    let first = compare_strategies(&base, &strategies, &train_ds, &test_ds).unwrap();
    let order: Vec<Strategy> = first.iter().map(|r| r.strategy).collect();
    assert_eq!(order, strategies);
    assert_eq!(first[1].config.loss, LossChoice::CrossEntropy);
    assert_eq!(first[2].config.loss, LossChoice::AttackSharing);

    let second = compare_strategies(&base, &strategies, &train_ds, &test_ds).unwrap();
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.report, b.report);
        assert_eq!(a.history.losses(), b.history.losses());
    }

    // Each entry matches a standalone run of the same config.
    let (model, _) = train(&first[1].config, &train_ds, None).unwrap();
    assert_eq!(evaluate(&model, &test_ds).unwrap(), first[1].report);
}
