use ilos_core::dataset::{build_dataset, Dataset, Split, WindowSpec};
use ilos_core::ingest::{build_schema, merge_to_port_level, FeatureSchema};
use ilos_core::rits::{predict, Block, Brits, FitOptions, Gradients, SeqSet, TrainSchedule};
use ilos_core::synth::{generate, GenConfig, PROTOCOL_INDICATOR};
use ilos_core::transfer::{
    build_mega_dataset, finetune_classifier_only, finetune_entirety, finetune_schedule, finetune_with, MegaDataset, TransferError,
    FINETUNE_LEARNING_RATE,
};

fn datasets() -> Vec<Dataset> {
    let cfg = GenConfig { ports_per_network: vec![14, 10], days: 60, seed: 3, ..Default::default() };
    generate(&cfg)
        .unwrap()
        .networks
        .iter()
        .map(|n| {
            let schema = build_schema(&n.records, &[PROTOCOL_INDICATOR.to_string()]).unwrap();
            let series = merge_to_port_level(&n.records, &schema).unwrap();
            build_dataset(&series, &schema, WindowSpec::default()).unwrap().0
        })
        .collect()
}

fn mega() -> MegaDataset {
    build_mega_dataset(&datasets()).unwrap()
}

fn schedule(epochs: usize) -> TrainSchedule {
    TrainSchedule { imputation_epochs: 0, epochs, batch_size: 8, patience: epochs + 1, seed: 9, ..Default::default() }
}

fn pretrained(m: &MegaDataset) -> Brits {
    let n = m.dataset.schema.n_columns();
    let train = SeqSet::from_samples(m.dataset.split_samples(Split::Train), &m.dataset.norm).unwrap();
    let valid = SeqSet::from_samples(m.dataset.split_samples(Split::Validation), &m.dataset.norm).unwrap();
    let mut model = Brits::new(n, 8, 1);
    let s = TrainSchedule { imputation_epochs: 1, epochs: 1, batch_size: 32, ..Default::default() };
    ilos_core::rits::train_brits(&mut model, &train, &valid, &s, &FitOptions::all()).unwrap();
    model
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:03}")).collect()
}

#[test]
fn union_of_partially_overlapping_vocabularies() {
    let mut common = names("C", 40);
    common.extend(["HCCS".to_string(), "UAS".to_string()]);
    let a: Vec<String> = common.iter().cloned().chain(names("A", 34)).collect();
    let b: Vec<String> = common.iter().cloned().chain(names("B", 49)).collect();
    assert_eq!((a.len(), b.len()), (76, 91));
    let sa = FeatureSchema::new(a, vec!["OTM".into()], vec![]).unwrap();
    let sb = FeatureSchema::new(b, vec!["ETH".into()], vec![]).unwrap();
    let u = FeatureSchema::union([&sa, &sb]).unwrap();
    assert_eq!(u.n_numeric(), 125);
    assert_eq!(u.n_facilities(), 2);
}

#[test]
fn projection_round_trips_and_marks_foreign_columns_absent() {
    let ds = datasets();
    let m = build_mega_dataset(&ds).unwrap();
    let union = &m.dataset.schema;
    assert!(union.n_numeric() > ds.iter().map(|d| d.schema.n_numeric()).max().unwrap());
    let mut offset = 0;
    for d in &ds {
        let map = m.map(&d.network_ids[0]).unwrap();
        for (i, s) in d.samples.iter().enumerate() {
            let merged = &m.dataset.samples[offset + i];
            assert_eq!(&map.project_back(merged), s);
            assert_eq!(m.dataset.split.tags[offset + i], d.split.tags[i]);
            for name in union.numeric().iter().filter(|n| d.schema.numeric_index(n).is_none()) {
                let c = union.numeric_index(name).unwrap();
                assert!((0..merged.rows()).all(|t| !merged.observed[t * merged.n_columns + c]));
            }
        }
        offset += d.samples.len();
    }
    assert_eq!(offset, m.dataset.samples.len());
    assert!(m.dataset.split.boundaries.is_none());
    let counts = m.counts();
    assert_eq!(counts.iter().map(|c| c.train + c.validation + c.test).sum::<usize>(), offset);
}

#[test]
fn merge_rejects_duplicates_and_singletons() {
    let ds = datasets();
    assert_eq!(build_mega_dataset(&ds[..1]), Err(TransferError::TooFewDatasets(1)));
    let dup = vec![ds[0].clone(), ds[0].clone()];
    assert!(matches!(build_mega_dataset(&dup), Err(TransferError::DuplicateNetwork(_))));
}

#[test]
fn network_tag_never_reaches_the_model() {
    let m = mega();
    let model = Brits::new(m.dataset.schema.n_columns(), 6, 2);
    let test: Vec<_> = m.dataset.split_samples(Split::Test).cloned().collect();
    let renamed: Vec<_> = test.iter().cloned().map(|mut s| {
        s.network_id = "elsewhere".into();
        s.port_id = "P9999".into();
        s
    }).collect();
    let a = predict(&model, &SeqSet::from_samples(&test, &m.dataset.norm).unwrap()).unwrap();
    let b = predict(&model, &SeqSet::from_samples(&renamed, &m.dataset.norm).unwrap()).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn classifier_only_freezes_the_imputer() {
    let m = mega();
    let base = pretrained(&m);
    let net = &m.network_ids()[0];
    let train = m.network_set(net, Split::Train).unwrap();
    let valid = m.network_set(net, Split::Validation).unwrap();
    let (tuned, h) = finetune_classifier_only(&base, &train, &valid, &schedule(4)).unwrap();
    assert!(h.steps >= 100, "{} steps", h.steps);
    for (before, after) in base.directions().into_iter().zip(tuned.directions()) {
        for b in Block::ALL {
            let same = before.block(b).iter().zip(after.block(b)).all(|(x, y)| x.to_bits() == y.to_bits());
            assert_eq!(same, !b.is_classifier(), "{b:?}");
        }
    }
}

#[test]
fn entirety_moves_the_imputer_unless_its_gradients_vanish() {
    let m = mega();
    let base = pretrained(&m);
    let net = &m.network_ids()[1];
    let train = m.network_set(net, Split::Train).unwrap();
    let valid = m.network_set(net, Split::Validation).unwrap();
    let (full, _) = finetune_entirety(&base, &train, &valid, &schedule(2)).unwrap();
    assert_ne!(full.forward.block(Block::HistoryW), base.forward.block(Block::HistoryW));

    let zero_imputer = |g: &mut Gradients| {
        for p in [&mut g.forward, &mut g.backward] {
            for b in Block::ALL.into_iter().filter(|b| !b.is_classifier()) {
                p.block_mut(b).fill(0.0);
            }
        }
    };
    let opts = FitOptions { grad_hook: Some(&zero_imputer), ..FitOptions::all() };
    let (hooked, _) = finetune_with(&base, &train, &valid, &schedule(2), &opts).unwrap();
    let (frozen, _) = finetune_classifier_only(&base, &train, &valid, &schedule(2)).unwrap();
    assert_eq!(hooked, frozen);
}

#[test]
fn zero_epochs_and_the_halved_rate() {
    let m = mega();
    let base = Brits::new(m.dataset.schema.n_columns(), 5, 4);
    let net = &m.network_ids()[0];
    let train = m.network_set(net, Split::Train).unwrap();
    let valid = m.network_set(net, Split::Validation).unwrap();
    let (same, h) = finetune_entirety(&base, &train, &valid, &schedule(0)).unwrap();
    assert_eq!(same, base);
    assert_eq!(h.steps, 0);
    let s = finetune_schedule(&TrainSchedule::default());
    assert_eq!(s.learning_rate, FINETUNE_LEARNING_RATE);
    assert_eq!(FINETUNE_LEARNING_RATE, 5e-4);
    assert_eq!(s.imputation_epochs, 0);
    assert!(matches!(m.network_set("N9", Split::Train), Err(TransferError::EmptySubset(_))));
}
