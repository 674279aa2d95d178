use typedclone::bench::{synth_clones, train_embeddings, SynthSpec, BASE_METHODS};
use typedclone::dataset::PairDataset;
use typedclone::train::{finetune, pretrain, FineTuneHead, FinetuneConfig, Parameters, PretrainConfig, TrainError};
use typedclone::{EmbedConfig, EmbeddingTable, EncoderParams};

fn small() -> (PairDataset, EmbeddingTable) {
    let ds = synth_clones(&BASE_METHODS[..6], &SynthSpec { variants: 3, ..SynthSpec::default() }).unwrap();
    let table = train_embeddings(&ds, &EmbedConfig::default()).unwrap();
    (ds, table)
}

fn bits(p: &impl Parameters) -> Vec<u64> {
    p.flatten().iter().map(|x| x.to_bits()).collect()
}

#[test]
fn pretraining_is_deterministic_and_leaves_embeddings_alone() {
    let (ds, table) = small();
    let mut before = Vec::new();
    table.write_to(&mut before).unwrap();
    let all: Vec<usize> = (0..ds.pairs.len()).collect();
    let cfg = PretrainConfig { epochs: 2, seed: 4, ..PretrainConfig::default() };
    let a = pretrain(&ds, &all, &table, &cfg, None).unwrap();
    let b = pretrain(&ds, &all, &table, &cfg, None).unwrap();
    assert_eq!(bits(&a.params), bits(&b.params));
    assert_eq!(a.epoch_losses, b.epoch_losses);
    assert_eq!(a.epoch_losses.len(), 2);
    assert_ne!(bits(&a.params), bits(&EncoderParams::init(4)));
    let mut after = Vec::new();
    table.write_to(&mut after).unwrap();
    assert_eq!(before, after);

    let csv = a.log_csv();
    assert!(csv.starts_with("epoch,batch,loss\n"));
    assert_eq!(csv.lines().count(), a.log.len() + 1);
}

#[test]
fn zero_epochs_returns_the_initialization() {
    let (ds, table) = small();
    let all: Vec<usize> = (0..ds.pairs.len()).collect();
    let cfg = PretrainConfig { epochs: 0, seed: 7, ..PretrainConfig::default() };
    let out = pretrain(&ds, &all, &table, &cfg, None).unwrap();
    assert_eq!(out.params, EncoderParams::init(7));
    assert!(out.epoch_losses.is_empty());
}

#[test]
fn pretraining_needs_clone_classes() {
    let (ds, table) = small();
    let negatives: Vec<usize> = (0..ds.pairs.len()).filter(|&p| !ds.pairs[p].is_clone()).collect();
    let err = pretrain(&ds, &negatives, &table, &PretrainConfig::default(), None).unwrap_err();
    assert!(matches!(err, TrainError::DegenerateBatch(_)));
    let cfg = PretrainConfig { embedding_frozen: false, ..PretrainConfig::default() };
    assert!(pretrain(&ds, &[0], &table, &cfg, None).is_err());
}

#[test]
fn finetune_updates_encoder_and_head() {
    let (ds, table) = small();
    let all: Vec<usize> = (0..ds.pairs.len()).collect();
    let params = EncoderParams::init(1);
    let head = FineTuneHead::new(1, 1);
    let cfg = FinetuneConfig {
        train: PretrainConfig { epochs: 1, batch_size: 16, ..PretrainConfig::default() },
        ..FinetuneConfig::default()
    };
    let out = finetune(params.clone(), head.clone(), &ds, &all, &table, &cfg, None).unwrap();
    assert_ne!(bits(&out.params), bits(&params));
    assert_ne!(bits(&out.head), bits(&head));
    assert!(out.epoch_losses[0].is_finite());

    let positives: Vec<usize> = (0..ds.pairs.len()).filter(|&p| ds.pairs[p].is_clone()).collect();
    let strict = FinetuneConfig { allow_single_class_batches: false, ..cfg };
    let err = finetune(params, head, &ds, &positives, &table, &strict, None).unwrap_err();
    assert!(matches!(err, TrainError::DegenerateBatch(_)));
}
