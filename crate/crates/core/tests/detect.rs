use typedclone::bench::{synth_clones, train_embeddings, SynthSpec, BASE_METHODS};
use typedclone::detect::{detect_classifier, detect_corpus, detect_cosine, Detector};
use typedclone::lexcat::categorize_source;
use typedclone::train::{pretrain, FineTuneHead, PretrainConfig};
use typedclone::{CategorizedMethod, EmbedConfig, EncoderParams};

fn cm(src: &str, id: &str) -> CategorizedMethod {
    categorize_source(src, id).unwrap()
}

#[test]
fn overlap_of_exactly_threshold_is_not_a_clone() {
    let methods = vec![cm("a a a a a a a b b b", "m1"), cm("a a a a a a a c c c", "m2")];
    let pairs = vec![("m1".to_string(), "m2".to_string())];
    let v = detect_corpus(&methods, &pairs, &Detector::Overlap { threshold: 0.7 }, 1).unwrap();
    assert_eq!(v[0].score, 0.7);
    assert!(!v[0].is_clone);
    let v = detect_corpus(&methods, &pairs, &Detector::Overlap { threshold: 0.69 }, 1).unwrap();
    assert!(v[0].is_clone);
}

#[test]
fn tied_head_scores_one_half() {
    let ds = synth_clones(&BASE_METHODS[..3], &SynthSpec { variants: 1, ..SynthSpec::default() }).unwrap();
    let table = train_embeddings(&ds, &EmbedConfig::default()).unwrap();
    let params = EncoderParams::init(1);
    let mut head = FineTuneHead::new(3, 1);
    head.zero_output_layer();
    let (a, b) = (&ds.methods()[0].categorized, &ds.methods()[2].categorized);
    let v = detect_classifier(a, b, &params, &head, &table, false);
    assert_eq!(v.score, 0.5);
    assert!(!v.is_clone);
}

#[test]
fn symmetric_classifier_ignores_argument_order() {
    let ds = synth_clones(&BASE_METHODS[..3], &SynthSpec { variants: 1, ..SynthSpec::default() }).unwrap();
    let table = train_embeddings(&ds, &EmbedConfig::default()).unwrap();
    let params = EncoderParams::init(2);
    let head = FineTuneHead::new(3, 2);
    let (a, b) = (&ds.methods()[0].categorized, &ds.methods()[4].categorized);
    let ab = detect_classifier(a, b, &params, &head, &table, true);
    let ba = detect_classifier(b, a, &params, &head, &table, true);
    assert_eq!(ab.score, ba.score);
    assert_eq!(ab.is_clone, ba.is_clone);
    let plain_ab = detect_classifier(a, b, &params, &head, &table, false);
    let plain_ba = detect_classifier(b, a, &params, &head, &table, false);
    assert_ne!(plain_ab.score, plain_ba.score);
}

#[test]
fn disjoint_categories_with_trained_model() {
    let ds = synth_clones(&BASE_METHODS[..8], &SynthSpec { variants: 4, ..SynthSpec::default() }).unwrap();
    let table = train_embeddings(&ds, &EmbedConfig::default()).unwrap();
    let all: Vec<usize> = (0..ds.pairs.len()).collect();
    let cfg = PretrainConfig { epochs: 2, ..PretrainConfig::default() };
    let params = pretrain(&ds, &all, &table, &cfg, None).unwrap().params;
    let idents = cm("total count", "idents");
    let ops = cm("+ - *", "ops");
    let v = detect_cosine(&idents, &ops, &params, &table, 0.7);
    assert!((v.score - -0.093_900_113_733_981_73).abs() < 1e-9, "score {}", v.score);
    assert!(!v.is_clone);
}
