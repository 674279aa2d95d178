//! Encoder forward pass against an independent numpy implementation
//! (tests/oracles/encoder_forward.py). Parameters come from closed-form
//! formulas so both sides build identical inputs.

use ndarray::Array1;
use typedclone::embed::EMBED_DIM;
use typedclone::encoder::{category_input, encode_category, EncoderParams};
use typedclone::nn::AttentionBlock;
use typedclone::{EmbeddingTable, TokenCategory};

const TOL: f64 = 1e-6;

fn fill(block: &mut AttentionBlock, b: usize) {
    for (t, data) in block.tensors_mut().into_iter().enumerate() {
        for (k, v) in data.iter_mut().enumerate() {
            let base = (0.7 * k as f64 + 1.3 * t as f64 + 0.5 * b as f64 + 0.1).sin();
            *v = match t {
                8 | 10 => 1.0 + 0.1 * base,
                5 | 7 | 9 | 11 => 0.05 * base,
                _ => 0.2 * base,
            };
        }
    }
}

fn params() -> EncoderParams {
    let mut p = EncoderParams::init(0);
    for (b, block) in p.blocks_mut().enumerate() {
        fill(block, b);
    }
    p
}

fn table() -> EmbeddingTable {
    let rows: Vec<[f32; EMBED_DIM]> = (1..=4)
        .map(|j| std::array::from_fn(|e| (0.5 * (0.3 * e as f64 + 1.1 * j as f64).cos()) as f32))
        .collect();
    EmbeddingTable::from_rows(&["a", "b", "c", "d"], &rows)
}

fn counts(entries: &[(&str, u32)]) -> typedclone::lexcat::LexemeCounts {
    entries.iter().map(|&(k, c)| (k.to_string(), c)).collect()
}

fn check(name: &str, v: &Array1<f64>, picks: [f64; 6], sum: f64, sumsq: f64) {
    for (&i, want) in [0usize, 1, 2, 37, 63, 99].iter().zip(picks) {
        assert!((v[i] - want).abs() < TOL, "{name}[{i}] = {} want {want}", v[i]);
    }
    assert!((v.sum() - sum).abs() < TOL, "{name} sum");
    assert!((v.dot(v) - sumsq).abs() < TOL * 100.0, "{name} sum of squares");
}

#[test]
fn single_lexeme_category() {
    let p = params();
    let v = encode_category(&counts(&[("a", 1)]), &table(), &p.category_blocks[0]);
    check(
        "single",
        &v,
        [7.212620252380e-01, 3.694857178303e-01, -5.742533383901e-02, 1.464909941062e+00, 6.674197152073e-01, 1.240979429982e+00],
        4.249575559019e-01,
        9.933960044421e+01,
    );
}

#[test]
fn multi_lexeme_category() {
    let p = params();
    let v = encode_category(&counts(&[("c", 3), ("a", 2), ("b", 1)]), &table(), &p.category_blocks[3]);
    check(
        "multi",
        &v,
        [-4.594467233218e-01, -6.791793845118e-01, -8.410597329880e-01, 7.710107543279e-01, -4.984078744889e-01, 9.007876599495e-01],
        3.207607721352e-01,
        4.056386911116e+01,
    );
}

#[test]
fn whole_method() {
    let p = params();
    let t = table();
    let mut inputs = vec![None; 15];
    inputs[TokenCategory::BasicType.index()] = Some(category_input(&counts(&[("a", 1)]), &t, 100));
    inputs[TokenCategory::Operator.index()] = Some(category_input(&counts(&[("b", 2), ("c", 1)]), &t, 100));
    inputs[TokenCategory::Identifier.index()] =
        Some(category_input(&counts(&[("a", 1), ("b", 1), ("c", 1), ("d", 4)]), &t, 100));
    let fwd = p.forward_inputs(inputs);
    check(
        "method",
        &fwd.output,
        [-5.004624330102e-01, -7.034304415952e-01, -9.005392416054e-01, 8.868172369802e-01, -5.337678524719e-01, 1.025362977464e+00],
        6.694395274136e-01,
        5.133918772036e+01,
    );
    let att = fwd.trace().type_attention;
    for (j, want) in [(1, 2.588670094193e-01), (6, 3.778897725697e-01), (10, 3.632432180110e-01)] {
        assert!((att[[6, j]] - want).abs() < TOL, "attention[6][{j}]");
    }
}
