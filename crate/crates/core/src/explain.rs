//! Per-category importance from the type-level attention trace.

use std::fmt::Write as _;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::encoder::AttentionTrace;
use crate::lexcat::{category_order, TokenCategory, NUM_CATEGORIES};

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainReport {
    pub source_id: String,
    pub weights: [f64; NUM_CATEGORIES],
    pub present_mask: [bool; NUM_CATEGORIES],
}

/// Column sums of the trace over present key categories.
pub fn column_sums(trace: &AttentionTrace) -> [f64; NUM_CATEGORIES] {
    let mut s = [0.0; NUM_CATEGORIES];
    for (j, sum) in s.iter_mut().enumerate() {
        if trace.present_mask[j] {
            *sum = trace.type_attention.column(j).sum();
        }
    }
    s
}

/// Softmax of the column sums over present categories; absent → 0.
pub fn category_weights(trace: &AttentionTrace) -> [f64; NUM_CATEGORIES] {
    softmax_present(&column_sums(trace), &trace.present_mask)
}

pub fn softmax_present(scores: &[f64; NUM_CATEGORIES], present: &[bool; NUM_CATEGORIES]) -> [f64; NUM_CATEGORIES] {
    let mut w = [0.0; NUM_CATEGORIES];
    let max = (0..NUM_CATEGORIES)
        .filter(|&j| present[j])
        .map(|j| scores[j])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return w;
    }
    let mut total = 0.0;
    for j in 0..NUM_CATEGORIES {
        if present[j] {
            w[j] = (scores[j] - max).exp();
            total += w[j];
        }
    }
    w.iter_mut().for_each(|v| *v /= total);
    w
}

impl ExplainReport {
    pub fn from_trace(source_id: impl Into<String>, trace: &AttentionTrace) -> Self {
        Self {
            source_id: source_id.into(),
            weights: category_weights(trace),
            present_mask: trace.present_mask,
        }
    }

    pub fn weight(&self, cat: TokenCategory) -> f64 {
        self.weights[cat.index()]
    }

    /// Present categories sorted by weight, largest first.
    pub fn ranked(&self) -> Vec<(TokenCategory, f64)> {
        let mut v: Vec<_> = category_order()
            .iter()
            .filter(|c| self.present_mask[c.index()])
            .map(|&c| (c, self.weights[c.index()]))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.index().cmp(&b.0.index())));
        v
    }

    /// Aligned two-column table in canonical category order.
    pub fn to_table(&self) -> String {
        let width = category_order().iter().map(|c| c.name().len()).max().unwrap_or(0);
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.source_id);
        for c in category_order() {
            let mark = if self.present_mask[c.index()] { ' ' } else { '-' };
            let _ = writeln!(s, "  {:<width$}  {:.4} {}", c.name(), self.weights[c.index()], mark);
        }
        s
    }
}

struct WeightMap<'a>(&'a [f64; NUM_CATEGORIES]);

impl Serialize for WeightMap<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(NUM_CATEGORIES))?;
        for c in category_order() {
            m.serialize_entry(c.name(), &self.0[c.index()])?;
        }
        m.end()
    }
}

impl Serialize for ExplainReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ExplainReport", 2)?;
        st.serialize_field("source_id", &self.source_id)?;
        st.serialize_field("weights", &WeightMap(&self.weights))?;
        st.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn trace_with(present: &[usize], fill: impl Fn(usize, usize) -> f64) -> AttentionTrace {
        let mut t = AttentionTrace::empty();
        for &i in present {
            t.present_mask[i] = true;
        }
        t.type_attention = Array2::from_shape_fn((NUM_CATEGORIES, NUM_CATEGORIES), |(i, j)| {
            if t.present_mask[i] && t.present_mask[j] {
                fill(i, j)
            } else {
                0.0
            }
        });
        t
    }

    #[test]
    fn uniform_trace_gives_uniform_weights() {
        let t = trace_with(&[1, 4, 10], |_, _| 1.0 / 3.0);
        let w = category_weights(&t);
        for j in 0..NUM_CATEGORIES {
            let expected = if [1, 4, 10].contains(&j) { 1.0 / 3.0 } else { 0.0 };
            assert!((w[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn two_categories_hand_computed() {
        // column sums (2, 0): every query attends fully to category 3
        let t = trace_with(&[3, 7], |_, j| if j == 3 { 1.0 } else { 0.0 });
        assert_eq!(column_sums(&t)[3], 2.0);
        let w = category_weights(&t);
        let e2 = 2f64.exp();
        assert!((w[3] - e2 / (e2 + 1.0)).abs() < 1e-12);
        assert!((w[3] - 0.8808).abs() < 1e-4);
        assert!((w[7] - 0.1192).abs() < 1e-4);
        assert_eq!(w.iter().filter(|&&v| v == 0.0).count(), 13);
    }

    #[test]
    fn json_and_table() {
        let t = trace_with(&[0], |_, _| 1.0);
        let r = ExplainReport::from_trace("m", &t);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["source_id"], "m");
        assert_eq!(json["weights"]["Annotation"], 1.0);
        assert_eq!(json["weights"]["Null"], 0.0);
        assert!(r.to_table().contains("Annotation"));
        assert_eq!(r.ranked()[0].0, TokenCategory::Annotation);
    }

    proptest::proptest! {
        #[test]
        fn softmax_shift_invariance_and_argmax(
            scores in proptest::array::uniform15(-5.0f64..5.0),
            present in proptest::array::uniform15(proptest::bool::ANY),
            shift in -50.0f64..50.0,
        ) {
            proptest::prop_assume!(present.iter().any(|&p| p));
            let w = softmax_present(&scores, &present);
            let shifted: [f64; NUM_CATEGORIES] = std::array::from_fn(|j| scores[j] + shift);
            let w2 = softmax_present(&shifted, &present);
            for j in 0..NUM_CATEGORIES {
                proptest::prop_assert!((w[j] - w2[j]).abs() <= 1e-9);
                if !present[j] {
                    proptest::prop_assert_eq!(w[j], 0.0);
                }
            }
            let arg = |v: &[f64; NUM_CATEGORIES]| {
                (0..NUM_CATEGORIES).filter(|&j| present[j]).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
            };
            proptest::prop_assert_eq!(arg(&w), arg(&scores));
            proptest::prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
