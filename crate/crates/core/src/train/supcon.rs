//! Supervised contrastive loss over L2-normalized vectors.

use ndarray::{Array2, ArrayView2, Axis};

use super::TrainError;

#[derive(Debug, Clone)]
pub struct SupConOutput {
    /// Sum over anchors that have at least one positive.
    pub loss: f64,
    /// dloss/dz with respect to the raw (unnormalized) inputs.
    pub grad: Array2<f64>,
    /// Number of anchors that contributed.
    pub anchors: usize,
}

/// Rows of `z` are raw vectors; they are normalized inside. A zero row has
/// zero normalized vector and receives zero gradient.
pub fn supcon_loss<L: PartialEq>(z: ArrayView2<f64>, labels: &[L], temperature: f64) -> Result<SupConOutput, TrainError> {
    let n = z.nrows();
    if labels.len() != n {
        return Err(TrainError::ShapeMismatch(format!("{} vectors but {} labels", n, labels.len())));
    }
    let norms: Vec<f64> = z.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut zhat = z.to_owned();
    for (mut row, &r) in zhat.rows_mut().into_iter().zip(&norms) {
        if r > 0.0 {
            row /= r;
        } else {
            row.fill(0.0);
        }
    }
    let sim = zhat.dot(&zhat.t()) / temperature;

    // g[i][j] = dL/dsim[i][j]
    let mut g = Array2::<f64>::zeros((n, n));
    let mut loss = 0.0;
    let mut anchors = 0;
    for i in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect();
        if positives.is_empty() {
            continue;
        }
        anchors += 1;
        let row = sim.row(i);
        let max = (0..n).filter(|&a| a != i).map(|a| row[a]).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..n).filter(|&a| a != i).map(|a| (row[a] - max).exp()).sum();
        let lse = max + denom.ln();
        let inv_p = 1.0 / positives.len() as f64;
        loss += lse - positives.iter().map(|&p| row[p]).sum::<f64>() * inv_p;
        for a in 0..n {
            if a != i {
                g[[i, a]] = (row[a] - lse).exp();
            }
        }
        for &p in &positives {
            g[[i, p]] -= inv_p;
        }
    }
    if anchors == 0 {
        return Err(TrainError::DegenerateBatch("no anchor has a positive".into()));
    }

    let sym = (&g + &g.t()) / temperature;
    let dzhat = sym.dot(&zhat);
    let mut grad = Array2::<f64>::zeros(z.raw_dim());
    for k in 0..n {
        if norms[k] == 0.0 {
            continue;
        }
        let zk = zhat.row(k);
        let dk = dzhat.row(k);
        let proj = zk.dot(&dk);
        let mut out = grad.row_mut(k);
        out.assign(&((&dk - &(&zk * proj)) / norms[k]));
    }
    debug_assert_eq!(grad.len_of(Axis(0)), n);
    Ok(SupConOutput { loss, grad, anchors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_identical_positives_have_zero_loss() {
        let z = array![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let out = supcon_loss(z.view(), &[7, 7], 0.07).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.anchors, 2);
    }

    #[test]
    fn all_distinct_labels_is_degenerate() {
        let z = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert!(matches!(supcon_loss(z.view(), &[0, 1, 2], 0.07), Err(TrainError::DegenerateBatch(_))));
    }

    #[test]
    fn scale_invariant_and_nonnegative() {
        let z = array![[0.3, -1.0, 2.0], [0.1, 0.4, -0.2], [1.5, 0.2, 0.3], [-0.7, 0.9, 0.1]];
        let labels = [0, 0, 1, 1];
        let a = supcon_loss(z.view(), &labels, 0.07).unwrap();
        let b = supcon_loss((&z * 3.0).view(), &labels, 0.07).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
        assert!(a.loss >= 0.0);
        // gradient of a scale-invariant loss is orthogonal to each row
        for (g, r) in a.grad.rows().into_iter().zip(z.rows()) {
            assert!(g.dot(&r).abs() < 1e-10);
        }
    }
}
