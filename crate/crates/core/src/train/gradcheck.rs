//! Central-difference gradient checks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Parameters;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradFailure {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub failures: Vec<GradFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.failures.extend(other.failures);
    }
}

/// |analytic − numeric| / max(1, |analytic|)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Compare `analytic[i]` with the central difference of `f` at `x` for
/// every `i` in `coords`.
pub fn check_coords(x: &[f64], analytic: &[f64], coords: &[usize], tol: f64, mut f: impl FnMut(&[f64]) -> f64) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    let mut xp = x.to_vec();
    for &i in coords {
        let orig = xp[i];
        xp[i] = orig + FD_STEP;
        let up = f(&xp);
        xp[i] = orig - FD_STEP;
        let down = f(&xp);
        xp[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let rel = relative_error(analytic[i], numeric);
        report.checked += 1;
        report.max_rel_error = report.max_rel_error.max(rel);
        if !(rel < tol) {
            report.failures.push(GradFailure {
                index: i,
                analytic: analytic[i],
                numeric,
                rel_error: rel,
            });
        }
    }
    report
}

/// Check every coordinate of a flat function.
pub fn check_all(x: &[f64], analytic: &[f64], tol: f64, f: impl FnMut(&[f64]) -> f64) -> GradCheckReport {
    let coords: Vec<usize> = (0..x.len()).collect();
    check_coords(x, analytic, &coords, tol, f)
}

/// Gradient check over model parameters. `loss_and_grad` returns the loss
/// and a gradient of the same type as the params. At most `per_tensor`
/// seeded-random coordinates are sampled from each tensor.
pub fn grad_check<P, F>(params: &P, tol: f64, per_tensor: usize, seed: u64, loss_and_grad: F) -> GradCheckReport
where
    P: Parameters + Clone,
    F: Fn(&P) -> (f64, P),
{
    let (_, grad) = loss_and_grad(params);
    let analytic = grad.flatten();
    let x = params.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::new();
    let mut off = 0;
    for s in params.slices() {
        let n = s.len();
        let k = per_tensor.min(n);
        let mut picked: Vec<usize> = sample(&mut rng, n, k).into_iter().map(|i| off + i).collect();
        picked.sort_unstable();
        coords.extend(picked);
        off += n;
    }
    let mut probe = params.clone();
    check_coords(&x, &analytic, &coords, tol, |xp| {
        probe.assign_flat(xp);
        loss_and_grad(&probe).0
    })
}
