use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParameterStore};

/// Outcome of a finite-difference probe run.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Coordinates actually compared.
    pub probes: usize,
    /// Coordinates rejected because the loss had a kink within `±h`.
    pub skipped_kinks: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Relative error used by the gradient check.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient already stored in `store`'s grad buffers
/// against central differences of `loss_fn` on `probe_count` random coordinates.
///
/// Returns the maximum relative error over the probed coordinates.
pub fn finite_diff_check<F>(loss_fn: F, store: &mut ParameterStore, probe_count: usize, h: f64) -> f64
where
    F: FnMut(&ParameterStore) -> f64,
{
    finite_diff_report(loss_fn, store, None, probe_count, h, 0x5eed).max_relative_error
}

/// Like [`finite_diff_check`], optionally restricted to a subset of parameters,
/// returning the detailed report.
///
/// Coordinates where the one-sided differences disagree sharply (a ReLU or
/// clamp kink inside `±h`) are redrawn, up to ten redraws per requested probe.
pub fn finite_diff_report<F>(
    mut loss_fn: F,
    store: &mut ParameterStore,
    only: Option<&[ParamId]>,
    probe_count: usize,
    h: f64,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&ParameterStore) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let candidates: Vec<ParamId> = match only {
        Some(ids) => ids.to_vec(),
        None => store.ids().collect(),
    };
    let sizes: Vec<usize> = candidates.iter().map(|&id| store.value(id).len()).collect();
    let total: usize = sizes.iter().sum();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        probes: 0,
        skipped_kinks: 0,
        worst: None,
    };
    if total == 0 {
        return report;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = loss_fn(store);
    let mut attempts = 0;
    while report.probes < probe_count && attempts < probe_count * 10 {
        attempts += 1;
        let mut flat = rng.gen_range(0..total);
        let mut which = 0;
        while flat >= sizes[which] {
            flat -= sizes[which];
            which += 1;
        }
        let id = candidates[which];
        let analytic = store.grad(id).data()[flat];
        let orig = store.value(id).data()[flat];

        store.value_mut(id).data_mut()[flat] = orig + h;
        let plus = loss_fn(store);
        store.value_mut(id).data_mut()[flat] = orig - h;
        let minus = loss_fn(store);
        store.value_mut(id).data_mut()[flat] = orig;

        let forward = (plus - base) / h;
        let backward = (base - minus) / h;
        let numeric = (plus - minus) / (2.0 * h);
        if (forward - backward).abs() > 1e-3 * numeric.abs().max(1.0) {
            report.skipped_kinks += 1;
            continue;
        }
        let err = relative_error(analytic, numeric);
        report.probes += 1;
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = Some((store.name(id).to_owned(), flat));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor2;

    fn half_norm_sq(s: &ParameterStore) -> f64 {
        0.5 * s.sum_squares()
    }

    #[test]
    fn half_squared_norm_passes() {
        let mut s = ParameterStore::new();
        let id = s
            .insert("x", Tensor2::from_rows(&[vec![0.3, -1.7, 2.5], vec![4.0, -0.01, 0.9]]).unwrap())
            .unwrap();
        let x = s.value(id).clone();
        *s.grad_mut(id) = x;
        let err = finite_diff_check(half_norm_sq, &mut s, 6, 1e-5);
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut s = ParameterStore::new();
        let id = s.insert("x", Tensor2::filled(1, 3, 1.0)).unwrap();
        s.grad_mut(id).fill(2.0);
        let err = finite_diff_check(half_norm_sq, &mut s, 3, 1e-5);
        assert!(err > 0.3);
    }

    #[test]
    fn kinks_are_skipped() {
        // |x| at x = 0 has no derivative; the probe must be redrawn, not scored.
        let mut s = ParameterStore::new();
        let id = s.insert("x", Tensor2::zeros(1, 1)).unwrap();
        let r = finite_diff_report(|s| s.value(id).get(0, 0).abs(), &mut s, None, 1, 1e-5, 1);
        assert_eq!(r.probes, 0);
        assert!(r.skipped_kinks > 0);
    }

    #[test]
    fn values_are_restored() {
        let mut s = ParameterStore::new();
        let id = s.insert("x", Tensor2::filled(2, 2, 0.5)).unwrap();
        let before = s.value(id).clone();
        finite_diff_check(half_norm_sq, &mut s, 4, 1e-4);
        assert_eq!(s.value(id), &before);
    }
}
