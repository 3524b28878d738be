use crate::error::{Error, Result};
use crate::interactions::{normalize_rating, POSITIVE_RATING};

/// `100 × mean |prediction − target|`.
pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), targets.len())?;
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(100.0 * sum / predictions.len() as f64)
}

/// F1 (percent) of "predicted normalized rating ≥ normalize(4)" against
/// "raw rating ≥ 4". Zero when there are no predicted or no true positives.
pub fn f1_at_threshold(predictions: &[f64], targets_raw: &[u8]) -> Result<f64> {
    check_lengths(predictions.len(), targets_raw.len())?;
    let threshold = normalize_rating(POSITIVE_RATING)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in predictions.iter().zip(targets_raw) {
        match (p >= threshold, t >= POSITIVE_RATING) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok(100.0 * 2.0 * precision * recall / (precision + recall))
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::Eval("metric over an empty prediction list".into()));
    }
    if a != b {
        return Err(Error::Eval(format!("{a} predictions but {b} targets")));
    }
    Ok(())
}

/// Mean and unbiased sample standard deviation; the deviation of a single
/// value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// `sqrt((s_a² + s_b²) / 2)`, the equal-size pooled standard deviation.
pub fn pooled_std(a: f64, b: f64) -> f64 {
    ((a * a + b * b) / 2.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_oracles() {
        assert_eq!(mae(&[0.3, 0.9], &[0.3, 0.9]).unwrap(), 0.0);
        assert_eq!(mae(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 50.0);
        assert!(mae(&[], &[]).is_err());
        assert!(mae(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn f1_oracles() {
        assert_eq!(f1_at_threshold(&[1.0, 0.0, 0.8], &[5, 1, 4]).unwrap(), 100.0);
        assert_eq!(f1_at_threshold(&[0.1, 0.2], &[5, 4]).unwrap(), 0.0);
        // TP = 2, FP = 1, FN = 1.
        let f1 = f1_at_threshold(&[0.9, 0.8, 0.76, 0.2], &[5, 4, 2, 4]).unwrap();
        assert!((f1 - 200.0 / 3.0).abs() < 1e-12);
        // Exactly at the threshold counts as positive.
        assert_eq!(f1_at_threshold(&[0.75], &[4]).unwrap(), 100.0);
        assert!(f1_at_threshold(&[], &[]).is_err());
    }

    #[test]
    fn spread() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(pooled_std(3.0, 4.0), 12.5f64.sqrt());
    }
}
