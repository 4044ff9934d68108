use serde::Serialize;

use super::StatsError;

/// z-quantile of the 95% limits of agreement.
pub const LOA_Z: f64 = 1.96;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlandAltman {
    pub n: usize,
    /// Mean of `pred - ref`.
    pub bias: f64,
    /// Sample standard deviation of the differences.
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// Share of differences inside `[loa_low, loa_high]`.
    pub fraction_within_loa: f64,
}

pub fn bland_altman(pred: &[f64], reference: &[f64]) -> Result<BlandAltman, StatsError> {
    if pred.len() != reference.len() {
        return Err(StatsError::Input(format!("{} predictions for {} references", pred.len(), reference.len())));
    }
    let n = pred.len();
    if n < 2 {
        return Err(StatsError::SampleSize(format!("Bland–Altman needs at least 2 pairs, got {n}")));
    }
    let diffs: Vec<f64> = pred.iter().zip(reference).map(|(p, r)| p - r).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::Numeric("non-finite volume in Bland–Altman input".into()));
    }
    let bias = diffs.iter().sum::<f64>() / n as f64;
    let sd_diff = (diffs.iter().map(|d| (d - bias) * (d - bias)).sum::<f64>() / (n - 1) as f64).sqrt();
    let loa_low = bias - LOA_Z * sd_diff;
    let loa_high = bias + LOA_Z * sd_diff;
    let within = diffs.iter().filter(|&&d| d >= loa_low && d <= loa_high).count();
    Ok(BlandAltman { n, bias, sd_diff, loa_low, loa_high, fraction_within_loa: within as f64 / n as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn perfect_agreement() {
        let v = [1.5, 2.0, 10.25, 0.0];
        let b = bland_altman(&v, &v).unwrap();
        assert_eq!((b.bias, b.sd_diff, b.loa_low, b.loa_high, b.fraction_within_loa), (0.0, 0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn constant_offset() {
        let r = [1.0, 7.0, 12.0, 30.0];
        let p: Vec<f64> = r.iter().map(|x| x + 5.0).collect();
        let b = bland_altman(&p, &r).unwrap();
        assert_eq!((b.bias, b.sd_diff), (5.0, 0.0));
    }

    #[test]
    fn three_differences() {
        let b = bland_altman(&[9.0, 10.0, 11.0], &[10.0, 10.0, 10.0]).unwrap();
        assert_eq!((b.bias, b.sd_diff), (0.0, 1.0));
        assert_eq!((b.loa_low, b.loa_high), (-1.96, 1.96));
        assert_eq!(b.fraction_within_loa, 1.0);
    }

    #[test]
    fn gaussian_closure() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let r: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..100.0)).collect();
        let p: Vec<f64> = r.iter().map(|x| x + 2.0 + 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let b = bland_altman(&p, &r).unwrap();
        assert!((0.94..=0.96).contains(&b.fraction_within_loa), "{}", b.fraction_within_loa);
        assert!(b.loa_low <= b.bias && b.bias <= b.loa_high);
    }

    #[test]
    fn errors() {
        assert!(matches!(bland_altman(&[1.0], &[1.0]), Err(StatsError::SampleSize(_))));
        assert!(matches!(bland_altman(&[1.0, 2.0], &[1.0]), Err(StatsError::Input(_))));
    }
}
