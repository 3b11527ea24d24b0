use std::collections::BTreeMap;

/// Empirical CDF: values sorted ascending, the i-th (1-based) paired with
/// `i / N`.
pub fn aggregate_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, x)| (x, (i + 1) as f64 / n))
        .collect()
}

/// Smallest sample whose empirical CDF reaches `q` (ceiling rule).
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    Some(v[idx])
}

/// Normalized histogram of active F-AP counts.
pub fn active_fap_histogram(counts: &[usize]) -> BTreeMap<usize, f64> {
    let mut h = BTreeMap::new();
    for &c in counts {
        *h.entry(c).or_insert(0usize) += 1;
    }
    let n = counts.len() as f64;
    h.into_iter().map(|(c, m)| (c, m as f64 / n)).collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for fewer than two samples.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_single() {
        assert_eq!(aggregate_cdf(&[5.0]), vec![(5.0, 1.0)]);
    }

    #[test]
    fn cdf_sorted_with_k_over_n() {
        let c = aggregate_cdf(&[3.0, 1.0, 2.0, 4.0]);
        assert_eq!(c, vec![(1.0, 0.25), (2.0, 0.5), (3.0, 0.75), (4.0, 1.0)]);
    }

    #[test]
    fn percentile_uses_ceiling() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.8), Some(4.0));
        assert_eq!(percentile(&v, 0.5), Some(2.0));
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 1.0), Some(4.0));
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn histogram_all_four() {
        let h = active_fap_histogram(&[4; 7]);
        assert_eq!(h.into_iter().collect::<Vec<_>>(), vec![(4, 1.0)]);
    }

    #[test]
    fn histogram_sums_to_one() {
        let h = active_fap_histogram(&[1, 2, 2, 3, 3, 3, 7]);
        let s: f64 = h.values().sum();
        assert!((s - 1.0).abs() <= 1e-12);
        assert_eq!(h[&3], 3.0 / 7.0);
    }
}
