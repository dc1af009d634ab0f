/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`. Sorts both
/// inputs in place.
pub fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "empty sample");
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample critical value at significance `alpha`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_disjoint() {
        let mut a = vec![1.0, 2.0, 3.0];
        let mut b = a.clone();
        assert_eq!(ks_statistic(&mut a, &mut b), 0.0);
        let mut c = vec![10.0, 11.0];
        assert_eq!(ks_statistic(&mut a, &mut c), 1.0);
    }

    #[test]
    fn hand_computed() {
        // F_a jumps at 1,2,3,4; F_b at 2.5, 5: max gap 1 - 0.5 at x = 4.
        let mut a = vec![4.0, 1.0, 3.0, 2.0];
        let mut b = vec![5.0, 2.5];
        assert_eq!(ks_statistic(&mut a, &mut b), 0.5);
    }

    #[test]
    fn critical_value_at_one_percent() {
        assert!((ks_critical(0.01, 1, 1) / 2f64.sqrt() - 1.627_62).abs() < 1e-5);
    }
}
