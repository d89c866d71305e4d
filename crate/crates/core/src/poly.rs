//! Stability of lag polynomials `1 - c_1 z - ... - c_p z^p`.

/// Largest absolute partial autocorrelation obtained by running the
/// Durbin-Levinson recursion backwards from the coefficients `c`.
///
/// All roots of `1 - sum c_j z^j` lie strictly outside the unit disk iff the
/// returned value is `< 1`. The recursion stops at the first reflection
/// coefficient with modulus `>= 1` and returns it.
pub fn max_reflection(c: &[f64]) -> f64 {
    let mut a: Vec<f64> = c.to_vec();
    while a.last() == Some(&0.0) {
        a.pop();
    }
    let mut worst = 0.0f64;
    for k in (1..=a.len()).rev() {
        let kappa = a[k - 1];
        if !kappa.is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(kappa.abs());
        if kappa.abs() >= 1.0 {
            return kappa.abs();
        }
        let denom = 1.0 - kappa * kappa;
        let prev: Vec<f64> = (1..k)
            .map(|j| (a[j - 1] + kappa * a[k - j - 1]) / denom)
            .collect();
        a = prev;
    }
    worst
}

pub fn is_stable(c: &[f64]) -> bool {
    max_reflection(c) < 1.0
}

/// Coefficients `pi_0..pi_len` of `1 / (1 - sum b_j L^j)`.
pub fn inverse_series(b: &[f64], len: usize) -> Vec<f64> {
    let mut pi = vec![0.0; len + 1];
    pi[0] = 1.0;
    for k in 1..=len {
        pi[k] = b
            .iter()
            .enumerate()
            .take(k)
            .map(|(j, bj)| bj * pi[k - j - 1])
            .sum();
    }
    pi
}
