//! Numerical helpers shared by the planners, likelihoods and fitters.

use crate::{Error, Result};

/// `log Σ exp(x_i)` with max-subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Writes `log softmax(xs)` into `out`.
pub fn log_softmax_into(xs: &[f64], out: &mut [f64]) {
    // Shift by the max first so that ties stay exact ties at large scale.
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let lse = log_sum_exp(xs);
        for (o, &x) in out.iter_mut().zip(xs) {
            *o = x - lse;
        }
        return;
    }
    let log_z = xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = (x - max) - log_z;
    }
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| (x - lse).exp()).collect()
}

/// `log σ(x) = -log(1 + e^{-x})`, stable for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    log_sigmoid(x).exp()
}

/// Shannon entropy (nats) of a probability vector, with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| -w * w.ln())
        .sum()
}

/// Entropy of the distribution proportional to `exp(log_w)`.
pub fn entropy_of_log_weights(log_w: &[f64]) -> f64 {
    let lse = log_sum_exp(log_w);
    log_w
        .iter()
        .map(|&l| {
            let lp = l - lse;
            if lp == f64::NEG_INFINITY {
                0.0
            } else {
                -lp.exp() * lp
            }
        })
        .sum()
}

pub fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn sem(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// `n` log-spaced points covering `[low, high]` inclusive.
pub fn log_space(low: f64, high: f64, n: usize) -> Vec<f64> {
    assert!(low > 0.0 && high > low && n >= 2);
    let (a, b) = (low.ln(), high.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                high
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// One-dimensional maximizer over a positive scalar: a log-spaced grid scan
/// locates the best bracket, then golden-section search refines inside it
/// (in log space).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarSearch {
    pub low: f64,
    pub high: f64,
    pub grid_points: usize,
    /// Stop refining once the bracket is this narrow in log space.
    pub log_tolerance: f64,
}

impl Default for ScalarSearch {
    fn default() -> Self {
        Self {
            low: 1e-3,
            high: 1e3,
            grid_points: 61,
            log_tolerance: 1e-11,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchResult {
    pub argmax: f64,
    pub value: f64,
    pub at_boundary: bool,
}

impl ScalarSearch {
    pub fn maximize<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<SearchResult> {
        if !(self.low > 0.0 && self.high > self.low && self.grid_points >= 3) {
            return Err(Error::InvalidParameter(format!(
                "search range [{}, {}] with {} points",
                self.low, self.high, self.grid_points
            )));
        }
        let grid = log_space(self.low, self.high, self.grid_points);
        let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("objective returned NaN".into()));
        }
        let (best, best_val) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let worst = values.iter().copied().fold(f64::INFINITY, f64::min);
        if !best_val.is_finite() || best_val - worst <= 1e-12 * best_val.abs().max(1.0) {
            return Err(Error::FlatObjective);
        }

        let lo = grid[best.saturating_sub(1)].ln();
        let hi = grid[(best + 1).min(grid.len() - 1)].ln();
        let (mut x, mut v) = golden_section(|u| f(u.exp()), lo, hi, self.log_tolerance);
        if best_val > v {
            x = grid[best].ln();
            v = best_val;
        }
        let mut argmax = x.exp().clamp(self.low, self.high);
        let at_low = (argmax / self.low).ln().abs() < 1e-6;
        let at_high = (argmax / self.high).ln().abs() < 1e-6;
        if at_low {
            argmax = self.low;
        } else if at_high {
            argmax = self.high;
        }
        let at_boundary = at_low || at_high;
        Ok(SearchResult {
            argmax,
            value: v,
            at_boundary,
        })
    }
}

/// Golden-section maximization of a unimodal `f` on `[a, b]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    [(c, fc), (d, fd), (mid, fm)]
        .into_iter()
        .fold((mid, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_sum_exp_is_stable() {
        assert_abs_diff_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_abs_diff_eq!(log_sum_exp(&[-1e4, 0.0]), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn log_sigmoid_matches_direct_form() {
        for &x in &[-30.0, -2.0, 0.0, 0.5, 3.0, 40.0] {
            let direct: f64 = 1.0 / (1.0 + (-x as f64).exp());
            assert_abs_diff_eq!(log_sigmoid(x), direct.ln(), epsilon = 1e-12);
        }
        assert!(log_sigmoid(-1e5).is_finite());
    }

    #[test]
    fn entropy_edge_cases() {
        assert_abs_diff_eq!(entropy(&[0.5, 0.5, 0.0]), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
        assert_abs_diff_eq!(
            entropy_of_log_weights(&[0.0, 0.0, f64::NEG_INFINITY]),
            2f64.ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn search_finds_interior_optimum() {
        let r = ScalarSearch::default()
            .maximize(|b| -(b.ln() - 2.0f64.ln()).powi(2))
            .unwrap();
        assert_abs_diff_eq!(r.argmax, 2.0, epsilon = 1e-8);
        assert!(!r.at_boundary);
    }

    #[test]
    fn search_flags_boundaries_and_flat_objectives() {
        let up = ScalarSearch::default().maximize(|b| b).unwrap();
        assert!(up.at_boundary);
        assert_abs_diff_eq!(up.argmax, 1e3, epsilon = 1e-6);
        let down = ScalarSearch::default().maximize(|b| -b).unwrap();
        assert!(down.at_boundary);
        assert!(matches!(
            ScalarSearch::default().maximize(|_| 3.0),
            Err(Error::FlatObjective)
        ));
    }
}
