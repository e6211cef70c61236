use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

/// `P[X ≥ successes]` for `X ~ Binomial(trials, p)`.
pub fn binomial_upper_tail(successes: u64, trials: u64, p: f64) -> f64 {
    if successes == 0 {
        return 1.0;
    }
    if successes > trials {
        return 0.0;
    }
    let dist = Binomial::new(p, trials).expect("p in [0, 1]");
    dist.sf(successes - 1)
}

/// Exact (Clopper–Pearson) two-sided 95% interval.
pub fn clopper_pearson(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (successes as f64, trials as f64);
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0)
            .expect("positive shapes")
            .inverse_cdf(0.025)
    };
    let upper = if successes == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .expect("positive shapes")
            .inverse_cdf(0.975)
    };
    (lower, upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub trials: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub ci95: (f64, f64),
    /// One-sided exact binomial p-value against the chance rate.
    pub p_value: f64,
}

impl Tally {
    pub fn new(correct: usize, trials: usize, chance: f64) -> Self {
        Self {
            trials,
            correct,
            accuracy: if trials == 0 {
                0.0
            } else {
                correct as f64 / trials as f64
            },
            ci95: clopper_pearson(correct as u64, trials as u64),
            p_value: binomial_upper_tail(correct as u64, trials as u64, chance),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn upper_tail_matches_direct_sum() {
        let (n, p) = (20u64, 0.25f64);
        for k in 0..=n {
            let direct: f64 = (k..=n)
                .map(|j| choose(n, j) * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32))
                .sum();
            assert!((binomial_upper_tail(k, n, p) - direct).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn clopper_pearson_edges_and_coverage() {
        assert_eq!(clopper_pearson(0, 10).0, 0.0);
        assert_eq!(clopper_pearson(10, 10).1, 1.0);
        // Closed form at k = 0: upper = 1 - 0.025^(1/n).
        let (_, up) = clopper_pearson(0, 10);
        assert!((up - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
        let (lo, up) = clopper_pearson(30, 100);
        assert!(lo < 0.3 && 0.3 < up);
        // Endpoints are where the tails equal 2.5%.
        assert!((binomial_upper_tail(30, 100, lo) - 0.025).abs() < 1e-6);
    }
}
