use serde::{Deserialize, Serialize};

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// Binomial proportion `hits / n`.
    pub fn proportion(hits: u64, n: u64) -> Self {
        if n == 0 {
            return Estimate { value: f64::NAN, se: f64::NAN };
        }
        let p = hits as f64 / n as f64;
        Estimate { value: p, se: (p * (1.0 - p) / n as f64).sqrt() }
    }

    /// Sample mean from a running sum and sum of squares.
    pub fn mean(sum: f64, sum_sq: f64, n: u64) -> Self {
        if n == 0 {
            return Estimate { value: f64::NAN, se: f64::NAN };
        }
        let nf = n as f64;
        let m = sum / nf;
        let var = if n > 1 { ((sum_sq - nf * m * m) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Estimate { value: m, se: (var / nf).sqrt() }
    }

    pub fn within(&self, target: f64, tol: f64) -> bool {
        (self.value - target).abs() <= tol
    }
}

impl std::fmt::Display for Estimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} (se {:.4})", self.value, self.se)
    }
}
