use serde::{Deserialize, Serialize};

/// Boundary family `u_j = C·a_j`, `l_j = C·b_j` on the information-time
/// grid `t_j`. The last analysis is efficacy-only and its `b` equals `a`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryShape {
    /// `a = (1 + t)/√t`, `b = (3t − 1)/√t`.
    #[default]
    Triangular,
    /// Flat efficacy bound, futility at zero.
    Pocock,
    /// `a = 1/√t`, futility at zero.
    #[serde(rename = "obrien-fleming")]
    OBrienFleming,
}

impl BoundaryShape {
    /// Coefficients for the analyses at information times `t` (increasing,
    /// last one 1 for a complete grid).
    pub fn coefficients(self, t: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut a = Vec::with_capacity(t.len());
        let mut b = Vec::with_capacity(t.len());
        for &tj in t {
            let s = tj.sqrt();
            let (aj, bj) = match self {
                BoundaryShape::Triangular => ((1.0 + tj) / s, (3.0 * tj - 1.0) / s),
                BoundaryShape::Pocock => (1.0, 0.0),
                BoundaryShape::OBrienFleming => (1.0 / s, 0.0),
            };
            a.push(aj);
            b.push(bj);
        }
        if let (Some(&al), Some(bl)) = (a.last(), b.last_mut()) {
            *bl = al;
        }
        (a, b)
    }

    /// Coefficients for analyses `from+1 ..= total` of a `total`-analysis grid.
    pub fn grid(self, from: usize, total: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (from + 1..=total).map(|j| j as f64 / total as f64).collect();
        self.coefficients(&t)
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryShape::Triangular => "triangular",
            BoundaryShape::Pocock => "pocock",
            BoundaryShape::OBrienFleming => "obrien-fleming",
        }
    }
}

impl std::str::FromStr for BoundaryShape {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "triangular" => Ok(BoundaryShape::Triangular),
            "pocock" => Ok(BoundaryShape::Pocock),
            "obrien-fleming" => Ok(BoundaryShape::OBrienFleming),
            other => Err(crate::Error::domain(format!(
                "unknown boundary shape `{other}` (expected triangular, pocock or obrien-fleming)"
            ))),
        }
    }
}
