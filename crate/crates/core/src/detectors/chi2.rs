use statrs::distribution::{ChiSquared, ContinuousCDF};

/// `p`-quantile of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_quantile(dof: usize, p: f64) -> f64 {
    ChiSquared::new(dof as f64).expect("positive degrees of freedom").inverse_cdf(p)
}

pub fn chi2_cdf(dof: usize, x: f64) -> f64 {
    ChiSquared::new(dof as f64).expect("positive degrees of freedom").cdf(x)
}
