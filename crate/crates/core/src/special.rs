//! Scalar special functions that the rest of the crate needs in log space.

use statrs::function::erf;

/// Natural log of the standard normal CDF, accurate over the whole real line.
///
/// `Phi(z)` underflows to zero near `z = -38`, so a naive `ln(cdf(z))` returns
/// `-inf` long before the log itself leaves double range. For moderately
/// negative arguments `erfc` still carries the value; far in the left tail the
/// classic asymptotic expansion takes over:
///
/// ```text
///   ln Phi(z) = -z^2/2 - ln(-z) - ln(2 pi)/2
///             + ln(1 - z^-2 + 3 z^-4 - 15 z^-6 + 105 z^-8 + ...)
/// ```
pub fn ln_normal_cdf(z: f64) -> f64 {
    const SQRT_2: f64 = std::f64::consts::SQRT_2;
    if z > -30.0 {
        // erfc(-z/sqrt(2)) keeps full precision down to z ~ -30 and only
        // underflows near z ~ -38.
        (0.5 * erf::erfc(-z / SQRT_2)).ln()
    } else {
        let r2 = 1.0 / (z * z);
        let series = 1.0 - r2 * (1.0 - 3.0 * r2 * (1.0 - 5.0 * r2 * (1.0 - 7.0 * r2)));
        -0.5 * z * z - (-z).ln() - 0.5 * crate::LN_2PI + series.ln()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}
