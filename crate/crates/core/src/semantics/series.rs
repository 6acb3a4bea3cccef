//! One-variable power series with nonnegative coefficients summing to at
//! most 1, i.e. sub-probabilistic maps from [0, 1] to [0, 1].

use super::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SeriesError {
    #[error("coefficient {index} is {value}, expected a finite nonnegative number")]
    Coefficient { index: usize, value: f64 },
    #[error("coefficients sum to {0}, above 1")]
    Mass(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries1 {
    coeffs: Vec<f64>,
}

impl PowerSeries1 {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, SeriesError> {
        if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, c)| !c.is_finite() || **c < 0.0) {
            return Err(SeriesError::Coefficient { index, value });
        }
        let mass: f64 = coeffs.iter().sum();
        if mass > 1.0 + 1e-12 {
            return Err(SeriesError::Mass(mass));
        }
        Ok(PowerSeries1 { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn mass(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    /// Random series with at most `max_degree + 1` coefficients, rescaled
    /// to a total mass drawn uniformly from [0, 1].
    pub fn random(rng: &mut impl rand::Rng, max_degree: usize) -> Self {
        let d = rng.random_range(0..=max_degree);
        let raw: Vec<f64> = (0..=d).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mass = rng.random::<f64>();
        let coeffs = if total > 0.0 { raw.iter().map(|c| c / total * mass).collect() } else { raw };
        PowerSeries1::new(coeffs).expect("rescaled coefficients have mass at most 1")
    }
}

/// `Σ c_n x^n` by Horner's rule.
pub fn eval_series(s: &PowerSeries1, x: f64) -> f64 {
    s.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `Σ c_n x^n` over any scalar; with a dual argument the tangent is the
/// directional derivative.
pub fn eval_series_scalar<S: Scalar>(s: &PowerSeries1, x: &S) -> S {
    s.coeffs.iter().rev().fold(S::zero(), |acc, c| acc.mul(x).add(&S::from_f64(*c)))
}

/// `Σ (n+1) c_{n+1} x^n`.
pub fn deriv_series(s: &PowerSeries1, x: f64) -> f64 {
    s.coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (n, c)| acc * x + n as f64 * c)
}

/// The first `terms` nonzero Taylor coefficients of `1 − sqrt(1 − u²)`,
/// the solution of `φ = u²/2 + φ²/2`.
pub fn phi_half_prefix(terms: usize) -> PowerSeries1 {
    let mut coeffs = vec![0.0; 2 * terms + 1];
    let mut c = 0.5;
    for k in 1..=terms {
        coeffs[2 * k] = c;
        c *= (2 * k - 1) as f64 / (2 * (k + 1)) as f64;
    }
    PowerSeries1::new(coeffs).expect("prefix of a sub-probability series")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(c: &[f64]) -> PowerSeries1 {
        PowerSeries1::new(c.to_vec()).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(eval_series(&ps(&[0.0, 0.0, 1.0]), 0.5), 0.25);
        assert_eq!(eval_series(&ps(&[1.0]), 0.37), 1.0);
        assert_eq!(deriv_series(&ps(&[0.0, 0.0, 1.0]), 0.5), 1.0);
        assert_eq!(deriv_series(&ps(&[0.4]), 0.9), 0.0);
        assert_eq!(deriv_series(&ps(&[0.0, 0.5, 0.5]), 1.0), 1.5);
    }

    #[test]
    fn validation() {
        assert!(PowerSeries1::new(vec![0.6, 0.6]).is_err());
        assert!(PowerSeries1::new(vec![-0.1]).is_err());
        assert!(PowerSeries1::new(vec![]).is_ok());
    }

    #[test]
    fn phi_half_prefix_approaches_one_from_below() {
        let mut last = 0.0;
        for terms in [1, 10, 100, 1000, 10000] {
            let v = eval_series(&phi_half_prefix(terms), 1.0);
            assert!(v < 1.0 && v > last);
            last = v;
        }
        assert!(last > 0.99);
        let s = phi_half_prefix(3);
        assert_eq!(&s.coeffs()[..7], &[0.0, 0.0, 0.5, 0.0, 0.125, 0.0, 0.0625]);
    }
}
