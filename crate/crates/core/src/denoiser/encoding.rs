use crate::error::{Error, Result};

/// Interleaved sin/cos embedding of a scalar (noise level or spatial
/// resolution) over geometrically spaced frequencies.
///
/// Pair `j` uses frequency `max_period^(−j/(half−1))`, so the first pair
/// has frequency 1 and the last pair has period `2π·max_period`. Output
/// layout is `[sin f₀v, cos f₀v, sin f₁v, cos f₁v, …]`.
pub fn sinusoidal_encode(value: f64, dim: usize, max_period: f64) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "encoding dimension must be even and positive, got {dim}"
        )));
    }
    if !(max_period > 0.0 && max_period.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "max_period must be positive, got {max_period}"
        )));
    }
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for j in 0..half {
        let exponent = if half > 1 {
            j as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let freq = max_period.powf(-exponent);
        let (s, c) = (value * freq).sin_cos();
        out.push(s);
        out.push(c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_value() {
        assert_eq!(sinusoidal_encode(0.0, 4, 10_000.0).unwrap(), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn odd_dim_rejected() {
        assert!(sinusoidal_encode(1.0, 3, 100.0).is_err());
        assert!(sinusoidal_encode(1.0, 0, 100.0).is_err());
    }

    #[test]
    fn lowest_frequency_pair_is_periodic() {
        let max_period = 150.0;
        let dim = 8;
        let v = 0.37;
        let a = sinusoidal_encode(v, dim, max_period).unwrap();
        let b = sinusoidal_encode(v + 2.0 * std::f64::consts::PI * max_period, dim, max_period)
            .unwrap();
        assert!((a[dim - 2] - b[dim - 2]).abs() < 1e-9);
        assert!((a[dim - 1] - b[dim - 1]).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn bounded(v in -1e4f64..1e4, half in 1usize..32, period in 1.0f64..1e4) {
            let e = sinusoidal_encode(v, 2 * half, period).unwrap();
            prop_assert_eq!(e.len(), 2 * half);
            prop_assert!(e.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }
}
