//! Per-pixel spectral interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spectral::{HsiCube, SpectralBandSet};

/// Sample points of one spectrum curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSamples {
    wavelengths_nm: Vec<f64>,
    values: Vec<f64>,
}

impl SpectrumSamples {
    pub fn new(wavelengths_nm: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if wavelengths_nm.len() < 2 {
            return invalid(format!("need at least 2 samples, got {}", wavelengths_nm.len()));
        }
        if wavelengths_nm.len() != values.len() {
            return invalid("wavelength and value counts differ");
        }
        if wavelengths_nm.iter().chain(&values).any(|v| !v.is_finite()) {
            return invalid("samples must be finite");
        }
        if let Some(w) = wavelengths_nm.windows(2).find(|w| w[1] <= w[0]) {
            return invalid(format!("wavelengths must be strictly increasing: {} then {}", w[0], w[1]));
        }
        Ok(SpectrumSamples { wavelengths_nm, values })
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpMethod {
    Linear,
    Cubic,
}

impl std::str::FromStr for InterpMethod {
    type Err = crate::MlsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(InterpMethod::Linear),
            "cubic" => Ok(InterpMethod::Cubic),
            _ => invalid(format!("unknown interpolation method {s:?}")),
        }
    }
}

/// Interval index for `q`, with the end intervals extended outwards.
fn interval(knots: &[f64], q: f64) -> usize {
    knots.partition_point(|&k| k <= q).saturating_sub(1).min(knots.len() - 2)
}

/// Piecewise-linear evaluation; end segments extend beyond the knots.
pub fn interp_linear(s: &SpectrumSamples, query_nm: &[f64]) -> Vec<f64> {
    let (x, y) = (&s.wavelengths_nm, &s.values);
    query_nm
        .iter()
        .map(|&q| {
            let i = interval(x, q);
            if q == x[i] {
                return y[i];
            }
            let t = (q - x[i]) / (x[i + 1] - x[i]);
            y[i] + t * (y[i + 1] - y[i])
        })
        .collect()
}

/// Cubic pieces `a + b t + c t^2 + d t^3`, `t = x - knot[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSplineCoefficients {
    pub knots: Vec<f64>,
    pub coeffs: Vec<[f64; 4]>,
}

/// Dense Gaussian elimination with partial pivoting; `a` is n x n row-major.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs())).unwrap();
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let s: f64 = (col + 1..n).map(|k| a[col * n + k] * b[k]).sum();
        b[col] = (b[col] - s) / a[col * n + col];
    }
    b
}

impl CubicSplineCoefficients {
    /// Not-a-knot spline for 4 or more samples. Three samples give the
    /// interpolating parabola and two the straight line.
    pub fn fit(s: &SpectrumSamples) -> Self {
        let (x, y) = (&s.wavelengths_nm, &s.values);
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        // Second derivatives at the knots.
        let m: Vec<f64> = match n {
            2 => vec![0.0; 2],
            3 => vec![2.0 * (delta[1] - delta[0]) / (x[2] - x[0]); 3],
            _ => {
                let mut a = vec![0.0; n * n];
                let mut rhs = vec![0.0; n];
                a[0] = h[1];
                a[1] = -(h[0] + h[1]);
                a[2] = h[0];
                for i in 1..n - 1 {
                    a[i * n + i - 1] = h[i - 1];
                    a[i * n + i] = 2.0 * (h[i - 1] + h[i]);
                    a[i * n + i + 1] = h[i];
                    rhs[i] = 6.0 * (delta[i] - delta[i - 1]);
                }
                let last = (n - 1) * n;
                a[last + n - 3] = h[n - 2];
                a[last + n - 2] = -(h[n - 3] + h[n - 2]);
                a[last + n - 1] = h[n - 3];
                solve_dense(a, rhs)
            }
        };
        let coeffs = (0..n - 1)
            .map(|i| {
                let b = delta[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
                [y[i], b, m[i] / 2.0, (m[i + 1] - m[i]) / (6.0 * h[i])]
            })
            .collect();
        CubicSplineCoefficients { knots: x.clone(), coeffs }
    }

    /// Value, first and second derivative; outside the knots the end pieces extend.
    pub fn eval_with_derivatives(&self, q: f64) -> (f64, f64, f64) {
        let i = interval(&self.knots, q);
        let [a, b, c, d] = self.coeffs[i];
        let t = q - self.knots[i];
        (a + t * (b + t * (c + t * d)), b + t * (2.0 * c + 3.0 * t * d), 2.0 * c + 6.0 * t * d)
    }

    pub fn eval(&self, q: f64) -> f64 {
        let i = interval(&self.knots, q);
        if q == self.knots[i] {
            return self.coeffs[i][0];
        }
        let [a, b, c, d] = self.coeffs[i];
        let t = q - self.knots[i];
        a + t * (b + t * (c + t * d))
    }
}

pub fn interp_cubic(s: &SpectrumSamples, query_nm: &[f64]) -> Vec<f64> {
    let spline = CubicSplineCoefficients::fit(s);
    query_nm.iter().map(|&q| spline.eval(q)).collect()
}

pub fn interp(method: InterpMethod, s: &SpectrumSamples, query_nm: &[f64]) -> Vec<f64> {
    match method {
        InterpMethod::Linear => interp_linear(s, query_nm),
        InterpMethod::Cubic => interp_cubic(s, query_nm),
    }
}

/// Resamples every pixel's spectrum onto `target` wavelengths and clamps to [0, 1].
pub fn spectral_resample_cube(cube: &HsiCube, target: &SpectralBandSet, method: InterpMethod) -> Result<HsiCube> {
    let src = cube.bands().wavelengths();
    let dst = target.wavelengths();
    let mut data = Vec::with_capacity(cube.height() * cube.width() * dst.len());
    for px in cube.data().chunks(cube.n_bands()) {
        let s = SpectrumSamples::new(src.clone(), px.iter().map(|&v| v as f64).collect())?;
        for v in interp(method, &s, &dst) {
            data.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    HsiCube::new(cube.height(), cube.width(), target.clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_hand_values() {
        let s = SpectrumSamples::new(vec![0.0, 10.0], vec![0.0, 10.0]).unwrap();
        assert_eq!(interp_linear(&s, &[5.0, 15.0, 0.0, 10.0, -3.0]), vec![5.0, 15.0, 0.0, 10.0, -3.0]);
        assert!(SpectrumSamples::new(vec![1.0], vec![1.0]).is_err());
        assert!(SpectrumSamples::new(vec![1.0, 1.0, 2.0], vec![0.0; 3]).is_err());
    }

    #[test]
    fn small_sample_counts_degrade() {
        let q = [0.5, 1.5, 3.0];
        let two = SpectrumSamples::new(vec![0.0, 2.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(interp_cubic(&two, &q), interp_linear(&two, &q));
        let three = SpectrumSamples::new(vec![0.0, 1.0, 3.0], vec![0.0, 1.0, 9.0]).unwrap();
        for (v, &x) in interp_cubic(&three, &q).iter().zip(&q) {
            assert!((v - x * x).abs() < 1e-12);
        }
    }
}
