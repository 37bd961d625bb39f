//! Compensated summation and small statistical helpers.
//!
//! Monte Carlo estimates in this crate are always reduced sequentially with
//! Neumaier's compensated summation, so a result depends only on the sample
//! values and their indices, never on thread scheduling.

/// Neumaier variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sample mean and standard error of the mean.
///
/// Returns `(0.0, 0.0)` for an empty slice and stderr `0.0` for one sample.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Weighted least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the intercept, scaled by the residual chi-square
    /// so that model misfit widens the reported uncertainty.
    pub intercept_stderr: f64,
    pub slope_stderr: f64,
    /// Root-mean-square of the weighted residuals.
    pub residual_rms: f64,
}

/// Fit a line by weighted least squares with per-point uncertainties `sigma`.
///
/// Returns `None` when fewer than two points are given or the design is
/// degenerate. Parameter uncertainties are rescaled by the reduced
/// chi-square (conservative when the linear model is only approximate).
pub fn weighted_linear_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n || sigma.len() != n {
        return None;
    }
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let sw = compensated_sum(w.iter().copied());
    let swx = compensated_sum(w.iter().zip(x).map(|(w, x)| w * x));
    let swxx = compensated_sum(w.iter().zip(x).map(|(w, x)| w * x * x));
    let swy = compensated_sum(w.iter().zip(y).map(|(w, y)| w * y));
    let swxy = compensated_sum(w.iter().zip(x.iter().zip(y)).map(|(w, (x, y))| w * x * y));
    let det = sw * swxx - swx * swx;
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    let intercept = (swxx * swy - swx * swxy) / det;
    let slope = (sw * swxy - swx * swy) / det;
    let chi2 = compensated_sum(
        w.iter()
            .zip(x.iter().zip(y))
            .map(|(w, (x, y))| {
                let r = y - intercept - slope * x;
                w * r * r
            }),
    );
    let dof = n.saturating_sub(2);
    let scale = if dof > 0 { chi2 / dof as f64 } else { 1.0 };
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    Some(LinearFit {
        intercept,
        slope,
        intercept_stderr: (scale * swxx / det).sqrt(),
        slope_stderr: (scale * sw / det).sqrt(),
        residual_rms: (chi2 / n as f64).sqrt(),
    })
}

/// Euclidean norm of a slice.
#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Squared Euclidean norm.
#[inline]
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>()
}

/// Dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}
