use crate::{Error, Result};

/// Decay rate `κ` of `normX(t) ≈ C e^{−κt}` over the last `window_fraction`
/// of the time span, by least squares on `log normX`. Positive means decay.
pub fn fit_decay(times: &[f64], norm_x: &[f64], window_fraction: f64) -> Result<f64> {
    if times.len() != norm_x.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            got: norm_x.len(),
        });
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Fit(format!(
            "window fraction {window_fraction} must lie in (0, 1]"
        )));
    }
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(Error::Fit("empty series".into()));
    };
    let start = last - window_fraction * (last - first);
    let window: Vec<(f64, f64)> = times
        .iter()
        .zip(norm_x)
        .filter(|(t, _)| **t >= start - 1e-12)
        .map(|(&t, &n)| (t, n))
        .collect();
    if window.len() < 10 {
        return Err(Error::Fit(format!(
            "{} samples in the fit window, need at least 10",
            window.len()
        )));
    }
    if let Some((t, n)) = window.iter().find(|(_, n)| !(*n > 0.0) || !n.is_finite()) {
        return Err(Error::Fit(format!(
            "norm {n} at t = {t} is not positive and finite"
        )));
    }
    let count = window.len() as f64;
    let mean_t = window.iter().map(|(t, _)| t).sum::<f64>() / count;
    let mean_y = window.iter().map(|(_, n)| n.ln()).sum::<f64>() / count;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, n) in &window {
        sxy += (t - mean_t) * (n.ln() - mean_y);
        sxx += (t - mean_t).powi(2);
    }
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_exponentials() {
        let t: Vec<f64> = (0..300).map(|i| i as f64 * 0.1).collect();
        let a: Vec<f64> = t.iter().map(|t| (-0.5 * t).exp()).collect();
        assert!((fit_decay(&t, &a, 1.0 / 3.0).unwrap() - 0.5).abs() < 1e-12);
        let b: Vec<f64> = t.iter().map(|t| 3.0 * (-0.2 * t).exp()).collect();
        assert!((fit_decay(&t, &b, 1.0 / 3.0).unwrap() - 0.2).abs() < 1e-12);
        let c: Vec<f64> = t.iter().map(|t| (0.317 * t).exp()).collect();
        assert!((fit_decay(&t, &c, 0.5).unwrap() + 0.317).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_or_non_positive_series() {
        let t: Vec<f64> = (0..12).map(f64::from).collect();
        assert!(fit_decay(&t, &[1.0; 12], 0.25).is_err());
        let mut n = vec![1.0; 12];
        n[11] = 0.0;
        assert!(fit_decay(&t, &n, 1.0).is_err());
    }
}
