use crate::error::{Error, Result};

/// Population mean and standard deviation; `(NaN, NaN)` for no values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `out[i]` is the mean of `series[i..i + window]`.
pub fn running_average(series: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || series.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(series.len() - window + 1);
    let mut sum: f64 = series[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..series.len() {
        sum += series[i] - series[i - window];
        out.push(sum / window as f64);
    }
    out
}

/// First index whose running average, and the `window - 1` running
/// averages after it, all lie within `tolerance * |level|` of the final
/// running average `level`. Returns `series.len()` when no index qualifies.
pub fn convergence_step(series: &[f64], window: usize, tolerance: f64) -> Result<usize> {
    if window == 0 {
        return Err(Error::invalid("convergence window must be positive"));
    }
    if series.len() < 2 * window {
        return Err(Error::invalid(format!(
            "series of {} points is shorter than twice the window ({window})",
            series.len()
        )));
    }
    // Exact sums keep constant series exactly constant.
    let ra: Vec<f64> = (0..=series.len() - window)
        .map(|i| series[i..i + window].iter().sum::<f64>() / window as f64)
        .collect();
    let level = *ra.last().expect("non-empty");
    let band = tolerance * level.abs() + 1e-12;
    let within: Vec<bool> = ra.iter().map(|v| (v - level).abs() <= band).collect();
    let mut run = 0;
    // Scan backwards counting consecutive in-band points.
    let mut first = None;
    for i in (0..within.len()).rev() {
        run = if within[i] { run + 1 } else { 0 };
        if run >= window {
            first = Some(i);
        }
    }
    Ok(first.unwrap_or(series.len()))
}

/// Mean of the series from `start`, or of the last `window` points when
/// `start` leaves fewer than that.
pub fn average_after(series: &[f64], start: usize, window: usize) -> f64 {
    let from = start.min(series.len().saturating_sub(window.max(1)));
    mean_std(&series[from..]).0
}

/// Fractional reduction from `baseline` to `shaped`.
pub fn ratio_reduction(baseline: f64, shaped: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::invalid(format!(
            "baseline ratio must be positive to measure a reduction, got {baseline}"
        )));
    }
    Ok((baseline - shaped) / baseline)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties; `None` when a
/// side is constant or lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}
