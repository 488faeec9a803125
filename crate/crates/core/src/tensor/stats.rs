use crate::error::{Error, Result};

/// `p`-quantile with linear interpolation between order statistics.
///
/// With `h = p * (n - 1)` the result is `x[floor h] + (h - floor h) * (x[ceil h] - x[floor h])`
/// over the ascending order. Runs in linear time via selection.
pub fn quantile(values: &[f32], p: f64) -> Result<f32> {
    check("quantile", values, p)?;
    let mut buf = values.to_vec();
    let (lo_idx, frac) = position(buf.len(), p);
    let (_, lo, upper) = buf.select_nth_unstable_by(lo_idx, f32::total_cmp);
    let lo = *lo;
    if frac == 0.0 || upper.is_empty() {
        return Ok(lo);
    }
    let hi = upper.iter().copied().fold(f32::INFINITY, f32::min);
    Ok(interpolate(lo, hi, frac))
}

/// Same convention as [`quantile`] on an already ascending slice.
pub fn quantile_sorted(sorted: &[f32], p: f64) -> Result<f32> {
    check("quantile_sorted", sorted, p)?;
    let (lo_idx, frac) = position(sorted.len(), p);
    let lo = sorted[lo_idx];
    if frac == 0.0 || lo_idx + 1 >= sorted.len() {
        return Ok(lo);
    }
    Ok(interpolate(lo, sorted[lo_idx + 1], frac))
}

fn check(op: &'static str, values: &[f32], p: f64) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty { op });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(op, format!("p = {p} not in [0, 1]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(op, "non-finite value"));
    }
    Ok(())
}

fn position(n: usize, p: f64) -> (usize, f64) {
    let h = p * (n - 1) as f64;
    let lo = (h.floor() as usize).min(n - 1);
    (lo, h - lo as f64)
}

fn interpolate(lo: f32, hi: f32, frac: f64) -> f32 {
    (lo as f64 + frac * (hi as f64 - lo as f64)) as f32
}
