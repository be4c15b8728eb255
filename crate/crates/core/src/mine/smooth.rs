use crate::error::{Error, Result};

/// Exponential moving average `e ← e + γ (x − e)`, started at the first value.
pub fn ema_smooth(series: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::InvalidParams("cannot smooth an empty series".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParams(format!("gamma must be in (0, 1], got {gamma}")));
    }
    let mut e = series[0];
    Ok(series
        .iter()
        .map(|&x| {
            e += gamma * (x - e);
            e
        })
        .collect())
}

/// Centered moving average over `window` points, truncated at the ends.
pub fn ma_smooth(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::InvalidParams("cannot smooth an empty series".into()));
    }
    if window == 0 {
        return Err(Error::InvalidParams("window must be at least 1".into()));
    }
    let (left, right) = half_widths(window);
    let mut prefix = Vec::with_capacity(series.len() + 1);
    prefix.push(0.0);
    for &x in series {
        prefix.push(prefix.last().unwrap() + x);
    }
    let n = series.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect())
}

/// Points before and after the center of a window.
pub(crate) fn half_widths(window: usize) -> (usize, usize) {
    let left = (window - 1) / 2;
    (left, window - 1 - left)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_unchanged() {
        let s = vec![0.3; 12];
        assert_eq!(ema_smooth(&s, 0.1).unwrap(), s);
        for w in [1, 2, 5, 40] {
            for (x, y) in ma_smooth(&s, w).unwrap().iter().zip(&s) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unit_gamma_is_identity() {
        let s = vec![1.0, -2.0, 5.0, 0.5];
        assert_eq!(ema_smooth(&s, 1.0).unwrap(), s);
    }

    #[test]
    fn step_response_is_geometric() {
        let gamma = 0.25;
        let mut s = vec![0.0];
        s.extend(std::iter::repeat_n(1.0, 10));
        let e = ema_smooth(&s, gamma).unwrap();
        for k in 1..=10 {
            let expected = 1.0 - (1.0 - gamma).powi(k as i32);
            assert!((e[k] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn ma_truncates_at_boundaries() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        let m = ma_smooth(&s, 3).unwrap();
        assert_eq!(m, vec![1.5, 2.0, 3.0, 4.0, 4.5]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(ema_smooth(&[], 0.1).is_err());
        assert!(ema_smooth(&[1.0], 0.0).is_err());
        assert!(ma_smooth(&[1.0], 0).is_err());
    }
}
