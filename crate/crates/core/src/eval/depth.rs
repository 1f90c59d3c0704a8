//! Dense depth accuracy with optional median scale alignment.

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::render::Raster;

pub const DELTA_BASE: f64 = 1.25;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthEvalPair {
    pub pred: Raster<f64>,
    pub gt: Raster<f64>,
    pub mask: Raster<bool>,
}

impl DepthEvalPair {
    /// Mask is ground truth finite and positive.
    pub fn new(pred: Raster<f64>, gt: Raster<f64>) -> Result<Self, EvalError> {
        let mask = gt.map(|&d| d.is_finite() && d > 0.0);
        Self::with_mask(pred, gt, mask)
    }

    pub fn with_mask(pred: Raster<f64>, gt: Raster<f64>, mask: Raster<bool>) -> Result<Self, EvalError> {
        if pred.dims() != gt.dims() || mask.dims() != gt.dims() {
            return Err(EvalError::DimensionMismatch(format!(
                "pred {:?}, gt {:?}, mask {:?}",
                pred.dims(),
                gt.dims(),
                mask.dims()
            )));
        }
        if !mask.data.iter().any(|&m| m) {
            return Err(EvalError::EmptyMask);
        }
        Ok(Self { pred, gt, mask })
    }

    fn masked(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.pred
            .data
            .iter()
            .zip(&self.gt.data)
            .zip(&self.mask.data)
            .filter(|(_, &m)| m)
            .map(|((&p, &g), _)| (p, g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub l1: f64,
    pub abs_rel: f64,
    pub rmse: f64,
    /// Percent of pixels within 1.25, 1.25², 1.25³.
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub pixels: usize,
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let (_, &mut hi, _) = values.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        return Some(hi);
    }
    let lo = values[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((lo + hi) / 2.0)
}

/// Scales `pred` by median(gt)/median(pred) over the mask. Returns the
/// aligned map and the factor.
pub fn median_scale_align(pred: &Raster<f64>, gt: &Raster<f64>, mask: &Raster<bool>) -> Result<(Raster<f64>, f64), EvalError> {
    let pair = DepthEvalPair::with_mask(pred.clone(), gt.clone(), mask.clone())?;
    let (mut p, mut g): (Vec<f64>, Vec<f64>) = pair.masked().unzip();
    let mp = median(&mut p).ok_or(EvalError::EmptyMask)?;
    let mg = median(&mut g).ok_or(EvalError::EmptyMask)?;
    if !(mp > 0.0) {
        return Err(EvalError::NonPositiveMedian(mp));
    }
    if !(mg > 0.0) {
        return Err(EvalError::NonPositiveMedian(mg));
    }
    let s = mg / mp;
    Ok((pred.map(|&d| d * s), s))
}

pub fn depth_metrics(pair: &DepthEvalPair) -> DepthMetrics {
    let (mut l1, mut rel, mut sq) = (0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    let mut n = 0usize;
    for (p, g) in pair.masked() {
        let e = p - g;
        l1 += e.abs();
        rel += e.abs() / g;
        sq += e * e;
        let ratio = (p / g).max(g / p);
        for (k, w) in within.iter_mut().enumerate() {
            *w += (ratio < DELTA_BASE.powi(k as i32 + 1)) as usize;
        }
        n += 1;
    }
    let nf = n as f64;
    DepthMetrics {
        l1: l1 / nf,
        abs_rel: rel / nf,
        rmse: (sq / nf).sqrt(),
        delta1: 100.0 * within[0] as f64 / nf,
        delta2: 100.0 * within[1] as f64 / nf,
        delta3: 100.0 * within[2] as f64 / nf,
        pixels: n,
    }
}

/// Metrics over the union of the pixels behind each entry.
pub fn pool_depth_metrics(parts: &[DepthMetrics]) -> Option<DepthMetrics> {
    let n: usize = parts.iter().map(|m| m.pixels).sum();
    if n == 0 {
        return None;
    }
    let mean = |f: fn(&DepthMetrics) -> f64| parts.iter().map(|m| f(m) * m.pixels as f64).sum::<f64>() / n as f64;
    Some(DepthMetrics {
        l1: mean(|m| m.l1),
        abs_rel: mean(|m| m.abs_rel),
        rmse: mean(|m| m.rmse * m.rmse).sqrt(),
        delta1: mean(|m| m.delta1),
        delta2: mean(|m| m.delta2),
        delta3: mean(|m| m.delta3),
        pixels: n,
    })
}

pub fn format_depth_table(name: &str, m: &DepthMetrics) -> String {
    format!(
        "{:<16} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n{:<16} {:>10.5} {:>10.4} {:>10.5} {:>10.2} {:>10.2} {:>10.2}\n",
        "Method", "L1", "AbsRel", "RMSE", "δ<1.25", "δ<1.25²", "δ<1.25³", name, m.l1, m.abs_rel, m.rmse, m.delta1, m.delta2, m.delta3
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Raster<f64> {
        Raster::from_vec(w, h, (0..w * h).map(|i| 0.01 + 0.001 * i as f64).collect()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gt = ramp(4, 3);
        let m = depth_metrics(&DepthEvalPair::new(gt.clone(), gt).unwrap());
        assert_eq!((m.l1, m.abs_rel, m.rmse), (0.0, 0.0, 0.0));
        assert_eq!((m.delta1, m.delta2, m.delta3), (100.0, 100.0, 100.0));
    }

    #[test]
    fn uniform_overshoot() {
        let gt = ramp(4, 3);
        let m = depth_metrics(&DepthEvalPair::new(gt.map(|d| 1.3 * d), gt).unwrap());
        assert!((m.abs_rel - 0.3).abs() < 1e-12);
        assert_eq!((m.delta1, m.delta2, m.delta3), (0.0, 100.0, 100.0));
    }

    #[test]
    fn alignment_removes_scale() {
        let gt = ramp(5, 5);
        let mask = gt.map(|_| true);
        let (aligned, s) = median_scale_align(&gt.map(|d| 2.0 * d), &gt, &mask).unwrap();
        assert_eq!(s, 0.5);
        assert_eq!(aligned, gt);
        assert_eq!(median_scale_align(&gt, &gt, &mask).unwrap().1, 1.0);
        let zero = gt.map(|_| 0.0);
        assert!(matches!(median_scale_align(&zero, &gt, &mask), Err(EvalError::NonPositiveMedian(_))));
    }

    #[test]
    fn invalid_gt_is_masked_and_empty_mask_rejected() {
        let mut gt = ramp(3, 1);
        gt.set(1, 0, f64::INFINITY);
        let pair = DepthEvalPair::new(gt.map(|d| if d.is_finite() { *d } else { 1.0 }), gt).unwrap();
        assert_eq!(depth_metrics(&pair).pixels, 2);
        let none = Raster::filled(2, 2, 0.0);
        assert!(matches!(DepthEvalPair::new(none.clone(), none), Err(EvalError::EmptyMask)));
    }

    #[test]
    fn pooling_matches_concatenation() {
        let gt = ramp(4, 2);
        let pred = gt.map(|d| d * 1.1 + 0.001);
        let whole = depth_metrics(&DepthEvalPair::new(pred.clone(), gt.clone()).unwrap());
        let half = |r: &Raster<f64>, lo: usize| Raster::from_vec(4, 1, r.data[lo..lo + 4].to_vec()).unwrap();
        let a = depth_metrics(&DepthEvalPair::new(half(&pred, 0), half(&gt, 0)).unwrap());
        let b = depth_metrics(&DepthEvalPair::new(half(&pred, 4), half(&gt, 4)).unwrap());
        let pooled = pool_depth_metrics(&[a, b]).unwrap();
        assert_eq!(pooled.pixels, 8);
        assert!((pooled.l1 - whole.l1).abs() < 1e-15);
        assert!((pooled.rmse - whole.rmse).abs() < 1e-15);
        assert!((pooled.abs_rel - whole.abs_rel).abs() < 1e-15);
        assert!(pool_depth_metrics(&[]).is_none());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
