use std::collections::BTreeMap;

use super::EvalError;
use crate::image::InstanceMask;

fn check(a: &InstanceMask, b: &InstanceMask) -> Result<(), EvalError> {
    a.check_shape(b).map_err(|_| EvalError::ShapeMismatch)
}

fn counts(a: impl Iterator<Item = (bool, bool)>) -> (usize, usize) {
    a.fold((0, 0), |(i, u), (x, y)| (i + usize::from(x && y), u + usize::from(x || y)))
}

/// IoU of the non-zero pixels; two empty masks score 1.
pub fn iou(a: &InstanceMask, b: &InstanceMask) -> Result<f64, EvalError> {
    check(a, b)?;
    let (inter, union) = counts(a.labels.iter().zip(&b.labels).map(|(&x, &y)| (x != 0, y != 0)));
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Default boundary width: 2% of the image diagonal, rounded up.
pub fn default_boundary_width(width: usize, height: usize) -> usize {
    (0.02 * ((width * width + height * height) as f64).sqrt()).ceil() as usize
}

/// `ok[i]` is true when `line[i - d ..= i + d]` lies inside the line and is
/// entirely set.
fn erode_line(line: &[bool], d: usize) -> Vec<bool> {
    let n = line.len();
    let mut prefix = vec![0usize; n + 1];
    for (i, &x) in line.iter().enumerate() {
        prefix[i + 1] = prefix[i] + usize::from(x);
    }
    (0..n)
        .map(|i| i >= d && i + d < n && prefix[i + d + 1] - prefix[i - d] == 2 * d + 1)
        .collect()
}

/// Mask pixels within Chebyshev distance `d` of a non-mask pixel, pixels
/// outside the image counting as non-mask.
pub fn boundary_band(mask: &InstanceMask, d: usize) -> Vec<bool> {
    let (w, h) = (mask.width, mask.height);
    let fg: Vec<bool> = mask.labels.iter().map(|&l| l != 0).collect();
    let mut rows = vec![false; w * h];
    for v in 0..h {
        let eroded = erode_line(&fg[v * w..(v + 1) * w], d);
        rows[v * w..(v + 1) * w].copy_from_slice(&eroded);
    }
    let mut eroded = vec![false; w * h];
    for u in 0..w {
        let col: Vec<bool> = (0..h).map(|v| rows[v * w + u]).collect();
        for (v, x) in erode_line(&col, d).into_iter().enumerate() {
            eroded[v * w + u] = x;
        }
    }
    fg.iter().zip(eroded).map(|(&f, e)| f && !e).collect()
}

/// IoU of the two masks' boundary bands of width `d`; two empty bands
/// score 1.
pub fn boundary_iou(a: &InstanceMask, b: &InstanceMask, d: usize) -> Result<f64, EvalError> {
    check(a, b)?;
    let (ba, bb) = (boundary_band(a, d), boundary_band(b, d));
    let (inter, union) = counts(ba.into_iter().zip(bb));
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index over the positions where both labelings are
/// non-zero. Degenerate cases where both partitions are trivial in the
/// same way score 1.
pub fn adjusted_rand_index(pred: &[u32], gt: &[u32]) -> Result<f64, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    let mut table: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut rows: BTreeMap<u32, u64> = BTreeMap::new();
    let mut cols: BTreeMap<u32, u64> = BTreeMap::new();
    let mut n = 0u64;
    for (&p, &g) in pred.iter().zip(gt) {
        if p == 0 || g == 0 {
            continue;
        }
        *table.entry((p, g)).or_default() += 1;
        *rows.entry(p).or_default() += 1;
        *cols.entry(g).or_default() += 1;
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::EmptyEvaluationSet);
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = 0.5 * (a + b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
