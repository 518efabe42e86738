use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_prompts, compact_labels, PromptLabel, PromptedMask, SegmentError, Segmenter};
use super::{MaskPrompt, PointPrompt};
use crate::image::{InstanceMask, RasterError, RgbImage};
use crate::rng::stream;
use crate::scene::{CameraView, VoxelScene};
use crate::synth::{render_gt_masks, SynthError};

/// Synthetic segmentation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Probability that an instance is split in two in a given view.
    pub fragment_prob: f64,
    /// Boundary erosion radius (Chebyshev, pixels).
    pub erode_px: usize,
    /// Random per-view relabeling.
    pub permute_ids: bool,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { fragment_prob: 0.0, erode_px: 0, permute_ids: true, seed: 0 }
    }
}

impl NoiseConfig {
    /// No noise and no relabeling; output equals the gt masks up to compaction.
    pub fn clean() -> Self {
        Self { permute_ids: false, ..Self::default() }
    }
}

/// Segmenter backed by rendered ground-truth instance masks.
pub struct OracleSegmenter {
    gt_masks: Vec<InstanceMask>,
    noise: NoiseConfig,
}

impl OracleSegmenter {
    pub fn new(
        scene: &VoxelScene,
        views: &[CameraView],
        noise: NoiseConfig,
        tau_bg: f64,
    ) -> Result<Self, SegmentError> {
        let gt_masks = render_gt_masks(scene, views, tau_bg).map_err(|e| match e {
            SynthError::MissingGt => SegmentError::NoGroundTruth,
            other => SegmentError::Protocol(other.to_string()),
        })?;
        Ok(Self { gt_masks, noise })
    }

    pub fn from_masks(gt_masks: Vec<InstanceMask>, noise: NoiseConfig) -> Self {
        Self { gt_masks, noise }
    }

    pub fn gt_mask(&self, view_index: usize) -> Result<&InstanceMask, SegmentError> {
        self.gt_masks.get(view_index).ok_or(SegmentError::UnknownView(view_index))
    }

    fn checked_gt(&self, image: &RgbImage, view_index: usize) -> Result<&InstanceMask, SegmentError> {
        let gt = self.gt_mask(view_index)?;
        if gt.width != image.width || gt.height != image.height {
            return Err(RasterError::DimensionMismatch(
                image.width,
                image.height,
                gt.width,
                gt.height,
            )
            .into());
        }
        Ok(gt)
    }
}

fn erode(mask: &InstanceMask, radius: usize) -> InstanceMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width, mask.height);
    let mut out = mask.clone();
    for v in 0..h {
        for u in 0..w {
            let l = mask.get(u, v);
            if l == 0 {
                continue;
            }
            let (u0, u1) = (u.saturating_sub(radius), (u + radius).min(w - 1));
            let (v0, v1) = (v.saturating_sub(radius), (v + radius).min(h - 1));
            let edge = (v0..=v1).any(|y| (u0..=u1).any(|x| mask.get(x, y) != l));
            if edge {
                out.set(u, v, 0);
            }
        }
    }
    out
}

/// Splits selected instances by a random line through their pixel centroid.
fn fragment(mask: &InstanceMask, prob: f64, rng: &mut impl Rng) -> InstanceMask {
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in mask.labels.iter().enumerate() {
        if l != 0 {
            members.entry(l).or_default().push(i);
        }
    }
    let mut out = mask.clone();
    let mut next = members.keys().next_back().copied().unwrap_or(0) + 1;
    for (_, pixels) in members {
        let draw: f64 = rng.gen();
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        if draw >= prob || pixels.len() < 2 {
            continue;
        }
        let coords = |i: usize| ((i % mask.width) as f64, (i / mask.width) as f64);
        let n = pixels.len() as f64;
        let (cu, cv) = pixels.iter().fold((0.0, 0.0), |(a, b), &i| {
            let (u, v) = coords(i);
            (a + u / n, b + v / n)
        });
        let (nx, ny) = (angle.cos(), angle.sin());
        let proj = |i: usize| {
            let (u, v) = coords(i);
            (u - cu) * nx + (v - cv) * ny
        };
        let mut side: Vec<usize> = pixels.iter().copied().filter(|&i| proj(i) >= 0.0).collect();
        if side.is_empty() || side.len() == pixels.len() {
            // degenerate line: split at the median projection instead
            let mut sorted = pixels.clone();
            sorted.sort_by(|&a, &b| proj(a).total_cmp(&proj(b)).then(a.cmp(&b)));
            side = sorted.split_off(sorted.len() / 2);
        }
        for i in side {
            out.labels[i] = next;
        }
        next += 1;
    }
    out
}

impl Segmenter for OracleSegmenter {
    fn segment(&self, image: &RgbImage, view_index: usize) -> Result<InstanceMask, SegmentError> {
        let gt = self.checked_gt(image, view_index)?;
        let noise = &self.noise;
        let mut mask = erode(gt, noise.erode_px);
        if noise.fragment_prob > 0.0 {
            let mut rng = stream(noise.seed, &format!("segment/fragment/{view_index}"));
            mask = fragment(&mask, noise.fragment_prob, &mut rng);
        }
        let mut mask = compact_labels(&mask);
        if noise.permute_ids {
            let m = mask.label_set().len() as u32;
            let mut perm: Vec<u32> = (1..=m).collect();
            perm.shuffle(&mut stream(noise.seed, &format!("segment/permute/{view_index}")));
            for l in mask.labels.iter_mut().filter(|l| **l != 0) {
                *l = perm[*l as usize - 1];
            }
        }
        Ok(mask)
    }

    /// Returns the whole gt instance under the majority of positive points.
    /// Negative points only remove other instances, which never overlap the
    /// answer, and the mask prompt is validated but otherwise unused.
    fn segment_prompted(
        &self,
        image: &RgbImage,
        view_index: usize,
        points: &[PointPrompt],
        mask_prompt: &MaskPrompt,
    ) -> Result<PromptedMask, SegmentError> {
        let gt = self.checked_gt(image, view_index)?;
        check_prompts(gt.width, gt.height, points, mask_prompt)?;
        let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
        for p in points.iter().filter(|p| p.label == PromptLabel::Positive) {
            let l = gt.get(p.u, p.v);
            if l != 0 {
                *votes.entry(l).or_default() += 1;
            }
        }
        let winner = votes
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(&l, _)| l);
        Ok(match winner {
            Some(l) => PromptedMask { mask: gt.select(l), no_object: false },
            None => PromptedMask { mask: InstanceMask::new(gt.width, gt.height), no_object: true },
        })
    }
}
