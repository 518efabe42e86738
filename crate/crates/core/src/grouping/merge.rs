use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::GroupingConfig;
use crate::image::{InstanceMask, RgbImage};
use crate::rng::stream;
use crate::segmenter::{MaskPrompt, PointPrompt, PromptLabel, SegmentError, Segmenter};
use crate::segmenter::{MASK_NEGATIVE, MASK_POSITIVE};

struct Projection {
    pixels: Vec<usize>,
    center: usize,
}

fn projections(m_proj: &InstanceMask) -> BTreeMap<u32, Projection> {
    let mut pixels: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (p, &l) in m_proj.labels.iter().enumerate() {
        if l != 0 {
            pixels.entry(l).or_default().push(p);
        }
    }
    let w = m_proj.width;
    pixels
        .into_iter()
        .map(|(id, px)| {
            let n = px.len() as f64;
            let (cu, cv) = px.iter().fold((0.0, 0.0), |(a, b), &p| (a + (p % w) as f64 / n, b + (p / w) as f64 / n));
            let dist = |p: usize| ((p % w) as f64 - cu).powi(2) + ((p / w) as f64 - cv).powi(2);
            let center = *px.iter().min_by(|&&a, &&b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b))).expect("non-empty");
            (id, Projection { pixels: px, center })
        })
        .collect()
}

fn pixel_distance(w: usize, a: usize, b: usize) -> f64 {
    let du = (a % w) as f64 - (b % w) as f64;
    let dv = (a / w) as f64 - (b / w) as f64;
    du * du + dv * dv
}

/// Point and mask prompts for one projected group: positives sampled
/// uniformly from its projection, negatives at the center pixels of the
/// nearest other groups.
pub fn build_prompts(
    m_proj: &InstanceMask,
    group: u32,
    config: &GroupingConfig,
    view_index: usize,
) -> Option<(Vec<PointPrompt>, MaskPrompt)> {
    let projs = projections(m_proj);
    prompts_for(m_proj, &projs, group, config, view_index)
}

fn prompts_for(
    m_proj: &InstanceMask,
    projs: &BTreeMap<u32, Projection>,
    group: u32,
    config: &GroupingConfig,
    view_index: usize,
) -> Option<(Vec<PointPrompt>, MaskPrompt)> {
    let w = m_proj.width;
    let own = projs.get(&group)?;
    let mut rng = stream(config.seed, &format!("grouping/merge/{view_index}/{group}"));
    let at = |p: usize, label| PointPrompt { u: p % w, v: p / w, label };
    let mut points: Vec<PointPrompt> = own
        .pixels
        .choose_multiple(&mut rng, config.positive_prompts.max(1))
        .map(|&p| at(p, PromptLabel::Positive))
        .collect();
    let mut others: Vec<(f64, u32, usize)> = projs
        .iter()
        .filter(|(&id, _)| id != group)
        .map(|(&id, p)| (pixel_distance(w, own.center, p.center), id, p.center))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    points.extend(others.iter().take(config.negative_prompts).map(|&(_, _, p)| at(p, PromptLabel::Negative)));
    let values = m_proj
        .labels
        .iter()
        .map(|&l| match l {
            0 => 0,
            l if l == group => MASK_POSITIVE,
            _ => MASK_NEGATIVE,
        })
        .collect();
    Some((points, MaskPrompt { width: w, height: m_proj.height, values }))
}

/// Re-prompts every projected group and proposes `(from, into)` merges.
///
/// Group `a` is folded together with `b` when at least
/// `containment_merge_threshold` of `a`'s prompted mask lies inside `b`'s
/// projection or `b`'s own prompted mask. Within each connected set the
/// group with the largest projection survives (ties to the smaller id).
pub fn propose_merges(
    m_proj: &InstanceMask,
    image: &RgbImage,
    view_index: usize,
    segmenter: &dyn Segmenter,
    config: &GroupingConfig,
) -> Result<Vec<(u32, u32)>, SegmentError> {
    let projs = projections(m_proj);
    let mut prompted: BTreeMap<u32, InstanceMask> = BTreeMap::new();
    for &id in projs.keys() {
        let Some((points, mask_prompt)) = prompts_for(m_proj, &projs, id, config, view_index) else { continue };
        let out = segmenter.segment_prompted(image, view_index, &points, &mask_prompt)?;
        if !out.no_object {
            prompted.insert(id, out.mask);
        }
    }

    let ids: Vec<u32> = projs.keys().copied().collect();
    let mut parent: BTreeMap<u32, u32> = ids.iter().map(|&i| (i, i)).collect();
    fn find(parent: &mut BTreeMap<u32, u32>, mut x: u32) -> u32 {
        while parent[&x] != x {
            let up = parent[&parent[&x]];
            parent.insert(x, up);
            x = up;
        }
        x
    }
    for (&a, out_a) in &prompted {
        let size_a = out_a.foreground_count();
        if size_a == 0 {
            continue;
        }
        for &b in &ids {
            if a == b {
                continue;
            }
            let out_b = prompted.get(&b);
            let inside = out_a
                .labels
                .iter()
                .enumerate()
                .filter(|&(p, &l)| l != 0 && (m_proj.labels[p] == b || out_b.is_some_and(|m| m.labels[p] != 0)))
                .count();
            if inside as f64 >= config.containment_merge_threshold * size_a as f64 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent.insert(ra.max(rb), ra.min(rb));
                }
            }
        }
    }

    let mut components: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &id in &ids {
        let root = find(&mut parent, id);
        components.entry(root).or_default().push(id);
    }
    let mut merges = Vec::new();
    for members in components.into_values().filter(|m| m.len() > 1) {
        let survivor = *members
            .iter()
            .max_by(|a, b| projs[a].pixels.len().cmp(&projs[b].pixels.len()).then(b.cmp(a)))
            .expect("non-empty");
        merges.extend(members.into_iter().filter(|&m| m != survivor).map(|m| (m, survivor)));
    }
    Ok(merges)
}
