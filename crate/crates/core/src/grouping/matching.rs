use std::collections::{BTreeMap, BTreeSet};

use crate::image::{InstanceMask, RasterError};

/// Outcome of matching one view's masks against the projected grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatch {
    /// New-mask label → group id (matched or fresh).
    pub mapping: BTreeMap<u32, u32>,
    /// New labels that received fresh ids.
    pub fresh: BTreeSet<u32>,
    /// `m_new` with labels replaced by group ids.
    pub relabeled: InstanceMask,
    /// Id counter after allocating fresh ids.
    pub next_id: u32,
}

/// Greedy highest-IoU matching. Projected groups are visited from largest
/// to smallest; each claims the unclaimed new label with the highest IoU if
/// that IoU reaches `iou_threshold`. Unclaimed new labels get fresh ids from
/// `next_id` in ascending label order.
pub fn match_masks(
    m_proj: &InstanceMask,
    m_new: &InstanceMask,
    iou_threshold: f64,
    next_id: u32,
) -> Result<MaskMatch, RasterError> {
    m_proj.check_shape(m_new)?;
    let mut proj_size: BTreeMap<u32, usize> = BTreeMap::new();
    let mut new_size: BTreeMap<u32, usize> = BTreeMap::new();
    let mut overlap: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (&e, &n) in m_proj.labels.iter().zip(&m_new.labels) {
        if e != 0 {
            *proj_size.entry(e).or_default() += 1;
        }
        if n != 0 {
            *new_size.entry(n).or_default() += 1;
        }
        if e != 0 && n != 0 {
            *overlap.entry((e, n)).or_default() += 1;
        }
    }
    let mut order: Vec<(u32, usize)> = proj_size.iter().map(|(&e, &s)| (e, s)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut mapping = BTreeMap::new();
    for (e, e_size) in order {
        let mut best: Option<(f64, u32)> = None;
        for (&(pe, n), &inter) in overlap.range((e, 0)..=(e, u32::MAX)) {
            debug_assert_eq!(pe, e);
            if mapping.contains_key(&n) {
                continue;
            }
            let iou = inter as f64 / (e_size + new_size[&n] - inter) as f64;
            if best.map_or(true, |(b, _)| iou > b) {
                best = Some((iou, n));
            }
        }
        if let Some((iou, n)) = best {
            if iou >= iou_threshold {
                mapping.insert(n, e);
            }
        }
    }
    let mut next = next_id;
    let mut fresh = BTreeSet::new();
    for &n in new_size.keys() {
        if !mapping.contains_key(&n) {
            mapping.insert(n, next);
            fresh.insert(n);
            next += 1;
        }
    }
    let labels = m_new.labels.iter().map(|&n| if n == 0 { 0 } else { mapping[&n] }).collect();
    Ok(MaskMatch {
        mapping,
        fresh,
        relabeled: InstanceMask { width: m_new.width, height: m_new.height, labels },
        next_id: next,
    })
}
