use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictEntry {
    pub centroid: [f64; 3],
    /// Accumulated pixel count behind the centroid.
    pub support: f64,
}

/// Registry of group centroids plus the alias table written by merges.
///
/// Aliased entries keep their own centroid so that voxels voting for them
/// still land on them in the nearest-centroid search; [`resolve`] then maps
/// the result onto the surviving group.
///
/// [`resolve`]: GroupDictionary::resolve
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDictionary {
    pub entries: BTreeMap<u32, DictEntry>,
    pub aliases: BTreeMap<u32, u32>,
    pub next_id: u32,
}

impl Default for GroupDictionary {
    fn default() -> Self {
        Self { entries: BTreeMap::new(), aliases: BTreeMap::new(), next_id: 1 }
    }
}

impl GroupDictionary {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Follows the alias chain to the surviving id.
    pub fn resolve(&self, mut id: u32) -> u32 {
        while let Some(&next) = self.aliases.get(&id) {
            id = next;
        }
        id
    }

    /// Ids that are not aliased to another group.
    pub fn live_ids(&self) -> Vec<u32> {
        self.entries.keys().copied().filter(|id| !self.aliases.contains_key(id)).collect()
    }

    pub fn centroid(&self, id: u32) -> Option<Vec3> {
        self.entries.get(&id).map(|e| Vec3::from(e.centroid))
    }

    pub fn allocate(&mut self) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn insert(&mut self, id: u32, centroid: Vec3, support: f64) {
        self.next_id = self.next_id.max(id + 1);
        self.entries.insert(id, DictEntry { centroid: centroid.into(), support });
    }

    /// Support-weighted running mean of the entry's centroid.
    pub fn observe(&mut self, id: u32, centroid: Vec3, support: f64) {
        let id = self.resolve(id);
        match self.entries.get_mut(&id) {
            Some(e) => {
                let total = e.support + support;
                let mean = (Vec3::from(e.centroid) * e.support + centroid * support) / total;
                e.centroid = mean.into();
                e.support = total;
            }
            None => self.insert(id, centroid, support),
        }
    }

    /// Aliases `from` onto `into`; the survivor's centroid becomes the
    /// support-weighted mean of both.
    pub fn merge(&mut self, from: u32, into: u32) {
        let (from, into) = (self.resolve(from), self.resolve(into));
        if from == into {
            return;
        }
        let (Some(a), Some(b)) = (self.entries.get(&from).copied(), self.entries.get(&into).copied()) else {
            return;
        };
        let total = a.support + b.support;
        let mean = (Vec3::from(a.centroid) * a.support + Vec3::from(b.centroid) * b.support) / total;
        let e = self.entries.get_mut(&into).expect("checked above");
        e.centroid = mean.into();
        e.support = total;
        self.aliases.insert(from, into);
    }
}
