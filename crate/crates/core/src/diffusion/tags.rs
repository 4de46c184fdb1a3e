use fixedbitset::FixedBitSet;

use crate::sps::AggregateSums;

/// Set of contributing node ids.
pub type Tag = FixedBitSet;

pub fn one_hot_tag(n: usize, i: usize) -> Tag {
    let mut t = FixedBitSet::with_capacity(n);
    t.insert(i);
    t
}

pub fn full_tag(n: usize) -> Tag {
    let mut t = FixedBitSet::with_capacity(n);
    t.insert_range(..);
    t
}

/// A tagged aggregate payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub tag: Tag,
    pub payload: AggregateSums,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagRow {
    pub tag: Tag,
    pub payload: AggregateSums,
    pub merged: bool,
}

/// Which rows a node combines into an outgoing message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergePolicy {
    /// Start from the first never-merged row and merge every disjoint row,
    /// marking all merged rows. Yields nothing if every row is merged.
    Aggregate,
    /// Greedy disjoint merge over all rows from the first one, ignoring and
    /// leaving the merged flags.
    Complete,
}

/// Ordered table of tagged sums held by one node. Row 0 is the owner's own
/// data and no two rows share a tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TagTable {
    owner: usize,
    n: usize,
    rows: Vec<TagRow>,
}

impl TagTable {
    pub fn new(owner: usize, n: usize, local: AggregateSums) -> Self {
        Self {
            owner,
            n,
            rows: vec![TagRow {
                tag: one_hot_tag(n, owner),
                payload: local,
                merged: false,
            }],
        }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[TagRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends a row verbatim. Used to build tables for inspection; the
    /// protocol itself only grows tables through [`TagTable::distill`].
    pub fn push_row(&mut self, tag: Tag, payload: AggregateSums) -> bool {
        if tag.is_clear() || self.rows.iter().any(|r| r.tag == tag) {
            return false;
        }
        self.rows.push(TagRow {
            tag,
            payload,
            merged: false,
        });
        true
    }

    /// Dense `rows x N` 0/1 matrix.
    pub fn tag_matrix(&self) -> Vec<Vec<u8>> {
        self.rows
            .iter()
            .map(|r| (0..self.n).map(|i| r.tag.contains(i) as u8).collect())
            .collect()
    }

    /// Union of all stored tags.
    pub fn known(&self) -> Tag {
        let mut k = FixedBitSet::with_capacity(self.n);
        for r in &self.rows {
            k.union_with(&r.tag);
        }
        k
    }

    /// Strips from `incoming` every stored row whose tag is contained in
    /// what remains, in insertion order, and stores the residual unless it
    /// is empty or already present. Returns whether a row was added.
    pub fn distill(&mut self, incoming: &Message) -> bool {
        let mut tag = incoming.tag.clone();
        let mut payload = incoming.payload.clone();
        for row in &self.rows {
            if row.tag.is_subset(&tag) {
                tag.difference_with(&row.tag);
                payload -= &row.payload;
                if tag.is_clear() {
                    return false;
                }
            }
        }
        if self.rows.iter().any(|r| r.tag == tag) {
            return false;
        }
        self.rows.push(TagRow {
            tag,
            payload,
            merged: false,
        });
        true
    }

    /// Builds an outgoing message under `policy`; see [`MergePolicy`].
    pub fn merge(&mut self, policy: MergePolicy) -> Option<Message> {
        let start = match policy {
            MergePolicy::Aggregate => self.rows.iter().position(|r| !r.merged)?,
            MergePolicy::Complete => 0,
        };
        let mark = policy == MergePolicy::Aggregate;
        let mut tag = self.rows[start].tag.clone();
        let mut payload = self.rows[start].payload.clone();
        if mark {
            self.rows[start].merged = true;
        }
        for (r, row) in self.rows.iter_mut().enumerate() {
            if r != start && row.tag.is_disjoint(&tag) {
                tag.union_with(&row.tag);
                payload += &row.payload;
                if mark {
                    row.merged = true;
                }
            }
        }
        Some(Message { tag, payload })
    }

    /// Indices of the rows a complete merge would combine.
    pub fn greedy_cover(&self) -> (Vec<usize>, Tag) {
        let mut tag = FixedBitSet::with_capacity(self.n);
        let mut used = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            if row.tag.is_disjoint(&tag) {
                tag.union_with(&row.tag);
                used.push(r);
            }
        }
        (used, tag)
    }

    pub fn local_message(&self) -> Message {
        Message {
            tag: self.rows[0].tag.clone(),
            payload: self.rows[0].payload.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Payload encoding a tag: entry `i - 1` of the first vector is 1 for
    /// every tagged node `i`.
    fn payload(n: usize, ids: &[usize]) -> AggregateSums {
        let mut data = vec![0.0; 2 * (n + n * n)];
        for &i in ids {
            data[i - 1] = 1.0;
        }
        AggregateSums::from_raw(n, 2, data).unwrap()
    }

    fn tag(n: usize, ids: &[usize]) -> Tag {
        let mut t = FixedBitSet::with_capacity(n);
        for &i in ids {
            t.insert(i - 1);
        }
        t
    }

    fn msg(n: usize, ids: &[usize]) -> Message {
        Message {
            tag: tag(n, ids),
            payload: payload(n, ids),
        }
    }

    fn ids(t: &Tag) -> Vec<usize> {
        t.ones().map(|i| i + 1).collect()
    }

    #[test]
    fn distillation_strips_known_subsets() {
        let n = 12;
        let mut t = TagTable::new(0, n, payload(n, &[1]));
        assert!(t.distill(&msg(n, &[2, 7])));
        assert!(t.distill(&msg(n, &[1, 2, 7, 8, 11])));
        let last = t.rows().last().unwrap();
        assert_eq!(ids(&last.tag), vec![8, 11]);
        assert_eq!(last.payload, payload(n, &[8, 11]));
        assert!(!t.distill(&msg(n, &[8, 11])));
        assert!(!t.distill(&msg(n, &[1, 2, 7])));
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn partial_overlap_is_stored_verbatim() {
        let n = 6;
        let mut t = TagTable::new(2, n, payload(n, &[3]));
        t.distill(&msg(n, &[3, 5]));
        assert!(t.distill(&msg(n, &[4, 5])));
        assert_eq!(ids(&t.rows()[1].tag), vec![5]);
        assert_eq!(ids(&t.rows()[2].tag), vec![4]);
        let mut u = TagTable::new(0, n, payload(n, &[1]));
        u.push_row(tag(n, &[3, 5]), payload(n, &[3, 5]));
        assert!(u.distill(&msg(n, &[3, 4])));
        assert_eq!(ids(&u.rows()[2].tag), vec![3, 4]);
        assert_eq!(u.rows()[2].payload, payload(n, &[3, 4]));
    }

    /// The walk-through table: rows 1..5 are disjoint, row 6 overlaps on 7.
    fn walkthrough() -> TagTable {
        let n = 8;
        let mut t = TagTable::new(0, n, payload(n, &[1]));
        for r in [&[2][..], &[3, 4], &[6, 7], &[5], &[7, 8]] {
            t.push_row(tag(n, r), payload(n, r));
        }
        t
    }

    #[test]
    fn aggregation_follows_never_merged_rows() {
        let mut t = walkthrough();
        let first = t.merge(MergePolicy::Aggregate).unwrap();
        assert_eq!(ids(&first.tag), vec![1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(first.payload, payload(8, &[1, 2, 3, 4, 5, 6, 7]));
        assert!(t.rows()[..5].iter().all(|r| r.merged));
        assert!(!t.rows()[5].merged);
        let second = t.merge(MergePolicy::Aggregate).unwrap();
        assert_eq!(ids(&second.tag), vec![1, 2, 3, 4, 5, 7, 8]);
        assert!(t.merge(MergePolicy::Aggregate).is_none());
        let complete = t.merge(MergePolicy::Complete).unwrap();
        assert_eq!(ids(&complete.tag), vec![1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn fresh_table_sends_local_row() {
        let mut t = TagTable::new(3, 5, payload(5, &[4]));
        let m = t.merge(MergePolicy::Aggregate).unwrap();
        assert_eq!(m, t.local_message());
        assert_eq!(t.greedy_cover().0, vec![0]);
    }
}
