//! Serving-side primitive: a brute-force packed Hamming scan over a code
//! database. Whether the stored codes came from a shared map, a separate
//! database map, or free codewords makes no difference to the scan: same
//! word count, same kernel, same cost.

use std::collections::BinaryHeap;
use std::collections::HashSet;

use crate::bitcode::{hamming_words, PackedCodeMatrix};
use crate::{Error, Result};

/// Stored database codes plus one external identifier per column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeDatabase {
    codes: PackedCodeMatrix,
    ids: Vec<String>,
}

/// One scan result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hit {
    pub id: String,
    pub distance: u32,
}

impl CodeDatabase {
    pub fn new(codes: PackedCodeMatrix, ids: Vec<String>) -> Result<Self> {
        if ids.len() != codes.n() {
            return Err(Error::dims(format!(
                "{} ids for {} stored codes",
                ids.len(),
                codes.n()
            )));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate id '{id}'")));
            }
        }
        Ok(CodeDatabase { codes, ids })
    }

    pub fn k(&self) -> usize {
        self.codes.k()
    }

    pub fn len(&self) -> usize {
        self.codes.n()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.n() == 0
    }

    pub fn codes(&self) -> &PackedCodeMatrix {
        &self.codes
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// The `r` nearest stored codes by Hamming distance, ties broken by
    /// ascending id. Asking for more than `n` items returns all of them.
    pub fn scan_top(&self, query: &[u64], r: usize) -> Result<Vec<Hit>> {
        if r < 1 {
            return Err(Error::invalid("need r >= 1"));
        }
        if query.len() != self.codes.words_per_code() {
            return Err(Error::dims(format!(
                "query has {} words, database codes have {}",
                query.len(),
                self.codes.words_per_code()
            )));
        }
        let r = r.min(self.len());
        // bounded max-heap of the r best (distance, id) pairs seen so far
        let mut heap: BinaryHeap<(u32, &str)> = BinaryHeap::with_capacity(r + 1);
        for i in 0..self.len() {
            let dist = hamming_words(query, self.codes.column(i));
            let id = self.ids[i].as_str();
            if heap.len() < r {
                heap.push((dist, id));
            } else if let Some(&worst) = heap.peek() {
                if (dist, id) < worst {
                    heap.pop();
                    heap.push((dist, id));
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|(distance, id)| Hit {
                id: id.to_string(),
                distance,
            })
            .collect())
    }

    /// Every stored code within `max_distance`, sorted by distance then id.
    pub fn scan_within(&self, query: &[u64], max_distance: u32) -> Result<Vec<Hit>> {
        if query.len() != self.codes.words_per_code() {
            return Err(Error::dims(format!(
                "query has {} words, database codes have {}",
                query.len(),
                self.codes.words_per_code()
            )));
        }
        let mut hits: Vec<(u32, &str)> = (0..self.len())
            .filter_map(|i| {
                let dist = hamming_words(query, self.codes.column(i));
                (dist <= max_distance).then_some((dist, self.ids[i].as_str()))
            })
            .collect();
        hits.sort();
        Ok(hits
            .into_iter()
            .map(|(distance, id)| Hit {
                id: id.to_string(),
                distance,
            })
            .collect())
    }
}
