use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use crate::error::Result;
use crate::grid::Bbox;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    backend: String,
    bbox: Bbox,
    u_min: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

/// Tile-embedding cache keyed by backend identity and tile geometry.
///
/// Lookups and inserts of distinct keys may race freely. Two concurrent
/// misses on the same key may both call the backend; the first stored value
/// wins and is returned to every later caller.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<Key, Arc<Vec<f64>>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute<F>(
        &self,
        backend: &str,
        bbox: Bbox,
        u_min: u32,
        compute: F,
    ) -> Result<Arc<Vec<f64>>>
    where
        F: FnOnce() -> Result<Vec<f64>>,
    {
        let key = Key {
            backend: backend.to_owned(),
            bbox,
            u_min,
        };
        if let Some(v) = self.entries.read().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(v));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let value = Arc::new(compute()?);
        let mut entries = self.entries.write().expect("cache lock");
        Ok(Arc::clone(entries.entry(key).or_insert(value)))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }
}
