//! Append-only persistent score cache.
//!
//! One JSON record per line. Replay on open rebuilds the in-memory index
//! (last write wins per key); a corrupt trailing record — a torn write from
//! a crash mid-append — truncates the file back to the last good record.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::JudgeError;
use crate::types::PreferredSide;

/// Cache key: rubric ids are content hashes, so hits survive pool reloads.
pub type CacheKey = (String, String, PreferredSide);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCacheEntry {
    pub rubric_id: String,
    pub pair_id: String,
    pub side: PreferredSide,
    pub score: f64,
    pub backend_tag: String,
    pub timestamp: u64,
}

impl ScoreCacheEntry {
    pub fn key(&self) -> CacheKey {
        (self.rubric_id.clone(), self.pair_id.clone(), self.side)
    }
}

/// Concurrent-reader cache with serialized appends.
pub struct ScoreCache {
    index: RwLock<HashMap<CacheKey, f64>>,
    writer: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl ScoreCache {
    /// Opens (or creates) a cache file and replays it into memory.
    pub fn open(path: &Path) -> Result<Self, JudgeError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut index = HashMap::new();
        let mut good_bytes: u64 = 0;
        if path.exists() {
            let file = File::open(path)?;
            let mut reader = BufReader::new(file);
            let mut line = String::new();
            loop {
                line.clear();
                let read = reader.read_line(&mut line)?;
                if read == 0 {
                    break;
                }
                match serde_json::from_str::<ScoreCacheEntry>(line.trim_end()) {
                    Ok(entry) if line.ends_with('\n') => {
                        index.insert(entry.key(), entry.score);
                        good_bytes += read as u64;
                    }
                    // A record without a newline may itself be torn even if
                    // it happens to parse; everything from here on is
                    // discarded.
                    _ => {
                        log::warn!(
                            "score cache {}: truncating torn record at byte {good_bytes}",
                            path.display()
                        );
                        break;
                    }
                }
            }
            let truncate_target = good_bytes;
            let current = std::fs::metadata(path)?.len();
            if truncate_target < current {
                let file = OpenOptions::new().write(true).open(path)?;
                file.set_len(truncate_target)?;
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        file.seek(SeekFrom::End(0))?;
        Ok(Self {
            index: RwLock::new(index),
            writer: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    /// Volatile cache with no backing file.
    pub fn in_memory() -> Self {
        Self {
            index: RwLock::new(HashMap::new()),
            writer: None,
            path: None,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache index poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &CacheKey) -> Option<f64> {
        self.index
            .read()
            .expect("cache index poisoned")
            .get(key)
            .copied()
    }

    /// Appends one record durably (flushed before the index is updated).
    pub fn put(&self, entry: &ScoreCacheEntry) -> Result<(), JudgeError> {
        if let Some(writer) = &self.writer {
            let mut line = serde_json::to_string(entry).expect("cache entry serializes");
            line.push('\n');
            let mut file = writer.lock().expect("cache writer poisoned");
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        self.index
            .write()
            .expect("cache index poisoned")
            .insert(entry.key(), entry.score);
        Ok(())
    }
}

pub(crate) fn unix_timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(rubric: &str, pair: &str, side: PreferredSide, score: f64) -> ScoreCacheEntry {
        ScoreCacheEntry {
            rubric_id: rubric.to_string(),
            pair_id: pair.to_string(),
            side,
            score,
            backend_tag: "test".to_string(),
            timestamp: 0,
        }
    }

    #[test]
    fn get_before_put_is_absent() {
        let cache = ScoreCache::in_memory();
        assert_eq!(
            cache.get(&("r".into(), "p".into(), PreferredSide::A)),
            None
        );
    }

    #[test]
    fn last_write_wins() {
        let cache = ScoreCache::in_memory();
        cache.put(&entry("r", "p", PreferredSide::A, 0.3)).unwrap();
        cache.put(&entry("r", "p", PreferredSide::A, 0.7)).unwrap();
        assert_eq!(
            cache.get(&("r".into(), "p".into(), PreferredSide::A)),
            Some(0.7)
        );
    }

    #[test]
    fn replay_reconstructs_the_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        {
            let cache = ScoreCache::open(&path).unwrap();
            cache.put(&entry("r1", "p1", PreferredSide::A, 0.2)).unwrap();
            cache.put(&entry("r1", "p1", PreferredSide::B, 0.9)).unwrap();
            cache.put(&entry("r1", "p1", PreferredSide::A, 0.4)).unwrap();
        }
        let reopened = ScoreCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(
            reopened.get(&("r1".into(), "p1".into(), PreferredSide::A)),
            Some(0.4)
        );
    }

    /// Fault injection: truncate the file at every byte offset and replay.
    /// All records whose newline survived must be recovered; the torn tail
    /// must be dropped without error.
    #[test]
    fn replay_survives_truncation_at_every_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.jsonl");
        {
            let cache = ScoreCache::open(&path).unwrap();
            for i in 0..5 {
                cache
                    .put(&entry(&format!("r{i}"), "p", PreferredSide::A, 0.1 * i as f64))
                    .unwrap();
            }
        }
        let bytes = std::fs::read(&path).unwrap();
        let newline_offsets: Vec<usize> = bytes
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == b'\n')
            .map(|(i, _)| i)
            .collect();

        for cut in 0..=bytes.len() {
            let truncated_path = dir.path().join(format!("cut_{cut}.jsonl"));
            std::fs::write(&truncated_path, &bytes[..cut]).unwrap();
            let cache = ScoreCache::open(&truncated_path).unwrap();
            let complete_records = newline_offsets.iter().filter(|&&off| off < cut).count();
            assert_eq!(
                cache.len(),
                complete_records,
                "wrong recovery at cut {cut}"
            );
            // The file itself must have been truncated back to the last
            // fully-written record, so a reopen is clean.
            let after = std::fs::metadata(&truncated_path).unwrap().len();
            let expected = newline_offsets
                .iter()
                .filter(|&&off| off < cut)
                .last()
                .map(|&off| off as u64 + 1)
                .unwrap_or(0);
            assert_eq!(after, expected, "file not truncated at cut {cut}");
        }
    }
}
