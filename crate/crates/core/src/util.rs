//! Small shared helpers.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

/// Runs `f` over `items` on up to `workers` threads, preserving input order
/// in the output. Stops handing out new items after the first error; the
/// first error (by input index) is returned alongside the completed results.
pub(crate) fn parallel_map<T, U, F>(
    items: &[T],
    workers: usize,
    f: F,
) -> (Vec<Option<U>>, Option<(usize, String)>)
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U, String> + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let results: Vec<Mutex<Option<U>>> = (0..items.len()).map(|_| Mutex::new(None)).collect();
    let failure: Mutex<Option<(usize, String)>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= items.len() {
                    break;
                }
                match f(&items[idx]) {
                    Ok(value) => {
                        *results[idx].lock().expect("result slot poisoned") = Some(value);
                    }
                    Err(message) => {
                        let mut slot = failure.lock().expect("failure slot poisoned");
                        match &*slot {
                            Some((first, _)) if *first <= idx => {}
                            _ => *slot = Some((idx, message)),
                        }
                        stop.store(true, Ordering::Relaxed);
                        break;
                    }
                }
            });
        }
    });

    let outputs = results
        .into_iter()
        .map(|slot| slot.into_inner().expect("result slot poisoned"))
        .collect();
    (outputs, failure.into_inner().expect("failure slot poisoned"))
}

/// First 8 bytes of SHA-256 over the given parts, as a little-endian u64.
/// Stable across runs and platforms, unlike the std hasher.
pub(crate) fn stable_seed(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Deterministic unit-interval value derived from the given parts.
pub(crate) fn stable_unit(parts: &[&str]) -> f64 {
    // 53 high bits give a uniform dyadic rational in [0, 1).
    (stable_seed(parts) >> 11) as f64 / (1u64 << 53) as f64
}
