//! Internal parallelism cap.
//!
//! `AUTODIFFGEO_THREADS` limits the worker count for the embarrassingly
//! parallel loops (finite-difference Jacobian columns, supersampling);
//! default is all cores. Benchmarks force a single lane regardless.

use std::sync::atomic::{AtomicUsize, Ordering};

static FORCED: AtomicUsize = AtomicUsize::new(0);

/// Number of parallel lanes to use.
pub fn lanes() -> usize {
    let forced = FORCED.load(Ordering::Relaxed);
    if forced > 0 {
        return forced;
    }
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var("AUTODIFFGEO_THREADS") {
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n >= 1).unwrap_or(hw).min(hw.max(1)),
        Err(_) => hw,
    }
}

/// Force a fixed lane count for the current process (used by `bench`, which
/// must run single-lane). Pass 0 to restore env/default behavior.
pub fn force_lanes(n: usize) {
    FORCED.store(n, Ordering::Relaxed);
}

/// Run `jobs` closures over indices `0..count`, merging results in index
/// order. Falls back to a serial loop for one lane, keeping results
/// bit-identical either way.
pub fn map_indices<T: Send>(count: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let lanes = lanes().min(count.max(1));
    if lanes <= 1 || count <= 1 {
        return (0..count).map(job).collect();
    }
    let mut out: Vec<Option<T>> = (0..count).map(|_| None).collect();
    let chunk = count.div_ceil(lanes);
    std::thread::scope(|scope| {
        let mut rest = out.as_mut_slice();
        let mut start = 0;
        let job = &job;
        while !rest.is_empty() {
            let take = chunk.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            let base = start;
            scope.spawn(move || {
                for (off, slot) in head.iter_mut().enumerate() {
                    *slot = Some(job(base + off));
                }
            });
            rest = tail;
            start += take;
        }
    });
    out.into_iter().map(|v| v.unwrap()).collect()
}
