//! A small work queue: jobs run on scoped worker threads and results are
//! handed to a single consumer in job order, as soon as every earlier job has
//! finished.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

pub fn worker_count(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

/// Runs `work` over `jobs` and feeds `(index, result)` to `consume` in index order.
pub fn run_ordered<J, R, W, C>(jobs: &[J], threads: usize, work: W, mut consume: C)
where
    J: Sync,
    R: Send,
    W: Fn(usize, &J) -> R + Sync,
    C: FnMut(usize, R),
{
    let threads = worker_count(threads).min(jobs.len()).max(1);
    if threads == 1 {
        for (i, j) in jobs.iter().enumerate() {
            consume(i, work(i, j));
        }
        return;
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            let tx = tx.clone();
            let (next, work) = (&next, &work);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                if tx.send((i, work(i, job))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut emit = 0;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&emit) {
                consume(emit, r);
                emit += 1;
            }
        }
    });
}
