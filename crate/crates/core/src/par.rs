//! Trajectory-parallel execution with a scheduling-independent reduction.
//!
//! Trajectories are cut into fixed-size blocks. Each block is reduced
//! sequentially in index order, and the block results are returned in block
//! order, so any further (sequential) merge is identical for every worker
//! count.

use std::ops::Range;

use rayon::prelude::*;

const BLOCK: u64 = 64;

pub(crate) fn blocks<T, F>(n: u64, workers: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync + Send,
{
    let ranges: Vec<Range<u64>> = (0..n.div_ceil(BLOCK))
        .map(|b| b * BLOCK..((b + 1) * BLOCK).min(n))
        .collect();
    let run = || ranges.into_par_iter().map(&f).collect::<Vec<T>>();
    match workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worker_count_does_not_change_sums() {
        let f = |r: Range<u64>| r.map(|i| (i as f64).sqrt().sin()).sum::<f64>();
        let total = |w| blocks(10_000, w, f).into_iter().sum::<f64>();
        let a = total(Some(1));
        assert_eq!(a.to_bits(), total(Some(3)).to_bits());
        assert_eq!(a.to_bits(), total(None).to_bits());
    }
}
