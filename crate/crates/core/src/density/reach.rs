use crate::distance::{Metric, NeighborGraph};
use crate::error::{ensure, Result};

/// Distance from each point to its `k`-th nearest neighbor, self excluded.
pub fn core_distances(g: &NeighborGraph, k: usize) -> Result<Vec<f64>> {
    ensure!(
        k >= 1 && k <= g.k(),
        "core distance rank {k} exceeds graph degree {}",
        g.k()
    );
    Ok((0..g.n()).map(|i| g.kth_distance(i, k)).collect())
}

/// `max(core_i, core_j, d(i, j))`, evaluated on demand.
///
/// The diagonal is `core_i` by convention.
pub struct MutualReachability<'a, M: Metric + ?Sized> {
    base: &'a M,
    core: &'a [f64],
}

pub fn mutual_reachability<'a, M: Metric + ?Sized>(
    base: &'a M,
    core: &'a [f64],
) -> Result<MutualReachability<'a, M>> {
    ensure!(
        base.len() == core.len(),
        "{} core distances for {} points",
        core.len(),
        base.len()
    );
    Ok(MutualReachability { base, core })
}

impl<M: Metric + ?Sized> Metric for MutualReachability<'_, M> {
    fn len(&self) -> usize {
        self.core.len()
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.core[i];
        }
        self.base.dist(i, j).max(self.core[i]).max(self.core[j])
    }
}
