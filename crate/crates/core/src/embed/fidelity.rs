use std::collections::HashSet;

use ndarray::ArrayView2;

use crate::distance::{Metric, Points};
use crate::error::{ensure, Error, Result};

/// RMSE between the pairwise distance matrices of `original` and `embedded`
/// over the rows in `sample`.
///
/// Each matrix's upper-triangular entries are first scaled to unit mean, so the
/// result ignores the global scale of either space.
pub fn distance_fidelity_rmse(
    original: ArrayView2<'_, f64>,
    embedded: ArrayView2<'_, f64>,
    sample: &[usize],
) -> Result<f64> {
    ensure!(sample.len() >= 2, "fidelity sample needs at least 2 rows");
    ensure!(
        original.nrows() == embedded.nrows(),
        "original has {} rows, embedding {}",
        original.nrows(),
        embedded.nrows()
    );
    let mut seen = HashSet::with_capacity(sample.len());
    for &i in sample {
        ensure!(i < original.nrows(), "sample index {i} out of range");
        ensure!(seen.insert(i), "duplicate sample index {i}");
    }
    let (orig, emb) = (original.as_standard_layout(), embedded.as_standard_layout());
    let (ov, ev) = (orig.view(), emb.view());
    let (po, pe) = (Points::new(&ov), Points::new(&ev));

    let pairs = |f: &mut dyn FnMut(f64, f64)| {
        for (a, &i) in sample.iter().enumerate() {
            for &j in &sample[a + 1..] {
                f(po.dist(i, j), pe.dist(i, j));
            }
        }
    };
    let (mut so, mut se, mut count) = (0.0, 0.0, 0usize);
    pairs(&mut |o, e| {
        so += o;
        se += e;
        count += 1;
    });
    let (mo, me) = (so / count as f64, se / count as f64);
    if mo <= 0.0 || me <= 0.0 {
        return Err(Error::Degenerate(
            "all sampled points coincide in one of the spaces".into(),
        ));
    }
    let mut sq = 0.0;
    pairs(&mut |o, e| {
        let r = o / mo - e / me;
        sq += r * r;
    });
    Ok((sq / count as f64).sqrt())
}
