/// Pairwise (cascade) summation; the result depends only on the order of
/// `values`, which keeps parallel reductions reproducible.
pub(crate) fn pairwise(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise(lo) + pairwise(hi)
}
