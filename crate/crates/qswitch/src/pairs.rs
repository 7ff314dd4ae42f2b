//! Indexing for unordered user pairs `(i, j)` with `i < j`.
//!
//! Pairs are stored flat in lexicographic order: for `k = 4` that is
//! `(0,1), (0,2), (0,3), (1,2), (1,3), (2,3)`. All per-pair tables in
//! this crate (weights, rates, swap probabilities, service functions)
//! use this layout.

/// Number of unordered pairs among `k` users.
pub fn pair_count(k: usize) -> usize {
    k * (k - 1) / 2
}

/// Flat index of the pair `(i, j)`; order of the arguments is irrelevant.
///
/// Panics if `i == j` or either index is out of range.
pub fn pair_index(k: usize, i: usize, j: usize) -> usize {
    assert!(i != j && i < k && j < k, "bad pair ({i},{j}) for k={k}");
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * (2 * k - i - 1) / 2 + (j - i - 1)
}

/// Inverse of [`pair_index`].
pub fn pair_from_index(k: usize, idx: usize) -> (usize, usize) {
    let mut rem = idx;
    for i in 0..k - 1 {
        let row = k - 1 - i;
        if rem < row {
            return (i, i + 1 + rem);
        }
        rem -= row;
    }
    panic!("pair index {idx} out of range for k={k}");
}

/// All pairs in flat order.
pub fn pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |i| (i + 1..k).map(move |j| (i, j)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_order() {
        for k in 2..=6 {
            let listed: Vec<_> = pairs(k).collect();
            assert_eq!(listed.len(), pair_count(k));
            for (idx, &(i, j)) in listed.iter().enumerate() {
                assert_eq!(pair_index(k, i, j), idx);
                assert_eq!(pair_index(k, j, i), idx);
                assert_eq!(pair_from_index(k, idx), (i, j));
            }
        }
    }

    #[test]
    fn k3_layout() {
        assert_eq!(pairs(3).collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(pair_index(3, 0, 2), 1);
    }

    #[test]
    #[should_panic]
    fn rejects_diagonal() {
        pair_index(3, 1, 1);
    }
}
