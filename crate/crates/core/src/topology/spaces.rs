//! Enumeration of the per-node combinatorial spaces.
//!
//! All three enumerations are total functions of (node, n) with a fixed
//! deterministic order; score vectors, decode, and the merged factors all
//! index into these orders.

/// n choose 2 without overflow concerns at cell scale.
pub fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Unordered predecessor pairs (m, k), m < k < j, lexicographic.
/// Empty for j <= 2: input nodes take no inputs.
pub fn input_pairs(j: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if j >= 3 {
        for m in 1..j {
            for k in (m + 1)..j {
                out.push((m, k));
            }
        }
    }
    out
}

/// Unordered successor pairs (m, k), i < m < k <= n, lexicographic.
/// Empty when fewer than two successors exist.
pub fn output_pairs(i: usize, n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for m in (i + 1)..=n {
        for k in (m + 1)..=n {
            out.push((m, k));
        }
    }
    out
}

/// Number of codes in node i's space: 2^(n-i), including the all-zero code.
pub fn code_count(i: usize, n: usize) -> usize {
    1usize << (n - i)
}

/// Bit vector of code `k` for node i, one bit per successor i+1..=n in
/// order. Codes are numbered so that the bit string read left to right is
/// the binary representation of `k` (the all-zero code is k = 0).
pub fn code_bits(i: usize, n: usize, k: usize) -> Vec<bool> {
    let len = n - i;
    debug_assert!(k < (1usize << len));
    (0..len).map(|p| (k >> (len - 1 - p)) & 1 == 1).collect()
}

/// Whether code `k` of node i sets the bit for successor j.
pub fn code_has_edge(i: usize, n: usize, k: usize, j: usize) -> bool {
    debug_assert!(i < j && j <= n);
    let len = n - i;
    let pos = j - i - 1;
    (k >> (len - 1 - pos)) & 1 == 1
}

/// All codes of node i in counting order, as explicit bit vectors.
pub fn codes(i: usize, n: usize) -> Vec<Vec<bool>> {
    (0..code_count(i, n)).map(|k| code_bits(i, n, k)).collect()
}

/// Successor nodes j with the bit set in code `k` of node i.
pub fn code_edges(i: usize, n: usize, k: usize) -> Vec<usize> {
    ((i + 1)..=n).filter(|&j| code_has_edge(i, n, k, j)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_pair_examples() {
        assert_eq!(input_pairs(4), vec![(1, 2), (1, 3), (2, 3)]);
        assert_eq!(input_pairs(3), vec![(1, 2)]);
        assert!(input_pairs(2).is_empty());
        assert!(input_pairs(1).is_empty());
        for j in 3..=9 {
            assert_eq!(input_pairs(j).len(), choose2(j - 1));
        }
    }

    #[test]
    fn output_pair_examples() {
        assert_eq!(output_pairs(1, 4), vec![(2, 3), (2, 4), (3, 4)]);
        assert!(output_pairs(5, 6).is_empty());
        assert_eq!(output_pairs(2, 6).len(), choose2(4));
        for n in 3..=9 {
            for i in 1..=n {
                assert_eq!(output_pairs(i, n).len(), choose2(n - i));
            }
        }
    }

    #[test]
    fn code_enumeration() {
        assert_eq!(codes(5, 6), vec![vec![false], vec![true]]);
        assert_eq!(codes(2, 6).len(), 16);
        for n in 3..=9 {
            for i in 1..n {
                let cs = codes(i, n);
                assert_eq!(cs.len(), 1 << (n - i));
                assert!(cs[0].iter().all(|&b| !b), "all-zero code comes first");
                assert!(cs.last().unwrap().iter().all(|&b| b));
            }
        }
    }

    #[test]
    fn code_bit_positions_follow_counting_order() {
        // i=2, n=5: successors 3,4,5; k=1 sets only the bit for node 5,
        // k=4 only the bit for node 3.
        assert_eq!(code_edges(2, 5, 1), vec![5]);
        assert_eq!(code_edges(2, 5, 4), vec![3]);
        assert_eq!(code_edges(2, 5, 7), vec![3, 4, 5]);
        for k in 0..code_count(2, 5) {
            let bits = code_bits(2, 5, k);
            for (p, j) in (3..=5).enumerate() {
                assert_eq!(bits[p], code_has_edge(2, 5, k, j));
            }
        }
    }
}
