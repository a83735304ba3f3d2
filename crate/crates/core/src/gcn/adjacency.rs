use super::{DenseMatrix, GcnError};

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` for the symmetrized adjacency `A` of an
/// edge list over `n` nodes.
///
/// Entry `(i, j)` is computed as `Â_ij / sqrt(d_i · d_j)`; the product is
/// commutative in floating point, so the result is exactly symmetric.
pub fn normalized_adjacency(edges: &[(usize, usize)], n: usize) -> Result<DenseMatrix, GcnError> {
    let mut a_hat = DenseMatrix::identity(n);
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(GcnError::IndexOutOfRange(i, j, n));
        }
        if i != j {
            a_hat[(i, j)] = 1.0;
            a_hat[(j, i)] = 1.0;
        }
    }
    let degree: Vec<f64> = (0..n).map(|i| a_hat.row(i).iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            if a_hat[(i, j)] != 0.0 {
                a_hat[(i, j)] /= (degree[i] * degree[j]).sqrt();
            }
        }
    }
    Ok(a_hat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_node() {
        let s = normalized_adjacency(&[], 1).unwrap();
        assert_eq!(s.data(), &[1.0]);
    }

    #[test]
    fn single_edge_is_all_halves() {
        let s = normalized_adjacency(&[(0, 1)], 2).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn duplicate_and_reverse_edges_collapse() {
        let a = normalized_adjacency(&[(0, 1), (1, 0), (0, 1)], 3).unwrap();
        let b = normalized_adjacency(&[(0, 1)], 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[(2, 2)], 1.0);
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(normalized_adjacency(&[(0, 3)], 3), Err(GcnError::IndexOutOfRange(0, 3, 3))));
    }
}
