use super::GraphError;
use crate::autodiff::{Tape, Var};

/// Normalized attention weights of node `h_i` over its neighbors:
/// softmax over `k` of `LeakyReLU(a_src . (W h_i) + a_dst . (W h_k))`.
///
/// `h_i` and each neighbor are `1 x F`, `w` is `F x H`, `a_src`/`a_dst`
/// are `H x 1` (the two halves of the edge-scoring vector). Returns `1 x k`.
pub fn gat_edge_weights(
    tape: &mut Tape,
    h_i: Var,
    neighbors: &[Var],
    w: Var,
    a_src: Var,
    a_dst: Var,
    slope: f64,
) -> Result<Var, GraphError> {
    if neighbors.is_empty() {
        return Err(GraphError::Domain("node has no neighbors".into()));
    }
    let zi = tape.matmul(h_i, w)?;
    let si = tape.matmul(zi, a_src)?;
    let mut scores = Vec::with_capacity(neighbors.len());
    for &h in neighbors {
        let zk = tape.matmul(h, w)?;
        let sk = tape.matmul(zk, a_dst)?;
        let e = tape.add(si, sk)?;
        scores.push(tape.leaky_relu(e, slope));
    }
    let row = tape.concat_cols(&scores)?;
    Ok(tape.softmax_rows(row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ln2_gap_gives_one_third_two_thirds() {
        let mut t = Tape::new();
        let w = t.constant(Tensor::matrix(1, 1, vec![1.0]).unwrap());
        let a_src = t.constant(Tensor::matrix(1, 1, vec![0.0]).unwrap());
        let a_dst = t.constant(Tensor::matrix(1, 1, vec![1.0]).unwrap());
        let hi = t.constant(Tensor::row(&[0.7]));
        let s = 0.4;
        let n1 = t.constant(Tensor::row(&[s]));
        let n2 = t.constant(Tensor::row(&[s + 2f64.ln()]));
        let wts = gat_edge_weights(&mut t, hi, &[n1, n2], w, a_src, a_dst, 0.2).unwrap();
        assert_abs_diff_eq!(t.value(wts).data()[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.value(wts).data()[1], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_neighbors_uniform_and_empty_rejected() {
        let mut t = Tape::new();
        let w = t.constant(Tensor::matrix(2, 2, vec![0.3, -1.0, 0.5, 2.0]).unwrap());
        let a_src = t.constant(Tensor::column(&[0.1, 0.2]));
        let a_dst = t.constant(Tensor::column(&[-0.4, 0.9]));
        let hi = t.constant(Tensor::row(&[1.0, 2.0]));
        let nb = t.constant(Tensor::row(&[-0.5, 0.25]));
        let wts = gat_edge_weights(&mut t, hi, &[nb, nb, nb], w, a_src, a_dst, 0.2).unwrap();
        for &v in t.value(wts).data() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
        assert!(matches!(
            gat_edge_weights(&mut t, hi, &[], w, a_src, a_dst, 0.2),
            Err(GraphError::Domain(_))
        ));
    }
}
