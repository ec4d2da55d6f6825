use rand::Rng;

use super::GraphError;
use crate::autodiff::{glorot, Bound, ParamSet, Tape, Tensor, Var};

fn check_dims(tape: &Tape, q: Var, k: Var, v: Var) -> Result<usize, GraphError> {
    let (_, dk) = tape.value(q).dims2();
    let (kr, kc) = tape.value(k).dims2();
    let (vr, _) = tape.value(v).dims2();
    if dk == 0 {
        return Err(GraphError::Domain("key dimension is zero".into()));
    }
    if kc != dk || kr != vr {
        return Err(GraphError::Domain(format!(
            "query width {dk}, keys {kr}x{kc}, values with {vr} rows"
        )));
    }
    Ok(dk)
}

/// `softmax(q k^T / sqrt(d_k))`, one row per query.
pub fn attention_weights(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var, GraphError> {
    let dk = check_dims(tape, q, k, v)?;
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (dk as f64).sqrt());
    Ok(tape.softmax_rows(scores))
}

/// `softmax(q k^T / sqrt(d_k)) v`.
pub fn scaled_dot_attention(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var, GraphError> {
    let w = attention_weights(tape, q, k, v)?;
    Ok(tape.matmul(w, v)?)
}

/// Row-wise attention for a batch of independent samples: row `b` of `q`
/// attends over row `b` of every key block. Returns `(output, weights)`
/// with weights `B x keys.len()`.
pub fn batched_attention(tape: &mut Tape, q: Var, keys: &[Var], values: &[Var]) -> Result<(Var, Var), GraphError> {
    if keys.is_empty() || keys.len() != values.len() {
        return Err(GraphError::Domain("attention needs matching nonempty keys and values".into()));
    }
    let dk = tape.value(q).cols();
    if dk == 0 {
        return Err(GraphError::Domain("key dimension is zero".into()));
    }
    let ones = tape.constant(Tensor::filled(&[dk, 1], 1.0 / (dk as f64).sqrt()));
    let mut scores = Vec::with_capacity(keys.len());
    for &k in keys {
        let prod = tape.mul(q, k)?;
        scores.push(tape.matmul(prod, ones)?);
    }
    let scores = tape.concat_cols(&scores)?;
    let w = tape.softmax_rows(scores);
    let mut out = None;
    for (j, &v) in values.iter().enumerate() {
        let wj = tape.slice_cols(w, j, j + 1)?;
        let term = tape.mul(wj, v)?;
        out = Some(match out {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok((out.expect("nonempty values"), w))
}

/// Single-head query/key/value projections.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionHead {
    pub prefix: String,
    pub in_dim: usize,
    pub key_dim: usize,
}

impl AttentionHead {
    pub fn new(prefix: impl Into<String>, in_dim: usize, key_dim: usize) -> Self {
        Self {
            prefix: prefix.into(),
            in_dim,
            key_dim,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{}", self.prefix, part)
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, params: &mut ParamSet) {
        for part in ["q", "k", "v"] {
            params.insert(self.name(part), glorot(rng, self.in_dim, self.key_dim, 1.0));
        }
    }

    /// Each sample's `query` row attends over that sample's rows of
    /// `members` (one `B x in_dim` block per agent).
    pub fn forward(&self, tape: &mut Tape, b: &Bound, query: Var, members: &[Var]) -> Result<Var, GraphError> {
        let q = tape.matmul(query, b[self.name("q").as_str()])?;
        let mut keys = Vec::with_capacity(members.len());
        let mut values = Vec::with_capacity(members.len());
        for &x in members {
            keys.push(tape.matmul(x, b[self.name("k").as_str()])?);
            values.push(tape.matmul(x, b[self.name("v").as_str()])?);
        }
        Ok(batched_attention(tape, q, &keys, &values)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn consts(tape: &mut Tape, rows: &[Vec<f64>]) -> Var {
        tape.constant(Tensor::from_rows(rows).unwrap())
    }

    #[test]
    fn two_key_oracle() {
        let mut t = Tape::new();
        let q = consts(&mut t, &[vec![1.0, 0.0]]);
        let k = consts(&mut t, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let v = consts(&mut t, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let w = attention_weights(&mut t, q, k, v).unwrap();
        let out = scaled_dot_attention(&mut t, q, k, v).unwrap();
        let expected = [0.669_761_55, 0.330_238_45];
        for i in 0..2 {
            assert_abs_diff_eq!(t.value(w).data()[i], expected[i], epsilon = 1e-8);
            assert_abs_diff_eq!(t.value(out).data()[i], expected[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn single_key_returns_its_value() {
        let mut t = Tape::new();
        let q = consts(&mut t, &[vec![0.3, -0.2]]);
        let k = consts(&mut t, &[vec![0.3, -0.2]]);
        let v = consts(&mut t, &[vec![4.0, 5.0, 6.0]]);
        let out = scaled_dot_attention(&mut t, q, k, v).unwrap();
        assert_eq!(t.value(out).data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn zero_key_dim_rejected() {
        let mut t = Tape::new();
        let q = t.constant(Tensor::zeros(&[1, 0]));
        let k = t.constant(Tensor::zeros(&[2, 0]));
        let v = t.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(scaled_dot_attention(&mut t, q, k, v), Err(GraphError::Domain(_))));
        assert!(matches!(batched_attention(&mut t, q, &[k], &[v]), Err(GraphError::Domain(_))));
    }

    #[test]
    fn batched_matches_per_sample() {
        let mut t = Tape::new();
        let q = consts(&mut t, &[vec![1.0, 0.0], vec![0.5, 0.5]]);
        let k1 = consts(&mut t, &[vec![1.0, 0.0], vec![0.2, 0.1]]);
        let k2 = consts(&mut t, &[vec![0.0, 1.0], vec![-0.3, 0.9]]);
        let (out, w) = batched_attention(&mut t, q, &[k1, k2], &[k1, k2]).unwrap();
        let out = t.value(out).clone();
        let w = t.value(w).clone();
        for b in 0..2 {
            let qb = t.constant(Tensor::row(t.value(q).row_slice(b)));
            let kb = t.constant(Tensor::from_rows(&[t.value(k1).row_slice(b).to_vec(), t.value(k2).row_slice(b).to_vec()]).unwrap());
            let ref_w = attention_weights(&mut t, qb, kb, kb).unwrap();
            let ref_out = scaled_dot_attention(&mut t, qb, kb, kb).unwrap();
            for j in 0..2 {
                assert_abs_diff_eq!(w.get(b, j), t.value(ref_w).data()[j], epsilon = 1e-14);
                assert_abs_diff_eq!(out.get(b, j), t.value(ref_out).data()[j], epsilon = 1e-14);
            }
        }
    }
}
