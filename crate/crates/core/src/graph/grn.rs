use rand::Rng;

use super::topology::{GraphTopology, NODE_FEATURES};
use super::GraphError;
use crate::autodiff::{glorot, Bound, ParamSet, Tape, Tensor, Var};

/// Score added to non-edges before the softmax; underflows to weight 0.
pub const MASKED_SCORE: f64 = -1e30;

/// A batch of same-sized topologies laid out node-major: rows
/// `i*B..(i+1)*B` of every node-level tensor belong to node `i`.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub num_uavs: usize,
    pub num_gus: usize,
    pub batch: usize,
    features: Tensor,
    /// Per node: every node that is a neighbor in at least one sample.
    candidates: Vec<Vec<usize>>,
    masks: Vec<Tensor>,
    has_neighbors: Vec<Tensor>,
}

impl GraphBatch {
    pub fn new(graphs: &[GraphTopology]) -> Result<Self, GraphError> {
        let first = graphs
            .first()
            .ok_or_else(|| GraphError::Domain("empty graph batch".into()))?;
        let (m, n) = (first.num_uavs, first.num_gus);
        if graphs.iter().any(|g| g.num_uavs != m || g.num_gus != n) {
            return Err(GraphError::Domain("graphs in a batch must share node counts".into()));
        }
        let nodes = m + n;
        let b = graphs.len();
        let adj: Vec<Vec<Vec<bool>>> = graphs.iter().map(GraphTopology::adjacency).collect();
        let mut feats = Vec::with_capacity(nodes * b * NODE_FEATURES);
        for i in 0..nodes {
            for g in graphs {
                feats.extend_from_slice(&g.features[i]);
            }
        }
        let mut candidates = Vec::with_capacity(nodes);
        let mut masks = Vec::with_capacity(nodes);
        let mut has_neighbors = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let cand: Vec<usize> = (0..nodes).filter(|&j| adj.iter().any(|a| a[i][j])).collect();
            let mut mask = Vec::with_capacity(b * cand.len());
            let mut any = Vec::with_capacity(b);
            for a in &adj {
                mask.extend(cand.iter().map(|&j| if a[i][j] { 0.0 } else { MASKED_SCORE }));
                any.push(if cand.iter().any(|&j| a[i][j]) { 1.0 } else { 0.0 });
            }
            masks.push(Tensor::matrix(b, cand.len(), mask)?);
            has_neighbors.push(Tensor::column(&any));
            candidates.push(cand);
        }
        Ok(Self {
            num_uavs: m,
            num_gus: n,
            batch: b,
            features: Tensor::matrix(nodes * b, NODE_FEATURES, feats)?,
            candidates,
            masks,
            has_neighbors,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_uavs + self.num_gus
    }
}

/// Graph recurrent encoder: an input projection followed by `rounds` of
/// GAT-weighted neighbor aggregation fed through a shared GRU cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GrnEncoder {
    pub prefix: String,
    pub hidden: usize,
    pub rounds: usize,
    pub slope: f64,
}

impl GrnEncoder {
    pub fn new(prefix: impl Into<String>, hidden: usize, rounds: usize) -> Self {
        Self {
            prefix: prefix.into(),
            hidden,
            rounds,
            slope: 0.2,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{}", self.prefix, part)
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, params: &mut ParamSet) {
        let h = self.hidden;
        params.add_linear(rng, &self.name("in"), NODE_FEATURES, h);
        params.insert(self.name("gat.w"), glorot(rng, h, h, 1.0));
        params.insert(self.name("gat.a_src"), glorot(rng, h, 1, 1.0));
        params.insert(self.name("gat.a_dst"), glorot(rng, h, 1, 1.0));
        params.add_linear(rng, &self.name("gru.x"), h, 3 * h);
        params.add_linear(rng, &self.name("gru.h"), h, 3 * h);
    }

    fn p(&self, b: &Bound, part: &str) -> Var {
        b[self.name(part).as_str()]
    }

    /// Final UAV node states, `(M*B) x hidden`, node-major.
    pub fn forward(&self, tape: &mut Tape, b: &Bound, batch: &GraphBatch) -> Result<Var, GraphError> {
        if self.rounds == 0 {
            return Err(GraphError::Domain("at least one message-passing round is required".into()));
        }
        let bs = batch.batch;
        let nodes = batch.num_nodes();
        let h = self.hidden;
        let x = tape.constant(batch.features.clone());
        let z = tape.matmul(x, self.p(b, "in.w"))?;
        let z = tape.add(z, self.p(b, "in.b"))?;
        let mut state = tape.tanh(z);
        let masks: Vec<Var> = batch.masks.iter().map(|m| tape.constant(m.clone())).collect();
        let row_masks: Vec<Var> = batch.has_neighbors.iter().map(|m| tape.constant(m.clone())).collect();
        let zero_msg = tape.constant(Tensor::zeros(&[bs, h]));

        for _ in 0..self.rounds {
            let proj = tape.matmul(state, self.p(b, "gat.w"))?;
            let src = tape.matmul(proj, self.p(b, "gat.a_src"))?;
            let dst = tape.matmul(proj, self.p(b, "gat.a_dst"))?;
            let mut proj_i = Vec::with_capacity(nodes);
            let mut src_i = Vec::with_capacity(nodes);
            let mut dst_i = Vec::with_capacity(nodes);
            for i in 0..nodes {
                proj_i.push(tape.slice_rows(proj, i * bs, (i + 1) * bs)?);
                src_i.push(tape.slice_rows(src, i * bs, (i + 1) * bs)?);
                dst_i.push(tape.slice_rows(dst, i * bs, (i + 1) * bs)?);
            }
            let mut messages = Vec::with_capacity(nodes);
            for i in 0..nodes {
                let cand = &batch.candidates[i];
                if cand.is_empty() {
                    messages.push(zero_msg);
                    continue;
                }
                let cols: Vec<Var> = cand.iter().map(|&j| dst_i[j]).collect();
                let d = tape.concat_cols(&cols)?;
                let e = tape.add(src_i[i], d)?;
                let e = tape.leaky_relu(e, self.slope);
                let e = tape.add(e, masks[i])?;
                let w = tape.softmax_rows(e);
                let w = tape.mul(w, row_masks[i])?;
                let mut acc = None;
                for (c, &j) in cand.iter().enumerate() {
                    let wj = tape.slice_cols(w, c, c + 1)?;
                    let term = tape.mul(wj, proj_i[j])?;
                    acc = Some(match acc {
                        None => term,
                        Some(a) => tape.add(a, term)?,
                    });
                }
                messages.push(acc.expect("nonempty candidates"));
            }
            let msg = tape.concat_rows(&messages)?;
            state = self.gru(tape, b, msg, state)?;
        }
        Ok(tape.slice_rows(state, 0, batch.num_uavs * bs)?)
    }

    fn gru(&self, tape: &mut Tape, b: &Bound, x: Var, h_prev: Var) -> Result<Var, GraphError> {
        let h = self.hidden;
        let gx = tape.matmul(x, self.p(b, "gru.x.w"))?;
        let gx = tape.add(gx, self.p(b, "gru.x.b"))?;
        let gh = tape.matmul(h_prev, self.p(b, "gru.h.w"))?;
        let gh = tape.add(gh, self.p(b, "gru.h.b"))?;
        let gate = |tape: &mut Tape, k: usize| -> Result<(Var, Var), GraphError> {
            Ok((tape.slice_cols(gx, k * h, (k + 1) * h)?, tape.slice_cols(gh, k * h, (k + 1) * h)?))
        };
        let (xz, hz) = gate(tape, 0)?;
        let (xr, hr) = gate(tape, 1)?;
        let (xn, hn) = gate(tape, 2)?;
        let update = tape.add(xz, hz)?;
        let update = tape.sigmoid(update);
        let reset = tape.add(xr, hr)?;
        let reset = tape.sigmoid(reset);
        let gated = tape.mul(reset, hn)?;
        let cand = tape.add(xn, gated)?;
        let cand = tape.tanh(cand);
        // h' = n + z * (h - n)
        let diff = tape.sub(h_prev, cand)?;
        let keep = tape.mul(update, diff)?;
        Ok(tape.add(cand, keep)?)
    }
}
