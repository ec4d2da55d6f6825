use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::autodiff::nn::Mlp;
use crate::autodiff::{glorot, gradient_check, AutodiffError, ParamSet, Tensor};
use crate::env::{reset, ScenarioConfig};
use crate::graph::{encode_topology, gat_edge_weights, AttentionHead, GraphBatch, GraphError, GrnEncoder};

/// Worst finite-difference disagreement of one component over all seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentCheck {
    pub component: &'static str,
    pub max_rel_error: f64,
    pub worst_seed: u64,
    pub checked: usize,
}

const STEP: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape")
}

fn lift(e: GraphError) -> AutodiffError {
    match e {
        GraphError::Autodiff(a) => a,
        other => AutodiffError::Usage(other.to_string()),
    }
}

fn mlp(seed: u64) -> Result<crate::autodiff::GradCheckReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new("mlp", vec![6, 8, 8, 3]);
    let mut params = ParamSet::new();
    net.init(&mut rng, &mut params);
    let x = random(&mut rng, 4, 6);
    Ok(gradient_check(&params, STEP, |t, b| {
        let x = t.constant(x.clone());
        let y = net.forward(t, b, x)?;
        let sq = t.square(y)?;
        Ok(t.sum(sq))
    })?)
}

fn attention(seed: u64) -> Result<crate::autodiff::GradCheckReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let head = AttentionHead::new("att", 4, 3);
    let mut params = ParamSet::new();
    head.init(&mut rng, &mut params);
    let query = random(&mut rng, 2, 4);
    let members: Vec<Tensor> = (0..3).map(|_| random(&mut rng, 2, 4)).collect();
    Ok(gradient_check(&params, STEP, |t, b| {
        let q = t.constant(query.clone());
        let m: Vec<_> = members.iter().map(|x| t.constant(x.clone())).collect();
        let y = head.forward(t, b, q, &m).map_err(lift)?;
        let sq = t.square(y)?;
        Ok(t.sum(sq))
    })?)
}

fn gat(seed: u64) -> Result<crate::autodiff::GradCheckReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    params.insert("gat.w", glorot(&mut rng, 4, 3, 1.0));
    params.insert("gat.a_src", glorot(&mut rng, 3, 1, 1.0));
    params.insert("gat.a_dst", glorot(&mut rng, 3, 1, 1.0));
    let h_i = random(&mut rng, 1, 4);
    let neighbors: Vec<Tensor> = (0..3).map(|_| random(&mut rng, 1, 4)).collect();
    // weights sum to one, so probe them through a non-uniform projection
    let probe = random(&mut rng, 3, 1);
    Ok(gradient_check(&params, STEP, |t, b| {
        let hi = t.constant(h_i.clone());
        let nb: Vec<_> = neighbors.iter().map(|x| t.constant(x.clone())).collect();
        let w = gat_edge_weights(t, hi, &nb, b["gat.w"], b["gat.a_src"], b["gat.a_dst"], 0.2).map_err(lift)?;
        let c = t.constant(probe.clone());
        t.matmul(w, c)
    })?)
}

fn grn(seed: u64) -> Result<crate::autodiff::GradCheckReport, HarnessError> {
    let cfg = ScenarioConfig::preset("2x4")?;
    let state = reset(&cfg, seed)?;
    let batch = GraphBatch::new(&[encode_topology(&state, &state.pairing, &cfg)]).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let enc = GrnEncoder::new("grn", 6, 2);
    let mut params = ParamSet::new();
    enc.init(&mut ChaCha8Rng::seed_from_u64(seed), &mut params);
    Ok(gradient_check(&params, STEP, |t, b| {
        let y = enc.forward(t, b, &batch).map_err(lift)?;
        let sq = t.square(y)?;
        Ok(t.sum(sq))
    })?)
}

/// Central-difference checks of the MLP, attention head, GAT edge weights
/// and GRN encoder, each over `seeds` random instances.
pub fn gradient_suite(seeds: impl IntoIterator<Item = u64> + Clone) -> Result<Vec<ComponentCheck>, HarnessError> {
    type Check = fn(u64) -> Result<crate::autodiff::GradCheckReport, HarnessError>;
    let components: [(&'static str, Check); 4] = [("mlp", mlp), ("attention", attention), ("gat", gat), ("grn", grn)];
    let mut out = Vec::with_capacity(components.len());
    for (component, check) in components {
        let mut summary = ComponentCheck {
            component,
            max_rel_error: 0.0,
            worst_seed: 0,
            checked: 0,
        };
        for seed in seeds.clone() {
            let r = check(seed)?;
            summary.checked += r.checked;
            if r.max_rel_error > summary.max_rel_error || !r.max_rel_error.is_finite() {
                summary.max_rel_error = r.max_rel_error;
                summary.worst_seed = seed;
            }
        }
        out.push(summary);
    }
    Ok(out)
}
