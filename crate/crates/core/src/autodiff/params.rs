use std::collections::BTreeMap;
use std::ops::Index;

use rand::Rng;

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

pub type ParamGrads = BTreeMap<String, Tensor>;

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, mut t: Tensor) {
        t.set_requires_grad(true);
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for t in self.tensors.values() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Overwrites all values from a flat vector laid out as by [`ParamSet::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_scalars(), "flat parameter length");
        let mut offset = 0;
        for t in self.tensors.values_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// FNV-1a over names and value bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for (name, t) in &self.tensors {
            feed(name.as_bytes());
            for v in t.data() {
                feed(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Places every tensor on the tape as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.bind_with(tape, true)
    }

    /// Places every tensor on the tape as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &mut Tape, grad: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, t)| {
                let v = if grad {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (k.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    /// Glorot-uniform weight `fan_in x fan_out` plus zero bias `1 x fan_out`.
    pub fn add_linear<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
    ) {
        self.insert(format!("{prefix}.w"), glorot(rng, fan_in, fan_out, 1.0));
        self.insert(format!("{prefix}.b"), Tensor::zeros(&[1, fan_out]));
    }
}

pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize, gain: f64) -> Tensor {
    let limit = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::matrix(fan_in, fan_out, data).expect("glorot shape")
}

/// Tape handles for a bound [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn gradients(&self, grads: &Gradients) -> ParamGrads {
        self.vars
            .iter()
            .map(|(k, &v)| (k.clone(), grads.wrt(v)))
            .collect()
    }
}

impl Index<&str> for Bound {
    type Output = Var;

    fn index(&self, name: &str) -> &Var {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` is not bound"))
    }
}
