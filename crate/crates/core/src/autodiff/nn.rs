//! Dense layers built from tape primitives.

use rand::Rng;

use super::params::{Bound, ParamSet};
use super::tape::{Tape, Var};
use super::AutodiffError;

/// Fully connected stack: tanh on hidden layers, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub prefix: String,
    pub sizes: Vec<usize>,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self {
            prefix: prefix.into(),
            sizes,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layer(&self, i: usize) -> String {
        format!("{}.l{}", self.prefix, i)
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, params: &mut ParamSet) {
        for i in 0..self.sizes.len() - 1 {
            params.add_linear(rng, &self.layer(i), self.sizes[i], self.sizes[i + 1]);
        }
    }

    /// Scales the last layer's weights, e.g. for near-uniform initial policies.
    pub fn scale_output(&self, params: &mut ParamSet, k: f64) {
        let name = format!("{}.w", self.layer(self.sizes.len() - 2));
        if let Some(w) = params.get_mut(&name) {
            for v in w.data_mut() {
                *v *= k;
            }
        }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let n = self.sizes.len() - 1;
        let mut h = x;
        for i in 0..n {
            let l = self.layer(i);
            let z = tape.matmul(h, b[&format!("{l}.w") as &str])?;
            h = tape.add(z, b[&format!("{l}.b") as &str])?;
            if i + 1 < n {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }
}

/// `x W + b` for a layer registered with [`ParamSet::add_linear`].
pub fn linear(tape: &mut Tape, b: &Bound, prefix: &str, x: Var) -> Result<Var, AutodiffError> {
    let z = tape.matmul(x, b[&format!("{prefix}.w") as &str])?;
    tape.add(z, b[&format!("{prefix}.b") as &str])
}
