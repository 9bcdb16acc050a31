use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{ensure_finite, Error, Result};

/// Fully connected network: tanh on hidden layers, identity on the output.
///
/// Parameters live in one flat vector, layer by layer, each layer stored as
/// its `out x in` weight matrix (row-major) followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w_off: usize,
    b_off: usize,
    n_in: usize,
    n_out: usize,
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::param(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(())
    }

    /// Uniform `±1/sqrt(fan_in)` initialization.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let mut params = Vec::with_capacity(Self::param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] + 1) * w[1] {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count(sizes)],
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        Self::check_sizes(sizes)?;
        if params.len() != Self::param_count(sizes) {
            return Err(Error::param(format!(
                "expected {} parameters for {sizes:?}, got {}",
                Self::param_count(sizes),
                params.len()
            )));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> impl Iterator<Item = Layer> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let layer = Layer {
                w_off: off,
                b_off: off + w[0] * w[1],
                n_in: w[0],
                n_out: w[1],
            };
            off += (w[0] + 1) * w[1];
            layer
        })
    }

    /// Forward pass over `rows` stacked inputs.
    pub fn forward_batch(&self, rows: usize, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != rows * self.input_dim() {
            return Err(Error::param(format!(
                "input has {} values, expected {rows} x {}",
                input.len(),
                self.input_dim()
            )));
        }
        ensure_finite("input", input)?;
        let n_layers = self.sizes.len() - 1;
        let mut x = input.to_vec();
        for (li, l) in self.layers().enumerate() {
            let mut y = vec![0.0; rows * l.n_out];
            for r in 0..rows {
                let xr = &x[r * l.n_in..(r + 1) * l.n_in];
                for o in 0..l.n_out {
                    let w = &self.params[l.w_off + o * l.n_in..l.w_off + (o + 1) * l.n_in];
                    let z = self.params[l.b_off + o] + w.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                    y[r * l.n_out + o] = if li + 1 < n_layers { z.tanh() } else { z };
                }
            }
            x = y;
        }
        Ok(x)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_batch(1, input)
    }

    /// Records the parameters as a tape leaf.
    pub fn param_leaf(&self, tape: &mut Tape) -> Var {
        tape.row(&self.params)
    }

    /// Records the parameters as a constant: no gradient flows into them.
    pub fn param_constant(&self, tape: &mut Tape) -> Var {
        tape.constant(1, self.params.len(), self.params.clone())
    }

    /// Records a forward pass of a `rows x input_dim` node, reading weights
    /// from `params` (see [`Mlp::param_leaf`]).
    pub fn forward_tape(&self, tape: &mut Tape, params: Var, x: Var) -> Var {
        assert_eq!(tape.shape(x).1, self.input_dim(), "network input width mismatch");
        let n_layers = self.sizes.len() - 1;
        let mut h = x;
        for (li, l) in self.layers().enumerate() {
            h = tape.linear(h, params, l.w_off, l.b_off, l.n_out);
            if li + 1 < n_layers {
                h = tape.tanh(h);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn param_count_matches_layout() {
        assert_eq!(Mlp::param_count(&[3, 5, 2]), 4 * 5 + 6 * 2);
        let m = Mlp::new(&[3, 5, 2], &mut seeded(0)).unwrap();
        assert_eq!(m.params().len(), 32);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&[4, 8, 8, 3]).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn single_affine_layer() {
        let m = Mlp::from_params(&[1, 1], vec![2.0, 1.0]).unwrap();
        assert_eq!(m.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = Mlp::zeros(&[2, 3]).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::Parameter(_))));
        assert!(Mlp::from_params(&[2, 3], vec![0.0; 3]).is_err());
        assert!(Mlp::zeros(&[2]).is_err());
    }

    #[test]
    fn tape_forward_matches_direct_forward() {
        let m = Mlp::new(&[3, 7, 4, 2], &mut seeded(11)).unwrap();
        let input = [0.3, -1.2, 0.8, 1.0, 0.0, -0.5];
        let direct = m.forward_batch(2, &input).unwrap();
        let mut tape = Tape::new();
        let p = m.param_leaf(&mut tape);
        let x = tape.leaf(2, 3, input.to_vec());
        let y = m.forward_tape(&mut tape, p, x);
        for (a, b) in tape.value(y).iter().zip(&direct) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
