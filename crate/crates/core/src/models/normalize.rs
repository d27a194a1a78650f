use lagrl_autodiff::{Graph, NodeId, Tensor};

use crate::error::{Error, Result};

/// Per-column affine standardization `(x − mean) / std`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: Tensor,
    pub std: Tensor,
}

impl Normalizer {
    pub fn identity(width: usize) -> Self {
        Normalizer {
            mean: Tensor::zeros(1, width),
            std: Tensor::filled(1, width, 1.0),
        }
    }

    /// Statistics over the rows of `data`; standard deviations are floored at 1e-6.
    pub fn fit(data: &Tensor) -> Result<Self> {
        let (rows, cols) = (data.rows(), data.cols());
        if rows == 0 {
            return Err(Error::Contract("cannot fit normalizer on empty data".into()));
        }
        let mut mean = vec![0.0; cols];
        for r in 0..rows {
            for (m, v) in mean.iter_mut().zip(data.row_slice(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; cols];
        for r in 0..rows {
            for ((s, v), m) in var.iter_mut().zip(data.row_slice(r)).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / rows as f64).sqrt().max(1e-6)).collect();
        Ok(Normalizer {
            mean: Tensor::row(&mean),
            std: Tensor::row(&std),
        })
    }

    pub fn width(&self) -> usize {
        self.mean.cols()
    }

    pub fn apply(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let m = g.constant(self.mean.clone());
        let s = g.constant(self.std.clone());
        let c = g.sub(x, m);
        g.div(c, s)
    }

    pub fn apply_tensor(&self, x: &Tensor) -> Tensor {
        let cols = x.cols();
        let mut out = x.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let c = k % cols;
            *v = (*v - self.mean.data()[c]) / self.std.data()[c];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_standardizes() {
        let data = Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let n = Normalizer::fit(&data).unwrap();
        assert_eq!(n.mean.data(), &[2.0, 5.0]);
        assert_eq!(n.std.data(), &[1.0, 1e-6]);
        let z = n.apply_tensor(&data);
        assert_eq!(z.data(), &[-1.0, 0.0, 1.0, 0.0]);
        let mut g = Graph::new();
        let x = g.constant(data);
        let y = n.apply(&mut g, x);
        assert_eq!(g.value(y), &z);
    }
}
