use rand::Rng;

use super::{Matrix, Real};
use crate::error::{Error, Result};

/// Negative-side slope of the hidden activations.
pub const LEAKY_SLOPE: f64 = 0.01;

pub fn leaky_relu<T: Real>(x: T) -> T {
    if x >= T::zero() {
        x
    } else {
        x * T::lit(LEAKY_SLOPE)
    }
}

fn leaky_relu_grad<T: Real>(pre: T) -> T {
    if pre >= T::zero() {
        T::one()
    } else {
        T::lit(LEAKY_SLOPE)
    }
}

/// Fully connected network: LeakyReLU on hidden layers, identity output.
///
/// All parameters live in one flat vector. Layer `l` stores its
/// `out x in` weight matrix row-major followed by its `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    dims: Vec<usize>,
    params: Vec<T>,
}

/// Activations recorded by a forward pass, needed for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Input to every layer; `inputs[0]` is the network input.
    inputs: Vec<Matrix<T>>,
    /// Pre-activation of every hidden layer.
    pre: Vec<Matrix<T>>,
    output: Matrix<T>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &Matrix<T> {
        &self.output
    }
}

impl<T: Real> Mlp<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(dims);
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w, _) = net.layer_range(l);
            for p in &mut net.params[w] {
                *p = T::lit(rng.random_range(-limit..limit));
            }
        }
        net
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least an input and an output layer");
        assert!(dims.iter().all(|&d| d > 0), "layer widths must be positive");
        let count = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Mlp { dims: dims.to_vec(), params: vec![T::zero(); count] }
    }

    /// Rebuilds a network from a flat parameter vector.
    pub fn from_params(dims: &[usize], params: Vec<T>) -> Result<Self> {
        let mut net = Self::zeros(dims);
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch { expected: net.params.len(), got: params.len() });
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("dims")
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Weight and bias index ranges of layer `l` inside the flat vector.
    fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let offset: usize = self.dims.windows(2).take(l).map(|w| w[0] * w[1] + w[1]).sum();
        let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
        let w_end = offset + fan_in * fan_out;
        (offset..w_end, w_end..w_end + fan_out)
    }

    /// Sets the last layer's weights and biases to zero.
    pub fn zero_output_layer(&mut self) {
        let last = self.num_layers() - 1;
        let (w, b) = self.layer_range(last);
        for p in &mut self.params[w.start..b.end] {
            *p = T::zero();
        }
    }

    /// Polyak averaging: `self = (1 - tau) self + tau other`.
    pub fn soft_update(&mut self, other: &Mlp<T>, tau: T) {
        debug_assert_eq!(self.dims, other.dims);
        let keep = T::one() - tau;
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            *p = keep * *p + tau * *q;
        }
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.cols() });
        }
        Ok(())
    }

    /// Forward pass on a single input vector.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_batch(&Matrix::row_vector(x))?.into_vec())
    }

    /// Forward pass on a batch (one sample per row).
    pub fn forward_batch(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let mut act = x.clone();
        for l in 0..self.num_layers() {
            let mut z = self.affine(l, &act);
            if l + 1 < self.num_layers() {
                for v in z.as_mut_slice() {
                    *v = leaky_relu(*v);
                }
            }
            act = z;
        }
        Ok(act)
    }

    /// Forward pass that keeps what [`Mlp::backward`] needs.
    pub fn forward_cached(&self, x: &Matrix<T>) -> Result<ForwardCache<T>> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut pre = Vec::with_capacity(self.num_layers() - 1);
        let mut act = x.clone();
        for l in 0..self.num_layers() {
            let z = self.affine(l, &act);
            inputs.push(act);
            if l + 1 < self.num_layers() {
                let mut a = z.clone();
                for v in a.as_mut_slice() {
                    *v = leaky_relu(*v);
                }
                pre.push(z);
                act = a;
            } else {
                act = z;
            }
        }
        Ok(ForwardCache { inputs, pre, output: act })
    }

    fn affine(&self, l: usize, x: &Matrix<T>) -> Matrix<T> {
        let (w, b) = self.layer_range(l);
        let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
        let batch = x.rows();
        let mut z = Matrix::zeros(batch, fan_out);
        for i in 0..batch {
            z.row_mut(i).copy_from_slice(&self.params[b.clone()]);
        }
        // z (batch x out) += x (batch x in) * W^T
        unsafe {
            T::gemm(
                batch,
                fan_in,
                fan_out,
                T::one(),
                x.as_slice().as_ptr(),
                fan_in as isize,
                1,
                self.params[w].as_ptr(),
                1,
                fan_in as isize,
                T::one(),
                z.as_mut_slice().as_mut_ptr(),
                fan_out as isize,
                1,
            );
        }
        z
    }

    /// Backpropagates `grad_output` (dLoss/dOutput, one row per sample)
    /// through the cached pass. Parameter gradients are accumulated into
    /// `grads` when given. Returns dLoss/dInput.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_output: &Matrix<T>, mut grads: Option<&mut [T]>) -> Matrix<T> {
        assert_eq!(grad_output.rows(), cache.output.rows(), "batch size");
        assert_eq!(grad_output.cols(), self.output_dim(), "output width");
        if let Some(g) = grads.as_deref() {
            assert_eq!(g.len(), self.params.len(), "gradient buffer length");
        }
        let batch = grad_output.rows();
        let mut delta = grad_output.clone();
        for l in (0..self.num_layers()).rev() {
            if l + 1 < self.num_layers() {
                for (d, &z) in delta.as_mut_slice().iter_mut().zip(cache.pre[l].as_slice()) {
                    *d = *d * leaky_relu_grad(z);
                }
            }
            let (w, b) = self.layer_range(l);
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let input = &cache.inputs[l];
            if let Some(g) = grads.as_deref_mut() {
                // dW (out x in) += delta^T (out x batch) * input (batch x in)
                unsafe {
                    T::gemm(
                        fan_out,
                        batch,
                        fan_in,
                        T::one(),
                        delta.as_slice().as_ptr(),
                        1,
                        fan_out as isize,
                        input.as_slice().as_ptr(),
                        fan_in as isize,
                        1,
                        T::one(),
                        g[w.clone()].as_mut_ptr(),
                        fan_in as isize,
                        1,
                    );
                }
                let gb = &mut g[b];
                for i in 0..batch {
                    for (acc, &d) in gb.iter_mut().zip(delta.row(i)) {
                        *acc = *acc + d;
                    }
                }
            }
            // dX (batch x in) = delta (batch x out) * W (out x in)
            let mut dx = Matrix::zeros(batch, fan_in);
            unsafe {
                T::gemm(
                    batch,
                    fan_out,
                    fan_in,
                    T::one(),
                    delta.as_slice().as_ptr(),
                    fan_out as isize,
                    1,
                    self.params[w].as_ptr(),
                    fan_in as isize,
                    1,
                    T::zero(),
                    dx.as_mut_slice().as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            delta = dx;
        }
        delta
    }

    /// Mean-reduced parameter gradients of a batch loss.
    ///
    /// `loss_grad` maps the batch output to `(loss, dLoss/dOutput)`, where
    /// the loss is already the batch mean.
    pub fn gradients<F>(&self, x: &Matrix<T>, loss_grad: F) -> Result<(T, Vec<T>)>
    where
        F: FnOnce(&Matrix<T>) -> (T, Matrix<T>),
    {
        let cache = self.forward_cached(x)?;
        let (loss, g_out) = loss_grad(cache.output());
        let mut grads = vec![T::zero(); self.params.len()];
        self.backward(&cache, &g_out, Some(&mut grads));
        Ok((loss, grads))
    }

    /// Converts parameters to another element type.
    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            dims: self.dims.clone(),
            params: self.params.iter().map(|p| U::from_f64(p.to_f64().expect("finite")).expect("cast")).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn leaky_relu_values() {
        assert_eq!(leaky_relu(-1.0f64), -0.01);
        assert_eq!(leaky_relu(2.0f64), 2.0);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[4, 8, 3]);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::<f64>::zeros(&[4, 8, 3]);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::DimensionMismatch { expected: 4, got: 2 })));
    }

    #[test]
    fn bias_gradient_of_identity_loss_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::<f64>::new(&[3, 1], &mut rng);
        let x = Matrix::row_vector(&[0.3, -0.2, 0.9]);
        let (_, g) = net.gradients(&x, |y| (y.get(0, 0), Matrix::from_vec(1, 1, vec![1.0]))).unwrap();
        assert_eq!(g[3], 1.0);
        assert_eq!(&g[..3], &[0.3, -0.2, 0.9]);
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::<f64>::new(&[3, 5, 2], &mut rng);
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]]);
        let (_, g) = net.gradients(&x, |y| (7.0, Matrix::zeros(y.rows(), y.cols()))).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::<f32>::new(&[6, 32, 32, 2], &mut rng);
        let x = [0.1f32, 0.5, -0.3, 0.8, 0.0, 1.0];
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn batch_matches_single_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::<f64>::new(&[3, 7, 2], &mut rng);
        let rows = [[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [-0.4, 0.0, 2.0]];
        let batch = net.forward_batch(&Matrix::from_rows(&rows)).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let single = net.forward(r).unwrap();
            for j in 0..2 {
                assert!((single[j] - batch.get(i, j)).abs() < 1e-12);
            }
        }
    }
}
