use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Layer widths of the mapping network.
pub const DEFAULT_LAYERS: [usize; 6] = [3, 128, 256, 512, 512, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected 3→…→3 network; hidden layers use `activation`, the
/// output layer is linear.
///
/// Parameters live in one flat buffer: for each layer, the `in×out`
/// row-major weight matrix followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Scalar = f32> {
    sizes: Vec<usize>,
    params: Vec<T>,
    offsets: Vec<usize>,
    activation: Activation,
}

/// Per-layer activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T> {
    rows: usize,
    /// `acts[0]` is the input, `acts[l]` the (post-activation) output of layer `l`.
    acts: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

impl<T: Scalar> Mlp<T> {
    /// Fan-in scaled uniform initialization, `U(-1/√fan_in, 1/√fan_in)` for
    /// weights and biases.
    pub fn new(sizes: &[usize], activation: Activation, seed: u64) -> Self {
        let mut mlp = Self::zeros(sizes, activation);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..mlp.layer_count() {
            let bound = 1.0 / (sizes[l] as f64).sqrt();
            let (w, b) = mlp.layer_range(l);
            for p in &mut mlp.params[w.start..b.end] {
                *p = T::lit(rng.random_range(-bound..bound));
            }
        }
        mlp
    }

    /// Paper-sized network with ReLU hidden layers.
    pub fn init(seed: u64) -> Self {
        Self::new(&DEFAULT_LAYERS, Activation::Relu, seed)
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output layers");
        assert!(sizes.iter().all(|&s| s > 0), "layer widths must be positive");
        assert!(
            sizes[0] == 3 && sizes[sizes.len() - 1] == 3,
            "input and output width must be 3"
        );
        let mut offsets = vec![0];
        for w in sizes.windows(2) {
            let last = *offsets.last().unwrap();
            offsets.push(last + w[0] * w[1] + w[1]);
        }
        Self {
            sizes: sizes.to_vec(),
            params: vec![T::zero(); *offsets.last().unwrap()],
            offsets,
            activation,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start = self.offsets[l];
        let w_end = start + self.sizes[l] * self.sizes[l + 1];
        (start..w_end, w_end..self.offsets[l + 1])
    }

    /// Runs a batch of `rows` inputs (row-major `rows×3`) and keeps every
    /// layer's activations.
    pub fn forward_cached(&self, input: &[T]) -> ForwardCache<T> {
        assert_eq!(input.len() % 3, 0);
        let rows = input.len() / 3;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        for l in 0..self.layer_count() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer_range(l);
            let bias = &self.params[b];
            let mut z: Vec<T> = Vec::with_capacity(rows * n_out);
            for _ in 0..rows {
                z.extend_from_slice(bias);
            }
            T::gemm(rows, n_in, n_out, &acts[l], false, &self.params[w], false, &mut z, true);
            if l + 1 < self.layer_count() {
                match self.activation {
                    Activation::Relu => z.iter_mut().for_each(|x| *x = x.max(T::zero())),
                    Activation::Tanh => z.iter_mut().for_each(|x| *x = x.tanh()),
                }
            }
            acts.push(z);
        }
        ForwardCache { rows, acts }
    }

    pub fn forward_batch(&self, input: &[T]) -> Vec<T> {
        self.forward_cached(input).acts.pop().unwrap_or_default()
    }

    pub fn forward(&self, p: &Vec3) -> Vec3 {
        let out = self.forward_batch(&to_flat::<T>(std::slice::from_ref(p)));
        from_flat(&out)[0]
    }

    pub fn forward_points(&self, points: &[Vec3]) -> Vec<Vec3> {
        if points.is_empty() {
            return Vec::new();
        }
        from_flat(&self.forward_batch(&to_flat::<T>(points)))
    }

    /// Parameter gradient of a loss whose gradient with respect to the
    /// network output is `grad_out` (row-major `rows×3`).
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &[T]) -> Vec<T> {
        let rows = cache.rows;
        assert_eq!(grad_out.len(), rows * 3);
        let mut grads = vec![T::zero(); self.params.len()];
        let mut delta = grad_out.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer_range(l);
            let input = &cache.acts[l];
            T::gemm(n_in, rows, n_out, input, true, &delta, false, &mut grads[w.clone()], false);
            let gb = &mut grads[b];
            for row in delta.chunks_exact(n_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g = *g + *d;
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![T::zero(); rows * n_in];
            T::gemm(rows, n_out, n_in, &delta, false, &self.params[w], true, &mut prev, false);
            match self.activation {
                Activation::Relu => {
                    for (d, a) in prev.iter_mut().zip(input) {
                        if *a <= T::zero() {
                            *d = T::zero();
                        }
                    }
                }
                Activation::Tanh => {
                    for (d, a) in prev.iter_mut().zip(input) {
                        *d = *d * (T::one() - *a * *a);
                    }
                }
            }
            delta = prev;
        }
        grads
    }

    /// Precision conversion (used for checkpoints and checks).
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            sizes: self.sizes.clone(),
            params: self
                .params
                .iter()
                .map(|p| U::from_f64(p.to_f64().unwrap()).unwrap())
                .collect(),
            offsets: self.offsets.clone(),
            activation: self.activation,
        }
    }

    const MAGIC: &'static [u8; 4] = b"IMLP";

    /// Checkpoint: magic, layer count and widths (u32 LE), activation code,
    /// then every parameter as an f64 LE.
    pub fn write_checkpoint(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        w.write_all(&[self.activation.code()])?;
        for p in &self.params {
            w.write_all(&p.to_f64().unwrap().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| Error::InvalidInput(format!("checkpoint: {m}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != Self::MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> Result<usize> {
            r.read_exact(&mut u32buf).map_err(|_| bad("truncated header"))?;
            Ok(u32::from_le_bytes(u32buf) as usize)
        };
        let n = read_u32(&mut r)?;
        if !(2..=64).contains(&n) {
            return Err(bad("implausible layer count"));
        }
        let sizes = (0..n).map(|_| read_u32(&mut r)).collect::<Result<Vec<_>>>()?;
        if sizes[0] != 3 || sizes[n - 1] != 3 || sizes.contains(&0) {
            return Err(bad("layer widths must be 3-…-3 and positive"));
        }
        let mut code = [0u8; 1];
        r.read_exact(&mut code).map_err(|_| bad("truncated header"))?;
        let activation = Activation::from_code(code[0]).ok_or_else(|| bad("unknown activation"))?;
        let mut mlp = Self::zeros(&sizes, activation);
        let mut buf = [0u8; 8];
        for p in &mut mlp.params {
            r.read_exact(&mut buf).map_err(|_| bad("truncated parameters"))?;
            let v = f64::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(bad("non-finite parameter"));
            }
            *p = T::from_f64(v).unwrap();
        }
        Ok(mlp)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf).expect("writing to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(bytes.as_slice())
    }
}

pub fn to_flat<T: Scalar>(points: &[Vec3]) -> Vec<T> {
    points
        .iter()
        .flat_map(|p| [p.x, p.y, p.z])
        .map(T::lit)
        .collect()
}

pub fn from_flat<T: Scalar>(flat: &[T]) -> Vec<Vec3> {
    flat.chunks_exact(3)
        .map(|c| Vec3::new(c[0].to_f64().unwrap(), c[1].to_f64().unwrap(), c[2].to_f64().unwrap()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_deterministic() {
        let a: Mlp<f32> = Mlp::init(7);
        let b: Mlp<f32> = Mlp::init(7);
        let c: Mlp<f32> = Mlp::init(8);
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
        assert_eq!(
            a.param_count(),
            3 * 128 + 128 + 128 * 256 + 256 + 256 * 512 + 512 + 512 * 512 + 512 + 512 * 3 + 3
        );
    }

    #[test]
    fn fresh_network_is_finite_at_origin() {
        let m: Mlp<f32> = Mlp::init(1);
        let y = m.forward(&Vec3::zeros());
        assert!(y.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m: Mlp<f64> = Mlp::zeros(&DEFAULT_LAYERS, Activation::Relu);
        for p in [Vec3::new(1.0, -2.0, 3.0), Vec3::new(100.0, 0.0, -7.0)] {
            assert_eq!(m.forward(&p), Vec3::zeros());
        }
    }

    #[test]
    fn batch_preserves_order() {
        let m: Mlp<f64> = Mlp::new(&[3, 16, 16, 3], Activation::Relu, 3);
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, -(i as f64) * 0.5, 1.0)).collect();
        let batch = m.forward_points(&pts);
        for (p, y) in pts.iter().zip(&batch) {
            assert!((m.forward(p) - y).norm() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m: Mlp<f64> = Mlp::new(&[3, 8, 5, 3], Activation::Tanh, 11);
        let mut buf = Vec::new();
        m.write_checkpoint(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 * 4 + 1 + 8 * m.param_count());
        let back: Mlp<f64> = Mlp::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(Mlp::<f64>::read_checkpoint(&buf[..20]).is_err());
    }
}
