//! MLP surrogate that predicts DP PSF pairs from (u, v, normalized inverse
//! depth). Generic over f32/f64 so the same code path serves fast training
//! and finite-difference verification.

use crate::error::{Error, Result};
use crate::psf::{as_normalized, normalize, CameraRig, DpPsf, Normalization, ObjectPoint, PsfGrid};
use crate::sensor::pixel_of;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Element type for network math. GEMM dispatches to the single-threaded
/// BLAS-style kernels so results are deterministic.
pub trait Scalar:
    Copy
    + PartialOrd
    + Default
    + Send
    + Sync
    + std::fmt::Debug
    + Add<Output = Self>
    + AddAssign
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    /// C = alpha * A(m x k) * B(k x n) + beta * C, with explicit strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            unsafe fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                beta: Self,
                c: *mut Self,
                rsc: isize,
                csc: isize,
            ) {
                $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Dense layer, weights row-major (out_dim x in_dim).
#[derive(Debug, Clone)]
pub struct Layer<T: Scalar> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

/// ReLU-hidden, linear-output multilayer perceptron.
#[derive(Debug, Clone)]
pub struct Mlp<T: Scalar> {
    pub ks: usize,
    pub layers: Vec<Layer<T>>,
}

pub const HIDDEN_WIDTH: usize = 512;
pub const HIDDEN_LAYERS: usize = 5;
pub const INPUT_DIM: usize = 3;

impl<T: Scalar> Mlp<T> {
    /// Fan-in uniform init, zero biases; dims 3 -> 512x5 -> 2*ks*ks.
    pub fn init(ks: usize, seed: u64) -> Result<Self> {
        let mut dims = vec![INPUT_DIM];
        dims.extend(std::iter::repeat(HIDDEN_WIDTH).take(HIDDEN_LAYERS));
        dims.push(2 * ks * ks);
        Self::init_with_dims(ks, &dims, seed)
    }

    pub fn init_with_dims(ks: usize, dims: &[usize], seed: u64) -> Result<Self> {
        if ks == 0 || ks % 2 == 0 {
            return Err(Error::InvalidArgument("kernel size must be odd".into()));
        }
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument("bad layer dims".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|d| {
                let (i, o) = (d[0], d[1]);
                let bound = (1.0 / i as f64).sqrt();
                Layer {
                    in_dim: i,
                    out_dim: o,
                    w: (0..i * o)
                        .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
                        .collect(),
                    b: vec![T::ZERO; o],
                }
            })
            .collect();
        Ok(Mlp { ks, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flattened parameters, layer order, weights before biases.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                p.len()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let (nw, nb) = (l.w.len(), l.b.len());
            l.w.copy_from_slice(&p[at..at + nw]);
            at += nw;
            l.b.copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Forward pass over a row-major (batch x in_dim) matrix; returns the
    /// post-activation value of every layer (input first, logits last).
    fn forward_trace(&self, x: &[T], batch: usize) -> Result<Vec<Vec<T>>> {
        if x.len() != batch * self.input_dim() {
            return Err(Error::ShapeMismatch("input size".into()));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (li, l) in self.layers.iter().enumerate() {
            let prev = acts.last().unwrap();
            // Y = X * W^T + b; W is (out x in) row-major, so W^T reads with
            // row stride 1 and column stride in_dim.
            let mut y = vec![T::ZERO; batch * l.out_dim];
            unsafe {
                T::gemm(
                    batch,
                    l.in_dim,
                    l.out_dim,
                    T::ONE,
                    prev.as_ptr(),
                    l.in_dim as isize,
                    1,
                    l.w.as_ptr(),
                    1,
                    l.in_dim as isize,
                    T::ZERO,
                    y.as_mut_ptr(),
                    l.out_dim as isize,
                    1,
                );
            }
            let last = li + 1 == self.layers.len();
            for row in 0..batch {
                for o in 0..l.out_dim {
                    let v = &mut y[row * l.out_dim + o];
                    *v += l.b[o];
                    if !last && *v < T::ZERO {
                        *v = T::ZERO;
                    }
                }
            }
            acts.push(y);
        }
        Ok(acts)
    }

    pub fn forward_batch(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        Ok(self.forward_trace(x, batch)?.pop().unwrap())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.forward_batch(x, 1)
    }

    /// Mean-squared-error loss over the batch and its gradient in the same
    /// flattened layout as [`Mlp::params`].
    pub fn loss_and_grad(&self, x: &[T], y: &[T], batch: usize) -> Result<(f64, Vec<T>)> {
        if y.len() != batch * self.output_dim() {
            return Err(Error::ShapeMismatch("target size".into()));
        }
        let acts = self.forward_trace(x, batch)?;
        let out = acts.last().unwrap();
        let n_inv = T::from_f64(1.0 / out.len() as f64);
        let mut loss = 0.0;
        // dL/dout for L = mean((out - y)^2).
        let two = T::from_f64(2.0);
        let mut delta: Vec<T> = out
            .iter()
            .zip(y)
            .map(|(&o, &t)| {
                let d = o - t;
                loss += (d * d).to_f64();
                two * d * n_inv
            })
            .collect();
        loss /= out.len() as f64;

        let mut grads: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for (li, l) in self.layers.iter().enumerate().rev() {
            let prev = &acts[li];
            let mut g = vec![T::ZERO; l.w.len() + l.b.len()];
            // dW (out x in) = delta^T (out x batch) * prev (batch x in).
            unsafe {
                T::gemm(
                    l.out_dim,
                    batch,
                    l.in_dim,
                    T::ONE,
                    delta.as_ptr(),
                    1,
                    l.out_dim as isize,
                    prev.as_ptr(),
                    l.in_dim as isize,
                    1,
                    T::ZERO,
                    g.as_mut_ptr(),
                    l.in_dim as isize,
                    1,
                );
            }
            for row in 0..batch {
                for o in 0..l.out_dim {
                    g[l.w.len() + o] += delta[row * l.out_dim + o];
                }
            }
            if li > 0 {
                // dPrev (batch x in) = delta (batch x out) * W (out x in),
                // masked by the ReLU gate of the previous activation.
                let mut dprev = vec![T::ZERO; batch * l.in_dim];
                unsafe {
                    T::gemm(
                        batch,
                        l.out_dim,
                        l.in_dim,
                        T::ONE,
                        delta.as_ptr(),
                        l.out_dim as isize,
                        1,
                        l.w.as_ptr(),
                        l.in_dim as isize,
                        1,
                        T::ZERO,
                        dprev.as_mut_ptr(),
                        l.in_dim as isize,
                        1,
                    );
                }
                for (d, &a) in dprev.iter_mut().zip(prev.iter()) {
                    if a <= T::ZERO {
                        *d = T::ZERO;
                    }
                }
                delta = dprev;
            }
            grads.push(g);
        }
        grads.reverse();
        Ok((loss, grads.concat()))
    }
}

/// Training set: row-major inputs (n x 3) and targets (n x 2*ks*ks),
/// targets jointly max-normalized per sample.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ks: usize,
    pub n: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

pub fn dataset_from_grid(rig: &CameraRig, grid: &PsfGrid) -> Result<Dataset> {
    let ks = grid.ks;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut n = 0;
    for rec in &grid.records {
        let Some(psf) = &rec.psf else { continue };
        if psf.ks != ks {
            return Err(Error::ShapeMismatch("mixed kernel sizes in grid".into()));
        }
        let maxed = normalize(psf, Normalization::MaxNormalized)?;
        inputs.extend([rec.u, rec.v, rig.z_norm(rec.depth)]);
        targets.extend(maxed.left.iter().chain(&maxed.right));
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no usable PSFs in grid".into()));
    }
    Ok(Dataset {
        ks,
        n,
        inputs,
        targets,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub iters: usize,
    pub batch: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iters: 20_000,
            batch: 128,
            lr_start: 1e-4,
            lr_end: 1e-6,
            seed: 0,
        }
    }
}

/// Adam with a cosine learning-rate schedule. Returns the per-iteration
/// loss trace.
pub fn train<T: Scalar>(mlp: &mut Mlp<T>, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if data.ks != mlp.ks {
        return Err(Error::ShapeMismatch("dataset/model kernel size".into()));
    }
    if cfg.batch == 0 || cfg.iters == 0 {
        return Err(Error::InvalidArgument("empty training schedule".into()));
    }
    let in_dim = mlp.input_dim();
    let out_dim = mlp.output_dim();
    let np = mlp.param_count();
    let mut m = vec![0.0f64; np];
    let mut v = vec![0.0f64; np];
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = mlp.params();
    let mut losses = Vec::with_capacity(cfg.iters);

    let mut bx = vec![T::ZERO; cfg.batch * in_dim];
    let mut by = vec![T::ZERO; cfg.batch * out_dim];
    for t in 0..cfg.iters {
        for s in 0..cfg.batch {
            let pick = rng.gen_range(0..data.n);
            for d in 0..in_dim {
                bx[s * in_dim + d] = T::from_f64(data.inputs[pick * in_dim + d]);
            }
            for d in 0..out_dim {
                by[s * out_dim + d] = T::from_f64(data.targets[pick * out_dim + d]);
            }
        }
        let (loss, grad) = mlp.loss_and_grad(&bx, &by, cfg.batch)?;
        losses.push(loss);

        let progress = t as f64 / cfg.iters as f64;
        let lr = cfg.lr_end
            + 0.5 * (cfg.lr_start - cfg.lr_end) * (1.0 + (std::f64::consts::PI * progress).cos());
        let bc1 = 1.0 - b1.powi(t as i32 + 1);
        let bc2 = 1.0 - b2.powi(t as i32 + 1);
        for i in 0..np {
            let g = grad[i].to_f64();
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let step = lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            params[i] = T::from_f64(params[i].to_f64() - step);
        }
        mlp.set_params(&params)?;
    }
    Ok(losses)
}

/// Predicts a sum-normalized DP PSF pair at an object point. Negative
/// outputs are clamped to zero before normalization; the window anchor is
/// the pinhole projection of the point.
pub fn predict<T: Scalar>(mlp: &Mlp<T>, rig: &CameraRig, point: &ObjectPoint) -> Result<DpPsf> {
    let (u, v, depth) = as_normalized(rig, point)?;
    let x = [
        T::from_f64(u),
        T::from_f64(v),
        T::from_f64(rig.z_norm(depth)),
    ];
    let out = mlp.forward(&x)?;
    let kk = mlp.ks * mlp.ks;
    let clamp = |vals: &[T]| -> Vec<f64> {
        vals.iter().map(|&x| x.to_f64().max(0.0)).collect()
    };
    let raw = DpPsf {
        ks: mlp.ks,
        left: clamp(&out[..kk]),
        right: clamp(&out[kk..]),
        anchor: pinhole_anchor(rig, u, v, depth),
        missed_count: 0,
        out_of_window: 0,
        normalization: Normalization::RawCounts,
    };
    normalize(&raw, Normalization::SumNormalized).map_err(|_| Error::DegeneratePrediction)
}

/// Pinhole image of the object point, binned to the pixel grid.
fn pinhole_anchor(
    rig: &CameraRig,
    u: f64,
    v: f64,
    depth: f64,
) -> Option<crate::sensor::PixelIndex> {
    let (x_max, y_max) = rig.field_extent(depth);
    let efl = rig.efl();
    let d_f = rig.focus_distance * 1000.0;
    let gap = efl * d_f / (d_f - efl);
    let scale = -gap / (depth * 1000.0);
    pixel_of(&rig.sensor, [u * x_max * scale, v * y_max * scale]).map(|(idx, _)| idx)
}

const MAGIC: &[u8; 6] = b"DPMLP\x01";
const ACT_RELU: u8 = 0;

pub fn save_mlp<T: Scalar, W: Write>(out: &mut W, mlp: &Mlp<T>) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[ACT_RELU])?;
    out.write_all(&(mlp.ks as u32).to_le_bytes())?;
    out.write_all(&(mlp.layers.len() as u32).to_le_bytes())?;
    for l in &mlp.layers {
        out.write_all(&(l.in_dim as u32).to_le_bytes())?;
        out.write_all(&(l.out_dim as u32).to_le_bytes())?;
        for x in l.w.iter().chain(&l.b) {
            out.write_all(&(x.to_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_mlp<T: Scalar, R: Read>(input: &mut R) -> Result<Mlp<T>> {
    let mut magic = [0u8; 6];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated weights header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad weights magic".into()));
    }
    let mut act = [0u8; 1];
    input.read_exact(&mut act)?;
    if act[0] != ACT_RELU {
        return Err(Error::Format(format!("unknown activation {}", act[0])));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let ks = u32::from_le_bytes(b4) as usize;
    if ks == 0 || ks % 2 == 0 {
        return Err(Error::Format(format!("invalid kernel size {ks}")));
    }
    input.read_exact(&mut b4)?;
    let n_layers = u32::from_le_bytes(b4) as usize;
    if n_layers == 0 {
        return Err(Error::Format("no layers".into()));
    }
    let mut layers = Vec::with_capacity(n_layers);
    let mut prev_out = None;
    for _ in 0..n_layers {
        input.read_exact(&mut b4)?;
        let in_dim = u32::from_le_bytes(b4) as usize;
        input.read_exact(&mut b4)?;
        let out_dim = u32::from_le_bytes(b4) as usize;
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Format("zero layer dimension".into()));
        }
        if let Some(p) = prev_out {
            if p != in_dim {
                return Err(Error::Format("layer dimension chain mismatch".into()));
            }
        }
        prev_out = Some(out_dim);
        let mut vals = vec![T::ZERO; in_dim * out_dim + out_dim];
        for x in vals.iter_mut() {
            input.read_exact(&mut b4)?;
            *x = T::from_f64(f32::from_le_bytes(b4) as f64);
        }
        let b = vals.split_off(in_dim * out_dim);
        layers.push(Layer {
            in_dim,
            out_dim,
            w: vals,
            b,
        });
    }
    if layers.last().unwrap().out_dim != 2 * ks * ks {
        return Err(Error::Format("output dimension does not match ks".into()));
    }
    Ok(Mlp { ks, layers })
}
