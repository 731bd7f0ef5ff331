//! Trainable layers (KAN, FasterKAN, linear/MLP), whole-model forward pass,
//! and analytic per-sample backpropagation.
//!
//! Parameter flattening order is fixed per layer kind and documented on each
//! struct; `flatten`/`set_params` round-trip exactly.

use crate::basis::{silu, silu_derivative, BSplineGrid, RswafGrid};
use crate::error::{Error, Result};
use crate::loss::{per_example_grad, LossKind, PerExampleTarget};
use crate::matrix::DenseMatrix;
use crate::rng::Stream;

const LAYERNORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

/// Affine layer with optional ReLU.
/// Flattening order: weights (row-major `[out][in]`), then bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl LinearLayer {
    pub fn new(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
            activation,
        }
    }
}

/// KAN layer: output j is the sum over inputs i of the residual activation
/// phi_{j,i}(x_i) = w_b[j,i] silu(x_i) + w_s[j,i] spline_{j,i}(x_i).
/// All edges share one B-spline grid; each edge owns its coefficients.
/// Flattening order: coeffs (`[out][in][basis]`), then w_b, then w_s
/// (both `[out][in]`).
#[derive(Debug, Clone, PartialEq)]
pub struct KanLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub grid: BSplineGrid,
    pub coeffs: Vec<f64>,
    pub w_b: Vec<f64>,
    pub w_s: Vec<f64>,
}

impl KanLayer {
    pub fn new(n_in: usize, n_out: usize, grid: BSplineGrid) -> Self {
        let nb = grid.num_basis();
        Self {
            n_in,
            n_out,
            grid,
            coeffs: vec![0.0; n_out * n_in * nb],
            w_b: vec![0.0; n_out * n_in],
            w_s: vec![0.0; n_out * n_in],
        }
    }
}

/// FasterKAN layer: LayerNorm over the inputs (trainable gain/offset),
/// RSWAF basis expansion of each normalized input, then a bias-free linear
/// map, mirroring the reference fasterKAN layer so parameter counts line up.
/// Flattening order: ln_gamma, ln_beta, weights (`[out][in * num_grids]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FasterKanLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub grid: RswafGrid,
    pub ln_gamma: Vec<f64>,
    pub ln_beta: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FasterKanLayer {
    pub fn new(n_in: usize, n_out: usize, grid: RswafGrid) -> Self {
        let ng = grid.num_grids();
        Self {
            n_in,
            n_out,
            grid,
            ln_gamma: vec![1.0; n_in],
            ln_beta: vec![0.0; n_in],
            weights: vec![0.0; n_out * n_in * ng],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Kan(KanLayer),
    FasterKan(FasterKanLayer),
    Linear(LinearLayer),
}

impl Layer {
    pub fn n_in(&self) -> usize {
        match self {
            Layer::Kan(l) => l.n_in,
            Layer::FasterKan(l) => l.n_in,
            Layer::Linear(l) => l.n_in,
        }
    }

    pub fn n_out(&self) -> usize {
        match self {
            Layer::Kan(l) => l.n_out,
            Layer::FasterKan(l) => l.n_out,
            Layer::Linear(l) => l.n_out,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Kan(l) => l.coeffs.len() + l.w_b.len() + l.w_s.len(),
            Layer::FasterKan(l) => l.ln_gamma.len() + l.ln_beta.len() + l.weights.len(),
            Layer::Linear(l) => l.weights.len() + l.bias.len(),
        }
    }

    fn append_params(&self, out: &mut Vec<f64>) {
        match self {
            Layer::Kan(l) => {
                out.extend_from_slice(&l.coeffs);
                out.extend_from_slice(&l.w_b);
                out.extend_from_slice(&l.w_s);
            }
            Layer::FasterKan(l) => {
                out.extend_from_slice(&l.ln_gamma);
                out.extend_from_slice(&l.ln_beta);
                out.extend_from_slice(&l.weights);
            }
            Layer::Linear(l) => {
                out.extend_from_slice(&l.weights);
                out.extend_from_slice(&l.bias);
            }
        }
    }

    fn load_params(&mut self, flat: &[f64]) {
        fn take<'a>(flat: &'a [f64], off: &mut usize, dst: &mut [f64]) {
            dst.copy_from_slice(&flat[*off..*off + dst.len()]);
            *off += dst.len();
        }
        let mut off = 0;
        match self {
            Layer::Kan(l) => {
                take(flat, &mut off, &mut l.coeffs);
                take(flat, &mut off, &mut l.w_b);
                take(flat, &mut off, &mut l.w_s);
            }
            Layer::FasterKan(l) => {
                take(flat, &mut off, &mut l.ln_gamma);
                take(flat, &mut off, &mut l.ln_beta);
                take(flat, &mut off, &mut l.weights);
            }
            Layer::Linear(l) => {
                take(flat, &mut off, &mut l.weights);
                take(flat, &mut off, &mut l.bias);
            }
        }
    }

    fn init(&mut self, rng: &mut Stream) {
        match self {
            Layer::Kan(l) => {
                for c in l.coeffs.iter_mut() {
                    *c = rng.gaussian(0.1);
                }
                l.w_b.fill(1.0);
                l.w_s.fill(1.0);
            }
            Layer::FasterKan(l) => {
                let std = 1.0 / ((l.n_in * l.grid.num_grids()) as f64).sqrt();
                for w in l.weights.iter_mut() {
                    *w = rng.gaussian(std);
                }
                l.ln_gamma.fill(1.0);
                l.ln_beta.fill(0.0);
            }
            Layer::Linear(l) => {
                let std = 1.0 / (l.n_in as f64).sqrt();
                for w in l.weights.iter_mut() {
                    *w = rng.gaussian(std);
                }
                l.bias.fill(0.0);
            }
        }
    }

    fn forward_sample(&self, x: &[f64]) -> Result<(Vec<f64>, LayerCache)> {
        match self {
            Layer::Kan(l) => {
                let nb = l.grid.num_basis();
                let mut basis = Vec::with_capacity(l.n_in);
                let mut silu_vals = Vec::with_capacity(l.n_in);
                for &xi in x {
                    basis.push(l.grid.basis(xi)?);
                    silu_vals.push(silu(xi));
                }
                let mut spline_vals = vec![0.0; l.n_out * l.n_in];
                let mut y = vec![0.0; l.n_out];
                for j in 0..l.n_out {
                    let mut acc = 0.0;
                    for i in 0..l.n_in {
                        let c = &l.coeffs[(j * l.n_in + i) * nb..(j * l.n_in + i + 1) * nb];
                        let sp: f64 = c.iter().zip(&basis[i]).map(|(c, b)| c * b).sum();
                        spline_vals[j * l.n_in + i] = sp;
                        acc += l.w_b[j * l.n_in + i] * silu_vals[i]
                            + l.w_s[j * l.n_in + i] * sp;
                    }
                    y[j] = acc;
                }
                Ok((
                    y,
                    LayerCache::Kan {
                        x: x.to_vec(),
                        basis,
                        silu_vals,
                        spline_vals,
                    },
                ))
            }
            Layer::FasterKan(l) => {
                let n = l.n_in as f64;
                let mean = x.iter().sum::<f64>() / n;
                let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let inv_std = 1.0 / (var + LAYERNORM_EPS).sqrt();
                let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
                let z: Vec<f64> = xhat
                    .iter()
                    .zip(l.ln_gamma.iter().zip(&l.ln_beta))
                    .map(|(xh, (g, b))| g * xh + b)
                    .collect();
                let ng = l.grid.num_grids();
                let mut h = Vec::with_capacity(l.n_in * ng);
                for &zi in &z {
                    h.extend(l.grid.basis(zi));
                }
                let mut y = vec![0.0; l.n_out];
                for (j, yj) in y.iter_mut().enumerate() {
                    let w = &l.weights[j * h.len()..(j + 1) * h.len()];
                    *yj = w.iter().zip(&h).map(|(w, h)| w * h).sum();
                }
                Ok((
                    y,
                    LayerCache::FasterKan {
                        xhat,
                        inv_std,
                        z,
                        h,
                    },
                ))
            }
            Layer::Linear(l) => {
                let mut pre = vec![0.0; l.n_out];
                for (j, p) in pre.iter_mut().enumerate() {
                    let w = &l.weights[j * l.n_in..(j + 1) * l.n_in];
                    *p = l.bias[j] + w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
                }
                let y = match l.activation {
                    Activation::None => pre.clone(),
                    Activation::Relu => pre.iter().map(|v| v.max(0.0)).collect(),
                };
                Ok((
                    y,
                    LayerCache::Linear {
                        x: x.to_vec(),
                        pre,
                    },
                ))
            }
        }
    }

    /// Accumulate this layer's parameter gradient into `grad` (its flat
    /// slice) and return the gradient w.r.t. the layer input.
    fn backward_sample(&self, cache: &LayerCache, dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        match (self, cache) {
            (
                Layer::Kan(l),
                LayerCache::Kan {
                    x,
                    basis,
                    silu_vals,
                    spline_vals,
                },
            ) => {
                let nb = l.grid.num_basis();
                let n_edges = l.n_out * l.n_in;
                let (gc, rest) = grad.split_at_mut(n_edges * nb);
                let (gwb, gws) = rest.split_at_mut(n_edges);
                let mut dx = vec![0.0; l.n_in];
                // d basis / dx and d silu / dx per input, shared across outputs.
                let dbasis: Vec<Vec<f64>> = x
                    .iter()
                    .map(|&xi| l.grid.basis_derivative(xi).expect("finite input"))
                    .collect();
                let dsilu: Vec<f64> = x.iter().map(|&xi| silu_derivative(xi)).collect();
                for j in 0..l.n_out {
                    let dyj = dy[j];
                    if dyj == 0.0 {
                        continue;
                    }
                    for i in 0..l.n_in {
                        let e = j * l.n_in + i;
                        gwb[e] += dyj * silu_vals[i];
                        gws[e] += dyj * spline_vals[e];
                        let ws = l.w_s[e];
                        let gce = &mut gc[e * nb..(e + 1) * nb];
                        for (g, b) in gce.iter_mut().zip(&basis[i]) {
                            *g += dyj * ws * b;
                        }
                        let c = &l.coeffs[e * nb..(e + 1) * nb];
                        let dspline: f64 =
                            c.iter().zip(&dbasis[i]).map(|(c, db)| c * db).sum();
                        dx[i] += dyj * (l.w_b[e] * dsilu[i] + ws * dspline);
                    }
                }
                dx
            }
            (
                Layer::FasterKan(l),
                LayerCache::FasterKan {
                    xhat,
                    inv_std,
                    z,
                    h,
                },
            ) => {
                let ng = l.grid.num_grids();
                let hd = h.len();
                let (ggamma, rest) = grad.split_at_mut(l.n_in);
                let (gbeta, gw) = rest.split_at_mut(l.n_in);
                // Linear part.
                let mut dh = vec![0.0; hd];
                for j in 0..l.n_out {
                    let dyj = dy[j];
                    if dyj == 0.0 {
                        continue;
                    }
                    let w = &l.weights[j * hd..(j + 1) * hd];
                    let gwj = &mut gw[j * hd..(j + 1) * hd];
                    for p in 0..hd {
                        gwj[p] += dyj * h[p];
                        dh[p] += dyj * w[p];
                    }
                }
                // Basis part: dz_i = sum_m dh[i*ng+m] * rswaf'(z_i)[m].
                let mut dxhat = vec![0.0; l.n_in];
                for i in 0..l.n_in {
                    let db = l.grid.basis_derivative(z[i]);
                    let dz: f64 = dh[i * ng..(i + 1) * ng]
                        .iter()
                        .zip(&db)
                        .map(|(dh, db)| dh * db)
                        .sum();
                    ggamma[i] += dz * xhat[i];
                    gbeta[i] += dz;
                    dxhat[i] = dz * l.ln_gamma[i];
                }
                // LayerNorm backward.
                let n = l.n_in as f64;
                let sum_dxhat: f64 = dxhat.iter().sum();
                let sum_dxhat_xhat: f64 = dxhat.iter().zip(xhat).map(|(d, x)| d * x).sum();
                (0..l.n_in)
                    .map(|i| {
                        inv_std / n * (n * dxhat[i] - sum_dxhat - xhat[i] * sum_dxhat_xhat)
                    })
                    .collect()
            }
            (Layer::Linear(l), LayerCache::Linear { x, pre }) => {
                let (gw, gb) = grad.split_at_mut(l.n_in * l.n_out);
                let mut dx = vec![0.0; l.n_in];
                for j in 0..l.n_out {
                    let mut dpre = dy[j];
                    if l.activation == Activation::Relu && pre[j] <= 0.0 {
                        dpre = 0.0;
                    }
                    if dpre == 0.0 {
                        continue;
                    }
                    gb[j] += dpre;
                    let w = &l.weights[j * l.n_in..(j + 1) * l.n_in];
                    let gwj = &mut gw[j * l.n_in..(j + 1) * l.n_in];
                    for i in 0..l.n_in {
                        gwj[i] += dpre * x[i];
                        dx[i] += dpre * w[i];
                    }
                }
                dx
            }
            _ => unreachable!("cache kind matches layer kind by construction"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Kan {
        x: Vec<f64>,
        basis: Vec<Vec<f64>>,
        silu_vals: Vec<f64>,
        spline_vals: Vec<f64>,
    },
    FasterKan {
        xhat: Vec<f64>,
        inv_std: f64,
        z: Vec<f64>,
        h: Vec<f64>,
    },
    Linear {
        x: Vec<f64>,
        pre: Vec<f64>,
    },
}

/// Per-layer caches for every sample of a forward pass.
pub struct ForwardCache {
    pub per_sample: Vec<Vec<LayerCache>>,
}

/// A flattened per-sample parameter gradient, the unit that gets clipped
/// and noised.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatGradient {
    pub values: Vec<f64>,
    pub sample_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<Layer>,
}

impl Model {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("model needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].n_out() != w[1].n_in() {
                return Err(Error::Shape(format!(
                    "adjacent layers disagree: {} outputs feed {} inputs",
                    w[0].n_out(),
                    w[1].n_in()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().unwrap().n_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn init(&mut self, rng: &mut Stream) {
        for l in &mut self.layers {
            l.init(rng);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            l.append_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.param_count();
            l.load_params(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn forward_sample(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<LayerCache>)> {
        if x.len() != self.n_in() {
            return Err(Error::Shape(format!(
                "model expects {} inputs, got {}",
                self.n_in(),
                x.len()
            )));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for l in &self.layers {
            let (y, c) = l.forward_sample(&cur)?;
            caches.push(c);
            cur = y;
        }
        Ok((cur, caches))
    }

    /// Per-example outputs plus the caches `backward` needs.
    pub fn forward(&self, batch_x: &DenseMatrix) -> Result<(DenseMatrix, ForwardCache)> {
        if batch_x.cols() != self.n_in() {
            return Err(Error::Shape(format!(
                "model expects {} inputs, batch has {} columns",
                self.n_in(),
                batch_x.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(batch_x.rows(), self.n_out());
        let mut per_sample = Vec::with_capacity(batch_x.rows());
        for r in 0..batch_x.rows() {
            let (y, caches) = self.forward_sample(batch_x.row(r))?;
            out.row_mut(r).copy_from_slice(&y);
            per_sample.push(caches);
        }
        Ok((out, ForwardCache { per_sample }))
    }

    /// Predictions only (no caches retained).
    pub fn predict(&self, batch_x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward(batch_x)?.0)
    }

    /// Gradient of the given output cotangent w.r.t. all parameters, for
    /// one sample whose forward caches are supplied.
    pub fn backward_sample(&self, caches: &[LayerCache], dloss_dy: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.param_count()];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }
        let mut dy = dloss_dy.to_vec();
        for (idx, l) in self.layers.iter().enumerate().rev() {
            let slice = &mut grad[offsets[idx]..offsets[idx] + l.param_count()];
            dy = l.backward_sample(&caches[idx], &dy, slice);
        }
        grad
    }
}

/// Targets for a batch, matching the loss kind.
#[derive(Debug, Clone, Copy)]
pub enum BatchTargets<'a> {
    Regression(&'a DenseMatrix),
    Classes(&'a [usize]),
}

impl<'a> BatchTargets<'a> {
    pub fn len(&self) -> usize {
        match self {
            BatchTargets::Regression(m) => m.rows(),
            BatchTargets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn per_example(&self, i: usize) -> PerExampleTarget<'a> {
        match self {
            BatchTargets::Regression(m) => PerExampleTarget::Regression(m.row(i)),
            BatchTargets::Classes(c) => PerExampleTarget::Class(c[i]),
        }
    }
}

/// One flattened gradient per example, for the unreduced single-example
/// loss, so the mean of per-sample gradients equals the gradient of the
/// batch-mean loss. Also returns the mean per-example loss.
pub fn per_sample_gradients(
    model: &Model,
    batch_x: &DenseMatrix,
    targets: BatchTargets<'_>,
    kind: LossKind,
) -> Result<(Vec<FlatGradient>, f64)> {
    if batch_x.rows() != targets.len() {
        return Err(Error::Shape(format!(
            "{} feature rows vs {} targets",
            batch_x.rows(),
            targets.len()
        )));
    }
    let mut grads = Vec::with_capacity(batch_x.rows());
    let mut loss_sum = 0.0;
    for i in 0..batch_x.rows() {
        let (y, caches) = model.forward_sample(batch_x.row(i))?;
        let (loss, dy) = per_example_grad(kind, &y, targets.per_example(i))?;
        loss_sum += loss;
        grads.push(FlatGradient {
            values: model.backward_sample(&caches, &dy),
            sample_index: i,
        });
    }
    let mean_loss = loss_sum / batch_x.rows().max(1) as f64;
    Ok((grads, mean_loss))
}

pub fn count_parameters(model: &Model) -> usize {
    model.param_count()
}

/// MLP with ReLU hidden layers and a linear output layer.
pub fn build_mlp(widths: &[usize]) -> Result<Model> {
    if widths.len() < 2 {
        return Err(Error::Argument("need at least input and output width".into()));
    }
    let mut layers = Vec::new();
    for (idx, w) in widths.windows(2).enumerate() {
        let act = if idx + 2 == widths.len() {
            Activation::None
        } else {
            Activation::Relu
        };
        layers.push(Layer::Linear(LinearLayer::new(w[0], w[1], act)));
    }
    Model::new(layers)
}

pub fn build_linear(n_in: usize, n_out: usize) -> Result<Model> {
    Model::new(vec![Layer::Linear(LinearLayer::new(
        n_in,
        n_out,
        Activation::None,
    ))])
}

pub fn build_kan(
    widths: &[usize],
    grid_size: usize,
    degree: usize,
    lo: f64,
    hi: f64,
) -> Result<Model> {
    if widths.len() < 2 {
        return Err(Error::Argument("need at least input and output width".into()));
    }
    let mut layers = Vec::new();
    for w in widths.windows(2) {
        let grid = BSplineGrid::new(grid_size, degree, lo, hi)?;
        layers.push(Layer::Kan(KanLayer::new(w[0], w[1], grid)));
    }
    Model::new(layers)
}

pub fn build_fasterkan(
    widths: &[usize],
    num_grids: usize,
    grid_min: f64,
    grid_max: f64,
    inv_denominator: f64,
) -> Result<Model> {
    if widths.len() < 2 {
        return Err(Error::Argument("need at least input and output width".into()));
    }
    let mut layers = Vec::new();
    for w in widths.windows(2) {
        let grid = RswafGrid::new(num_grids, grid_min, grid_max, inv_denominator)?;
        layers.push(Layer::FasterKan(FasterKanLayer::new(w[0], w[1], grid)));
    }
    Model::new(layers)
}
