//! Parameter storage, forward pass and backpropagation.
//!
//! All parameters live in one flat vector. The order is fixed: for each
//! layer `l = 1..=L+1`, its weight matrix (row-major, `out × in`) followed by
//! its bias; then, for each shortcut that needs one in declaration order, its
//! projection matrix (row-major, `target_width × source_width`). Gradients and
//! optimizer moments share this layout.

use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::arch::{Architecture, ProjectionMode};
use super::loss::LossKind;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Weight,
    Bias,
    Projection,
}

/// A contiguous block of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    /// Weight and bias segment for each layer.
    pub layers: Vec<(Segment, Segment)>,
    /// Projection segment for each shortcut, if it has one.
    pub projections: Vec<Option<Segment>>,
    pub len: usize,
}

impl Layout {
    pub fn new(arch: &Architecture) -> Self {
        let mut offset = 0;
        let mut take = |kind, rows, cols| {
            let s = Segment {
                kind,
                offset,
                rows,
                cols,
            };
            offset += rows * cols;
            s
        };
        let layers = (1..=arch.depth())
            .map(|l| {
                let (i, o) = (arch.layer_input_dim(l), arch.layer_output_dim(l));
                (take(SegmentKind::Weight, o, i), take(SegmentKind::Bias, 1, o))
            })
            .collect();
        let projections = arch
            .shortcuts
            .iter()
            .map(|s| {
                arch.needs_projection(s).then(|| {
                    take(
                        SegmentKind::Projection,
                        arch.layer_input_dim(s.to),
                        arch.layer_input_dim(s.from),
                    )
                })
            })
            .collect();
        Layout {
            layers,
            projections,
            len: offset,
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w, b])
            .chain(self.projections.iter().flatten())
    }
}

/// How the weight-decay penalty `(w/2)‖θ‖²` enters training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecayMode {
    /// Shrink parameters by `(1 - ηw)` inside the optimizer step; the
    /// gradient carries the data loss only.
    #[default]
    Decoupled,
    /// Add `w·θ` to the gradient.
    Coupled,
}

impl std::str::FromStr for DecayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "decoupled" => Ok(DecayMode::Decoupled),
            "coupled" => Ok(DecayMode::Coupled),
            _ => Err(Error::Parse(format!("unknown decay mode {s:?}"))),
        }
    }
}

/// Network parameters together with their architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub layout: Layout,
    pub params: Vec<f64>,
}

/// Intermediate values kept by the forward pass for backpropagation.
pub struct ForwardCache {
    /// Effective input of each layer, shortcuts included.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    /// Whether each hidden unit is active, for every row, layer by layer.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.pre.iter().flat_map(|z| z.iter().map(|&v| v > 0.0)).collect()
    }
}

impl Model {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let params = vec![0.0; layout.len];
        Ok(Model {
            arch,
            layout,
            params,
        })
    }

    /// He-normal weights and projections, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut model = Model::zeros(arch)?;
        let mut rng = seed::rng(seed);
        let segments: Vec<Segment> = model.layout.segments().cloned().collect();
        for seg in segments {
            if seg.kind == SegmentKind::Bias {
                continue;
            }
            fill_he(&mut rng, &mut model.params[seg.range()], seg.cols);
        }
        Ok(model)
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let mut model = Model::zeros(arch)?;
        if params.len() != model.layout.len {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                model.layout.len,
                params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }

    fn matrix(&self, seg: &Segment) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((seg.rows, seg.cols), &self.params[seg.range()])
            .expect("layout matches parameter vector")
    }

    fn vector(&self, seg: &Segment) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[seg.range()])
    }

    /// Whether the optimizer may update parameters in `seg`.
    pub fn is_trainable(&self, seg: &Segment) -> bool {
        !(seg.kind == SegmentKind::Projection && self.arch.projection == ProjectionMode::Fixed)
    }

    /// Weight decay covers weights and projections but not biases.
    pub fn is_decayed(seg: &Segment) -> bool {
        seg.kind != SegmentKind::Bias
    }

    /// Sum of squares of the decayed parameters.
    pub fn decayed_norm_sq(&self) -> f64 {
        self.layout
            .segments()
            .filter(|s| Model::is_decayed(s))
            .map(|s| self.params[s.range()].iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.arch.input_dim {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.arch.input_dim
            )));
        }
        let depth = self.arch.depth();
        let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth - 1);
        let mut a = x.to_owned();
        for l in 1..=depth {
            let mut u = a;
            for (si, s) in self.arch.shortcuts.iter().enumerate() {
                if s.to != l {
                    continue;
                }
                let src = &inputs[s.from - 1];
                match &self.layout.projections[si] {
                    Some(seg) => general_mat_mul(1.0, src, &self.matrix(seg).t(), 1.0, &mut u),
                    None => u += src,
                }
            }
            let (wseg, bseg) = &self.layout.layers[l - 1];
            let mut z = u.dot(&self.matrix(wseg).t());
            z += &self.vector(bseg);
            inputs.push(u);
            if l < depth {
                a = z.mapv(relu);
                pre.push(z);
            } else {
                return Ok((z, ForwardCache { inputs, pre }));
            }
        }
        unreachable!("depth >= 1")
    }

    /// Backpropagates `d_out = ∂Φ/∂ŷ` and writes `∂Φ/∂θ` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.layout.len);
        let depth = self.arch.depth();
        // Shortcut contributions to ∂Φ/∂(input of layer l), indexed by l - 1.
        let mut pending: Vec<Option<Array2<f64>>> = vec![None; depth];
        let mut dz = d_out;
        for l in (1..=depth).rev() {
            let u = &cache.inputs[l - 1];
            let (wseg, bseg) = &self.layout.layers[l - 1];
            {
                let mut gw = grad_matrix(grad, wseg);
                general_mat_mul(1.0, &dz.t(), u, 0.0, &mut gw);
            }
            for (g, s) in grad[bseg.range()].iter_mut().zip(dz.sum_axis(Axis(0))) {
                *g = s;
            }
            let mut du = dz.dot(&self.matrix(wseg));
            if let Some(extra) = pending[l - 1].take() {
                du += &extra;
            }
            for (si, s) in self.arch.shortcuts.iter().enumerate() {
                if s.to != l {
                    continue;
                }
                let src = &cache.inputs[s.from - 1];
                let contribution = match &self.layout.projections[si] {
                    Some(seg) => {
                        let mut gp = grad_matrix(grad, seg);
                        general_mat_mul(1.0, &du.t(), src, 0.0, &mut gp);
                        du.dot(&self.matrix(seg))
                    }
                    None => du.clone(),
                };
                match &mut pending[s.from - 1] {
                    Some(acc) => *acc += &contribution,
                    slot => *slot = Some(contribution),
                }
            }
            if l == 1 {
                break;
            }
            let z = &cache.pre[l - 2];
            du.zip_mut_with(z, |d, &zv| {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            });
            dz = du;
        }
    }

    /// Batch loss and its exact gradient with respect to every parameter.
    ///
    /// With [`DecayMode::Coupled`] the returned value and gradient include
    /// the penalty `(w/2)‖θ‖²` over weights and projections.
    pub fn gradient(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
        loss: LossKind,
        decay: DecayMode,
        weight_decay: f64,
    ) -> Result<(f64, Vec<f64>)> {
        if x.nrows() == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        let (y_hat, cache) = self.forward(x)?;
        let (mut value, d_out) = loss.value_and_grad(y_hat.view(), y)?;
        let mut grad = vec![0.0; self.layout.len];
        self.backward(&cache, d_out, &mut grad);
        if decay == DecayMode::Coupled && weight_decay != 0.0 {
            value += 0.5 * weight_decay * self.decayed_norm_sq();
            for seg in self.layout.segments().filter(|s| Model::is_decayed(s)) {
                for i in seg.range() {
                    grad[i] += weight_decay * self.params[i];
                }
            }
        }
        Ok((value, grad))
    }

    /// The objective whose gradient [`Model::gradient`] returns.
    pub fn objective(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
        loss: LossKind,
        decay: DecayMode,
        weight_decay: f64,
    ) -> Result<f64> {
        let y_hat = self.predict(x)?;
        let mut value = loss.value(y_hat.view(), y)?;
        if decay == DecayMode::Coupled {
            value += 0.5 * weight_decay * self.decayed_norm_sq();
        }
        Ok(value)
    }
}

fn grad_matrix<'a>(grad: &'a mut [f64], seg: &Segment) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((seg.rows, seg.cols), &mut grad[seg.range()])
        .expect("layout matches gradient vector")
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn fill_he<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64], fan_in: usize) {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    for v in out.iter_mut() {
        *v = normal.sample(rng);
    }
}
