//! Central finite-difference verification of backpropagated gradients.

use ndarray::Array2;
use rand::Rng;

use super::arch::{Architecture, Shortcut};
use super::loss::LossKind;
use super::model::{DecayMode, Model, SegmentKind};
use crate::error::Result;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest relative discrepancy over the compared parameters.
    pub max_rel_error: f64,
    pub params: usize,
    /// Parameters left out because every tried step crossed a rectifier
    /// kink, where the objective is not differentiable.
    pub skipped: usize,
}

/// Finite-difference step used by [`self_test`].
pub const STEP: f64 = 1e-3;

/// Step reductions tried when a perturbation changes the activation pattern.
const SHRINKS: usize = 4;

/// Compares [`Model::gradient`] with central differences of
/// [`Model::objective`]. Differences at steps `h` and `h/2` are combined by
/// Richardson extrapolation, `(4 D(h/2) - D(h)) / 3`, which cancels the
/// `h²` error term.
///
/// The relative error of one component is `|a - f| / max(|a|, |f|, 1e-6)`;
/// the floor keeps components that are zero in both routes from dividing by
/// zero. If moving a parameter by `±h` switches any hidden unit on or off,
/// the difference straddles a kink and is retried with steps ten times
/// smaller, up to [`SHRINKS`] times.
pub fn check_gradient(
    model: &Model,
    x: &Array2<f64>,
    y: &Array2<f64>,
    loss: LossKind,
    decay: DecayMode,
    weight_decay: f64,
    h: f64,
) -> Result<GradCheck> {
    let (_, analytic) = model.gradient(x.view(), y.view(), loss, decay, weight_decay)?;
    let pattern = model.forward(x.view())?.1.activation_pattern();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    let eval = |probe: &Model| -> Result<(f64, bool)> {
        let value = probe.objective(x.view(), y.view(), loss, decay, weight_decay)?;
        let same = probe.forward(x.view())?.1.activation_pattern() == pattern;
        Ok((value, same))
    };
    for i in 0..model.params.len() {
        let orig = probe.params[i];
        let mut step = h;
        let mut fd = None;
        'shrink: for _ in 0..=SHRINKS {
            let mut central = [0.0; 2];
            for (c, s) in central.iter_mut().zip([step, step / 2.0]) {
                probe.params[i] = orig + s;
                let (plus, same_plus) = eval(&probe)?;
                probe.params[i] = orig - s;
                let (minus, same_minus) = eval(&probe)?;
                probe.params[i] = orig;
                if !(same_plus && same_minus) {
                    step /= 10.0;
                    continue 'shrink;
                }
                *c = (plus - minus) / (2.0 * s);
            }
            fd = Some((4.0 * central[1] - central[0]) / 3.0);
            break;
        }
        let Some(fd) = fd else {
            skipped += 1;
            continue;
        };
        let a = analytic[i];
        let denom = a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max((a - fd).abs() / denom);
    }
    Ok(GradCheck {
        max_rel_error: worst,
        params: model.params.len(),
        skipped,
    })
}

/// A random small architecture: up to `max_layers` hidden layers of width at
/// most `max_width`, optionally with random shortcuts.
pub fn random_architecture<R: Rng + ?Sized>(
    rng: &mut R,
    max_width: usize,
    max_layers: usize,
    with_shortcuts: bool,
) -> Architecture {
    let layers = rng.random_range(1..=max_layers);
    let hidden: Vec<usize> = (0..layers).map(|_| rng.random_range(2..=max_width)).collect();
    let output_dim = rng.random_range(1..=6);
    let mut shortcuts = Vec::new();
    if with_shortcuts {
        let last = layers + 1;
        for from in 1..last {
            for to in from + 1..=last {
                if rng.random_bool(0.35) {
                    shortcuts.push(Shortcut::new(from, to));
                }
            }
        }
        if shortcuts.is_empty() {
            shortcuts.push(Shortcut::new(1, last));
        }
    }
    Architecture::new(6, output_dim, hidden, shortcuts).expect("constructed valid")
}

/// Random inputs and strictly positive targets for gradient checks.
pub fn random_batch<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    output_dim: usize,
) -> (Array2<f64>, Array2<f64>) {
    let x = Array2::from_shape_fn((rows, 6), |_| rng.random_range(-1.5..1.5));
    let y = Array2::from_shape_fn((rows, output_dim), |_| rng.random_range(0.5..3.0));
    (x, y)
}

/// Replaces the zero initial biases by random values. With zero biases, a row
/// whose previous layer is entirely inactive has pre-activations exactly at
/// the rectifier's kink, where central differences do not measure the
/// gradient.
fn randomize_biases<R: Rng + ?Sized>(model: &mut Model, rng: &mut R) {
    let ranges: Vec<_> = model
        .layout
        .segments()
        .filter(|s| s.kind == SegmentKind::Bias)
        .map(|s| s.range())
        .collect();
    for r in ranges {
        for p in &mut model.params[r] {
            *p = rng.random_range(-0.5..0.5);
        }
    }
}

/// Runs `count` random gradient checks. The result holds the worst error and
/// the parameter and skip counts summed over all checks.
pub fn self_test(count: usize, seed: u64) -> Result<GradCheck> {
    let mut rng = seed::rng(seed);
    let mut total = GradCheck {
        max_rel_error: 0.0,
        params: 0,
        skipped: 0,
    };
    for i in 0..count {
        let arch = random_architecture(&mut rng, 16, 4, i % 2 == 1);
        let mut model = Model::init(arch, rng.random())?;
        randomize_biases(&mut model, &mut rng);
        let (x, y) = random_batch(&mut rng, 5, model.arch.output_dim);
        let loss = if i % 4 < 2 { LossKind::Smse } else { LossKind::Sdmse };
        let decay = if i % 3 == 0 { DecayMode::Coupled } else { DecayMode::Decoupled };
        let c = check_gradient(&model, &x, &y, loss, decay, 1e-2, STEP)?;
        total.max_rel_error = total.max_rel_error.max(c.max_rel_error);
        total.params += c.params;
        total.skipped += c.skipped;
    }
    Ok(total)
}
