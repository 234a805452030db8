use ndarray::{Array2, Axis};

use super::adam::{adam_step, param_groups, HyperParams, OptimizerState};
use super::arch::Architecture;
use super::loss::LossKind;
use super::model::Model;
use crate::data::{self, Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::seed::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Data loss over the whole training set after the epoch.
    pub loss: f64,
    /// `(w/2)‖θ‖²` over decayed parameters.
    pub penalty: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    pub steps: u64,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,penalty\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{}\n",
                r.epoch,
                data::fmt_f64(r.loss),
                data::fmt_f64(r.penalty)
            ));
        }
        out
    }
}

/// Runs `h.epochs` passes of mini-batch Adam on `(x, y)`.
///
/// `x` is expected to be standardized already. The model is initialized from
/// `h.seed`; batch order for epoch `e` is drawn from the same seed.
pub fn train(
    arch: &Architecture,
    x: &Array2<f64>,
    y: &Array2<f64>,
    h: &HyperParams,
    loss: LossKind,
) -> Result<(Model, TrainingLog)> {
    h.validate()?;
    arch.validate()?;
    if x.nrows() != y.nrows() || x.nrows() == 0 {
        return Err(Error::Shape(format!(
            "training set has {} inputs and {} targets",
            x.nrows(),
            y.nrows()
        )));
    }
    if y.ncols() != arch.output_dim {
        return Err(Error::Shape(format!(
            "targets have {} columns, architecture outputs {}",
            y.ncols(),
            arch.output_dim
        )));
    }
    let mut model = Model::init(arch.clone(), seed::derive(h.seed, Purpose::Init, 0))?;
    let groups = param_groups(&model);
    let mut state = OptimizerState::new(model.layout.len);
    let mut log = TrainingLog::default();
    let batch = h.batch_size.min(x.nrows());

    for epoch in 0..h.epochs {
        for idx in data::minibatches(x.nrows(), batch, h.seed, epoch) {
            let xb = x.select(Axis(0), &idx);
            let yb = y.select(Axis(0), &idx);
            let (value, grad) =
                model.gradient(xb.view(), yb.view(), loss, h.decay_mode, h.weight_decay)?;
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    step: state.t as usize,
                    loss: value,
                });
            }
            adam_step(&mut model.params, &mut state, &grad, h, &groups);
        }
        if (epoch + 1) % h.log_every == 0 || epoch + 1 == h.epochs {
            let y_hat = model.predict(x.view())?;
            let value = loss.value(y_hat.view(), y.view())?;
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step: state.t as usize,
                    loss: value,
                });
            }
            log.records.push(EpochRecord {
                epoch,
                loss: value,
                penalty: 0.5 * h.weight_decay * model.decayed_norm_sq(),
            });
        }
    }
    log.steps = state.t;
    Ok((model, log))
}

/// A trained model bundled with the input standardization it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub model: Model,
    pub standardizer: Standardizer,
}

impl Network {
    /// Fits the standardizer on `train`, then trains on the standardized inputs.
    pub fn fit(
        arch: &Architecture,
        train: &Dataset,
        h: &HyperParams,
        loss: LossKind,
    ) -> Result<(Network, TrainingLog)> {
        train.validate()?;
        let standardizer = Standardizer::fit(&train.x)?;
        let z = standardizer.apply(&train.x);
        let (model, log) = self::train(arch, &z, &train.y, h, loss)?;
        Ok((
            Network {
                model,
                standardizer,
            },
            log,
        ))
    }

    /// Predicts geometry targets for raw circuit-parameter rows.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.model.predict(self.standardizer.apply(x).view())
    }
}
