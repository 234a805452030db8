//! Predict a geometry for target circuit parameters, then re-evaluate the
//! geometry with the surrogate and compare against the target.

use ndarray::Array2;

use super::experiment::Regressor;
use crate::data::{Dataset, FEED_LENGTH, INPUT_DIM};
use crate::error::{Error, Result};
use crate::surrogate::{
    forward_model, CircuitParams, GeometryBounds, SurrogateConstants, TransformerGeometry,
};

/// Per-parameter range of circuit parameters seen in training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub min: [f64; 6],
    pub max: [f64; 6],
}

impl Envelope {
    pub fn of(ds: &Dataset) -> Self {
        let mut min = [f64::INFINITY; 6];
        let mut max = [f64::NEG_INFINITY; 6];
        for row in ds.x.rows() {
            for j in 0..INPUT_DIM {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        Envelope { min, max }
    }

    /// Names of the parameters of `c` outside the envelope.
    pub fn violations(&self, c: &CircuitParams) -> Vec<&'static str> {
        c.to_array()
            .iter()
            .enumerate()
            .filter(|&(j, v)| *v < self.min[j] || *v > self.max[j])
            .map(|(j, _)| CircuitParams::FIELDS[j])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoopOptions {
    pub constants: SurrogateConstants,
    pub bounds: GeometryBounds,
    /// Feed length used when the model does not predict one.
    pub feed_length: f64,
}

impl Default for ClosedLoopOptions {
    fn default() -> Self {
        let bounds = GeometryBounds::default();
        ClosedLoopOptions {
            constants: SurrogateConstants::default(),
            bounds,
            feed_length: 0.5 * (bounds.l_f.0 + bounds.l_f.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopResult {
    pub target: CircuitParams,
    /// Model output after clamping to the geometry bounds.
    pub predicted: TransformerGeometry,
    /// Whether clamping changed the raw prediction.
    pub clamped: bool,
    pub resynthesized: CircuitParams,
    /// `|resynthesized - target| / target` for each circuit parameter.
    pub rel_error: [f64; 6],
    /// Non-fatal problems with the target, e.g. lying outside the envelope.
    pub warnings: Vec<String>,
}

impl ClosedLoopResult {
    pub fn flagged(&self) -> bool {
        !self.warnings.is_empty()
    }
}

pub fn closed_loop_validate(
    model: &dyn Regressor,
    targets: &[CircuitParams],
    envelope: Option<&Envelope>,
    opts: &ClosedLoopOptions,
) -> Result<Vec<ClosedLoopResult>> {
    if targets.is_empty() {
        return Ok(vec![]);
    }
    let mut x = Array2::zeros((targets.len(), INPUT_DIM));
    for (i, t) in targets.iter().enumerate() {
        t.validate().or_else(|e| match e {
            // k >= 1 is reported as a warning below rather than rejected.
            Error::InvalidCircuit(_) if t.k >= 1.0 && t.k.is_finite() => Ok(()),
            other => Err(other),
        })?;
        for (j, v) in t.to_array().into_iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    let y = model.predict(&x)?;
    let d = y.ncols();
    if !(d == 5 || d == 6) {
        return Err(Error::Shape(format!("model predicts {d} geometry values")));
    }

    let mut out = Vec::with_capacity(targets.len());
    for (i, target) in targets.iter().enumerate() {
        let row = y.row(i);
        let mut g = [0.0; 6];
        for j in 0..6 {
            g[j] = if j == FEED_LENGTH && d == 5 {
                opts.feed_length
            } else {
                row[j]
            };
        }
        let raw = TransformerGeometry::from_array(g);
        let predicted = opts.bounds.clamp(&raw);
        let resynthesized = forward_model(&predicted, &opts.constants)?;
        let mut rel_error = [0.0; 6];
        for (j, (s, t)) in resynthesized
            .to_array()
            .into_iter()
            .zip(target.to_array())
            .enumerate()
        {
            rel_error[j] = ((s - t) / t).abs();
        }

        let mut warnings = Vec::new();
        if target.k >= opts.constants.k_max {
            warnings.push(format!(
                "k = {} is not attainable (surrogate maximum {})",
                target.k, opts.constants.k_max
            ));
        }
        if let Some(env) = envelope {
            let v = env.violations(target);
            if !v.is_empty() {
                warnings.push(format!("outside training envelope: {}", v.join(", ")));
            }
        }
        out.push(ClosedLoopResult {
            target: *target,
            predicted,
            clamped: predicted != raw,
            resynthesized,
            rel_error,
            warnings,
        });
    }
    Ok(out)
}

/// CSV with target, predicted geometry, resynthesized parameters and errors.
pub fn write_results_csv<W: std::io::Write>(
    out: W,
    results: &[ClosedLoopResult],
) -> Result<()> {
    use crate::data::fmt_f64;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = Vec::new();
    header.extend(CircuitParams::FIELDS.iter().map(|f| format!("target_{f}")));
    header.extend(TransformerGeometry::FIELDS.iter().map(|f| format!("geom_{f}")));
    header.extend(CircuitParams::FIELDS.iter().map(|f| format!("synth_{f}")));
    header.extend(CircuitParams::FIELDS.iter().map(|f| format!("relerr_{f}")));
    header.push("clamped".into());
    header.push("warning".into());
    w.write_record(&header)?;
    for r in results {
        let mut rec: Vec<String> = Vec::new();
        rec.extend(r.target.to_array().iter().map(|v| fmt_f64(*v)));
        rec.extend(r.predicted.to_array().iter().map(|v| fmt_f64(*v)));
        rec.extend(r.resynthesized.to_array().iter().map(|v| fmt_f64(*v)));
        rec.extend(r.rel_error.iter().map(|v| fmt_f64(*v)));
        rec.push(r.clamped.to_string());
        rec.push(r.warnings.join("; "));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}
