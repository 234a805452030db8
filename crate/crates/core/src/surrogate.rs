//! Closed-form forward model of a single-turn 1:1 transformer.
//!
//! Maps a [`TransformerGeometry`] to the [`CircuitParams`] a designer would
//! specify. It plays the role of the field solver: the dataset generator uses
//! it to produce training pairs, and closed-loop validation runs predicted
//! geometries back through it.
//!
//! Units: lengths in µm, inductance in pH, capacitance in fF, frequency in GHz.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed::{self, Purpose};

/// Geometric design parameters of the transformer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformerGeometry {
    /// Primary coil trace width.
    pub w_oa: f64,
    /// Secondary coil trace width.
    pub w_ob: f64,
    /// Primary coil radius.
    pub r0: f64,
    /// Secondary coil radius.
    pub r1: f64,
    /// Spacing to the ground ring.
    pub x_gnd: f64,
    /// Input/output feed length.
    pub l_f: f64,
}

impl TransformerGeometry {
    pub const FIELDS: [&'static str; 6] = ["w_oa", "w_ob", "r0", "r1", "x_gnd", "l_f"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.w_oa, self.w_ob, self.r0, self.r1, self.x_gnd, self.l_f]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        TransformerGeometry {
            w_oa: a[0],
            w_ob: a[1],
            r0: a[2],
            r1: a[3],
            x_gnd: a[4],
            l_f: a[5],
        }
    }

    /// Checks positivity and finiteness of every field.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::FIELDS.iter().zip(self.to_array()) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGeometry(format!(
                    "{name} = {v} must be positive and finite"
                )));
            }
        }
        Ok(())
    }
}

/// Electrical parameters of the transformer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitParams {
    /// Primary inductance, pH.
    pub lp: f64,
    /// Secondary inductance, pH.
    pub ls: f64,
    /// Magnetic coupling coefficient.
    pub k: f64,
    /// Self-resonance frequency, GHz.
    pub srf: f64,
    /// Primary quality factor.
    pub qp: f64,
    /// Secondary quality factor.
    pub qs: f64,
}

impl CircuitParams {
    pub const FIELDS: [&'static str; 6] = ["lp", "ls", "k", "srf", "qp", "qs"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.lp, self.ls, self.k, self.srf, self.qp, self.qs]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        CircuitParams {
            lp: a[0],
            ls: a[1],
            k: a[2],
            srf: a[3],
            qp: a[4],
            qs: a[5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::FIELDS.iter().zip(self.to_array()) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidCircuit(format!(
                    "{name} = {v} must be positive and finite"
                )));
            }
        }
        if self.k >= 1.0 {
            return Err(Error::InvalidCircuit(format!(
                "k = {} must be below 1",
                self.k
            )));
        }
        Ok(())
    }
}

/// Physical constants of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConstants {
    /// Permeability scale, pH/µm.
    pub mu: f64,
    /// Feed-line inductance per unit length, pH/µm.
    pub alpha_f: f64,
    /// Coupling of perfectly aligned coils.
    pub k_max: f64,
    /// Exponent of the radius-ratio coupling law.
    pub gamma_k: f64,
    /// Sheet resistance, Ω/square.
    pub r_sh: f64,
    /// Frequency at which Q is evaluated, GHz.
    pub f_ref: f64,
    /// Coil-to-ground capacitance per unit area scale, fF/µm.
    pub c_a: f64,
    /// Feed capacitance per unit length, fF/µm.
    pub c_f: f64,
    /// Ground-proximity length scale for Q degradation, µm.
    pub x_ref: f64,
}

impl Default for SurrogateConstants {
    fn default() -> Self {
        SurrogateConstants {
            mu: 1.2566,
            alpha_f: 2.0,
            k_max: 0.9,
            gamma_k: 3.5,
            r_sh: 0.043,
            f_ref: 30.0,
            c_a: 0.36,
            c_f: 0.10,
            x_ref: 20.0,
        }
    }
}

impl SurrogateConstants {
    pub const KEYS: [&'static str; 9] = [
        "mu", "alpha_f", "k_max", "gamma_k", "r_sh", "f_ref", "c_a", "c_f", "x_ref",
    ];

    /// Overrides one constant by name.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Parse(format!(
                "surrogate constant {key} must be positive, got {value}"
            )));
        }
        let slot = match key {
            "mu" => &mut self.mu,
            "alpha_f" => &mut self.alpha_f,
            "k_max" => &mut self.k_max,
            "gamma_k" => &mut self.gamma_k,
            "r_sh" => &mut self.r_sh,
            "f_ref" => &mut self.f_ref,
            "c_a" => &mut self.c_a,
            "c_f" => &mut self.c_f,
            "x_ref" => &mut self.x_ref,
            _ => return Err(Error::Parse(format!("unknown surrogate constant {key}"))),
        };
        *slot = value;
        Ok(())
    }
}

/// Sampling box for geometries. `r1` is drawn relative to `r0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryBounds {
    pub width: (f64, f64),
    pub r0: (f64, f64),
    /// Range of the ratio r1 / r0.
    pub radius_ratio: (f64, f64),
    pub r1_max: f64,
    pub x_gnd: (f64, f64),
    pub l_f: (f64, f64),
}

impl Default for GeometryBounds {
    fn default() -> Self {
        GeometryBounds {
            width: (2.0, 16.0),
            r0: (35.0, 70.0),
            radius_ratio: (1.0, 1.5),
            r1_max: 85.0,
            x_gnd: (50.0, 90.0),
            l_f: (10.0, 35.0),
        }
    }
}

impl GeometryBounds {
    /// Projects a geometry onto the sampling box. `r1` is clamped after `r0`.
    pub fn clamp(&self, g: &TransformerGeometry) -> TransformerGeometry {
        let r0 = clamp(g.r0, self.r0);
        let r1_hi = (r0 * self.radius_ratio.1).min(self.r1_max);
        let r1_lo = (r0 * self.radius_ratio.0).min(r1_hi);
        TransformerGeometry {
            w_oa: clamp(g.w_oa, self.width),
            w_ob: clamp(g.w_ob, self.width),
            r0,
            r1: clamp(g.r1, (r1_lo, r1_hi)),
            x_gnd: clamp(g.x_gnd, self.x_gnd),
            l_f: clamp(g.l_f, self.l_f),
        }
    }

    pub fn contains(&self, g: &TransformerGeometry) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        let r1_hi = (g.r0 * self.radius_ratio.1).min(self.r1_max);
        within(g.w_oa, self.width)
            && within(g.w_ob, self.width)
            && within(g.r0, self.r0)
            && within(g.r1, (g.r0 * self.radius_ratio.0, r1_hi))
            && within(g.x_gnd, self.x_gnd)
            && within(g.l_f, self.l_f)
    }
}

fn clamp(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if v.is_nan() {
        return 0.5 * (lo + hi);
    }
    v.clamp(lo, hi)
}

fn wheeler_loop(mu: f64, radius: f64, width: f64) -> Result<f64> {
    let arg = 8.0 * radius / width;
    if !(arg > E * E) {
        return Err(Error::Domain(format!(
            "log term ln(8r/w) - 2 is not positive (8r/w = {arg}, need > e^2)"
        )));
    }
    Ok(mu * radius * (arg.ln() - 2.0))
}

/// Evaluates the surrogate at `g`.
pub fn forward_model(g: &TransformerGeometry, c: &SurrogateConstants) -> Result<CircuitParams> {
    g.validate()?;
    let lp = wheeler_loop(c.mu, g.r0, g.w_oa)? + c.alpha_f * g.l_f;
    let ls = wheeler_loop(c.mu, g.r1, g.w_ob)? + c.alpha_f * g.l_f;
    if !(lp > 0.0 && ls > 0.0) {
        return Err(Error::Domain(format!(
            "non-positive inductance (lp = {lp}, ls = {ls}); need 8r/w > e^2 = {}",
            E * E
        )));
    }

    let k = c.k_max * (g.r0.min(g.r1) / g.r0.max(g.r1)).powf(c.gamma_k);

    // fF
    let cp = c.c_a * (2.0 * PI * g.r0 * g.w_oa) / g.x_gnd + c.c_f * g.l_f;
    let lc = lp * 1e-12 * cp * 1e-15;
    if !(lc > 0.0) {
        return Err(Error::Domain(format!("sqrt argument L*C = {lc}")));
    }
    let srf = 1.0 / (2.0 * PI * lc.sqrt()) * 1e-9;

    let rp = c.r_sh * (2.0 * PI * g.r0) / g.w_oa;
    let rs = c.r_sh * (2.0 * PI * g.r1) / g.w_ob;
    let ground = 1.0 - (-g.x_gnd / c.x_ref).exp();
    let omega = 2.0 * PI * c.f_ref * 1e9;
    let qp = omega * lp * 1e-12 / rp * ground;
    let qs = omega * ls * 1e-12 / rs * ground;

    Ok(CircuitParams {
        lp,
        ls,
        k,
        srf,
        qp,
        qs,
    })
}

/// Draws a geometry uniformly from `bounds`.
pub fn sample_geometry<R: Rng + ?Sized>(rng: &mut R, bounds: &GeometryBounds) -> TransformerGeometry {
    let mut uniform = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
    let w_oa = uniform(bounds.width);
    let w_ob = uniform(bounds.width);
    let r0 = uniform(bounds.r0);
    let rho = uniform(bounds.radius_ratio);
    let x_gnd = uniform(bounds.x_gnd);
    let l_f = uniform(bounds.l_f);
    TransformerGeometry {
        w_oa,
        w_ob,
        r0,
        r1: (r0 * rho).min(bounds.r1_max),
        x_gnd,
        l_f,
    }
}

/// Options for dataset generation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GenerateOptions {
    pub constants: SurrogateConstants,
    pub bounds: GeometryBounds,
    /// Standard deviation of multiplicative Gaussian noise on the circuit
    /// parameters. Zero keeps every row exactly on the surrogate.
    pub noise_sigma: f64,
}

/// Generates `n` (circuit, geometry) pairs. Row `i` depends only on
/// `(seed, i)`, so the result is independent of thread scheduling.
pub fn generate_pairs(
    n: usize,
    seed: u64,
    opts: &GenerateOptions,
) -> Result<Vec<(CircuitParams, TransformerGeometry)>> {
    if n == 0 {
        return Err(Error::InvalidDataset("dataset size must be at least 1".into()));
    }
    if !(opts.noise_sigma >= 0.0 && opts.noise_sigma.is_finite()) {
        return Err(Error::InvalidDataset(format!(
            "noise sigma {} must be non-negative",
            opts.noise_sigma
        )));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::derived_rng(seed, Purpose::Sampling, i as u64);
            let g = sample_geometry(&mut rng, &opts.bounds);
            let mut c = forward_model(&g, &opts.constants)?;
            if opts.noise_sigma > 0.0 {
                let mut nrng = seed::derived_rng(seed, Purpose::Noise, i as u64);
                let normal = Normal::new(0.0, opts.noise_sigma)
                    .map_err(|e| Error::InvalidDataset(e.to_string()))?;
                let mut a = c.to_array();
                for v in a.iter_mut() {
                    *v *= 1.0 + normal.sample(&mut nrng);
                }
                a[2] = a[2].min(0.999_999);
                c = CircuitParams::from_array(a);
            }
            Ok((c, g))
        })
        .collect()
}
