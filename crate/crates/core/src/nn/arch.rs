use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// An additive skip: the input of layer `from` is added to the input of
/// layer `to`. Layers are numbered from 1; the output layer is `L + 1`
/// for `L` hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Shortcut {
    pub from: usize,
    pub to: usize,
}

impl Shortcut {
    pub const fn new(from: usize, to: usize) -> Self {
        Shortcut { from, to }
    }
}

/// How shortcuts between layers of different width are bridged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionMode {
    /// A trained linear map.
    #[default]
    Learned,
    /// A random linear map drawn at initialization and never updated.
    Fixed,
}

impl FromStr for ProjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "learned" => Ok(ProjectionMode::Learned),
            "fixed" => Ok(ProjectionMode::Fixed),
            _ => Err(Error::Parse(format!("unknown projection mode {s:?}"))),
        }
    }
}

/// Dense network shape: layer widths plus shortcut connections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub shortcuts: Vec<Shortcut>,
    pub projection: ProjectionMode,
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        hidden: Vec<usize>,
        shortcuts: Vec<Shortcut>,
    ) -> Result<Self> {
        let arch = Architecture {
            input_dim,
            output_dim,
            hidden,
            shortcuts,
            projection: ProjectionMode::Learned,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_projection(mut self, mode: ProjectionMode) -> Self {
        self.projection = mode;
        self
    }

    /// Number of affine layers, hidden plus output.
    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }

    /// Width of the input to layer `l` (1-based).
    pub fn layer_input_dim(&self, l: usize) -> usize {
        if l == 1 {
            self.input_dim
        } else {
            self.hidden[l - 2]
        }
    }

    pub fn layer_output_dim(&self, l: usize) -> usize {
        if l == self.depth() {
            self.output_dim
        } else {
            self.hidden[l - 1]
        }
    }

    /// Whether shortcut `s` needs a projection matrix.
    pub fn needs_projection(&self, s: &Shortcut) -> bool {
        self.layer_input_dim(s.from) != self.layer_input_dim(s.to)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Architecture("zero-width input or output".into()));
        }
        if let Some(i) = self.hidden.iter().position(|&w| w == 0) {
            return Err(Error::Architecture(format!("hidden layer {} has width 0", i + 1)));
        }
        let last = self.depth();
        for (i, s) in self.shortcuts.iter().enumerate() {
            if s.from < 1 || s.to > last || s.from >= s.to {
                return Err(Error::Architecture(format!(
                    "shortcut ({}, {}) must satisfy 1 <= from < to <= {last}",
                    s.from, s.to
                )));
            }
            if i > 0 && self.shortcuts[i - 1] >= *s {
                return Err(Error::Architecture(
                    "shortcuts must be strictly increasing without duplicates".into(),
                ));
            }
        }
        Ok(())
    }

    /// Total parameter count, including every projection matrix.
    pub fn parameter_count(&self) -> usize {
        let layers: usize = (1..=self.depth())
            .map(|l| (self.layer_input_dim(l) + 1) * self.layer_output_dim(l))
            .sum();
        layers + self.projection_parameter_count()
    }

    pub fn projection_parameter_count(&self) -> usize {
        self.shortcuts
            .iter()
            .filter(|s| self.needs_projection(s))
            .map(|s| self.layer_input_dim(s.from) * self.layer_input_dim(s.to))
            .sum()
    }

    /// Parameters updated by the optimizer.
    pub fn trainable_parameter_count(&self) -> usize {
        match self.projection {
            ProjectionMode::Learned => self.parameter_count(),
            ProjectionMode::Fixed => self.parameter_count() - self.projection_parameter_count(),
        }
    }
}

/// The named network configurations compared in the experiments.
///
/// `Fn(i)` is a plain network of `i` hidden layers; `N5`, `N6` and `N7` add
/// the shortcut patterns (1,5), (1,6) and (1,3),(3,5),(5,7).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    Fn(usize),
    N5,
    N6,
    N7,
}

impl Preset {
    pub fn hidden_layers(self) -> usize {
        match self {
            Preset::Fn(i) => i,
            Preset::N5 => 5,
            Preset::N6 => 6,
            Preset::N7 => 7,
        }
    }

    pub fn shortcuts(self) -> Vec<Shortcut> {
        match self {
            Preset::Fn(_) => vec![],
            Preset::N5 => vec![Shortcut::new(1, 5)],
            Preset::N6 => vec![Shortcut::new(1, 6)],
            Preset::N7 => vec![Shortcut::new(1, 3), Shortcut::new(3, 5), Shortcut::new(5, 7)],
        }
    }

    pub fn build(self, input_dim: usize, output_dim: usize, width: usize) -> Result<Architecture> {
        Architecture::new(
            input_dim,
            output_dim,
            vec![width; self.hidden_layers()],
            self.shortcuts(),
        )
    }

    pub fn is_residual(self) -> bool {
        !matches!(self, Preset::Fn(_))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Fn(i) => write!(f, "FN{i}"),
            Preset::N5 => f.write_str("N5"),
            Preset::N6 => f.write_str("N6"),
            Preset::N7 => f.write_str("N7"),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('_', "");
        match up.as_str() {
            "N5" => Ok(Preset::N5),
            "N6" => Ok(Preset::N6),
            "N7" => Ok(Preset::N7),
            _ => up
                .strip_prefix("FN")
                .and_then(|i| i.parse::<usize>().ok())
                .filter(|&i| i >= 1)
                .map(Preset::Fn)
                .ok_or_else(|| Error::Parse(format!("unknown architecture preset {s:?}"))),
        }
    }
}
