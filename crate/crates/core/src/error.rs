use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// One problem found while validating a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    /// Dotted path of the offending entry, e.g. `bodies[1].material`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// Collected configuration errors (validation is not fail-fast).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration error(s)", self.0.len())?;
        for issue in &self.0 {
            write!(f, "\n  - {issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Config(ConfigErrors),

    #[error("grid axis {axis}: extent {extent} mm is not an integer multiple of h = {h} mm")]
    GridSpacing { axis: char, extent: f64, h: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("point ({x}, {y}) lies outside the grid")]
    OutOfDomain { x: f64, y: f64 },

    #[error("material point {particle} left the grid at step {step} (position {x}, {y})")]
    ParticleEscaped {
        particle: usize,
        step: usize,
        x: f64,
        y: f64,
    },

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("phase-field solve did not converge after {iterations} iterations (residual {residual:.3e}, target {target:.3e})")]
    SolverDiverged {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("discrete system is not positive definite ({0})")]
    Indefinite(String),

    #[error("energy blow-up at step {step}: total {energy:.6e} mJ exceeds twice the bound {bound:.6e} mJ")]
    EnergyBlowUp { step: usize, energy: f64, bound: f64 },

    #[error("{count} contact constraint violation(s); first: {first}")]
    ConstraintViolation { count: usize, first: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config(ConfigErrors(vec![ConfigIssue {
            path: path.into(),
            message: message.into(),
        }]))
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
