use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible design: {constraint}")]
    InfeasibleDesign { constraint: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("netlist construction: {0}")]
    Netlist(String),

    #[error("newton iteration failed to converge at t = {time:.6e} s (residual {residual:.3e})")]
    StepFailure { time: f64, residual: f64 },

    #[error("singular MNA matrix: no independent equation for unknown '{unknown}'")]
    SingularMatrix { unknown: String },
}

impl Error {
    /// True for errors caused by bad inputs rather than numeric trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidGeometry(_)
                | Error::Domain(_)
                | Error::InvalidModel(_)
                | Error::Netlist(_)
        )
    }
}
