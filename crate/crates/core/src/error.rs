use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdent { name: String, offset: usize },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("no admissible control at node {node} (point ({x:.6}, {y:.6}), step {delta})")]
    NoAdmissibleControl { node: usize, x: f64, y: f64, delta: f64 },

    #[error("point ({0:.6}, {1:.6}) lies outside the domain")]
    OutsideDomain(f64, f64),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("table range exceeded: {0}")]
    TableRange(String),

    #[error("regime mismatch: {0}")]
    Regime(String),

    #[error("bisection failed: {0}")]
    Bracket(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Fmt(#[from] std::fmt::Error),
}
