use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or settings that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A NaN or infinity appeared; `node` names where.
    #[error("non-finite value at {node}")]
    NonFinite { node: String },

    #[error("infeasible constraints: {0}")]
    Infeasible(Infeasibility),

    /// An exhaustive oracle declined an instance that is too large.
    #[error("refused: {0}")]
    Refused(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self.root(), Error::Infeasible(_))
    }
}

/// The aggregate that made a set of fairness bounds unsatisfiable.
#[derive(Debug, Clone, PartialEq)]
pub enum Infeasibility {
    /// `lower > upper` for a single (group, cluster) cell.
    EmptyCell {
        group: usize,
        cluster: usize,
        lower: usize,
        upper: usize,
    },
    /// Cluster size outside `[sum of lower bounds, sum of upper bounds]`.
    Cluster {
        cluster: usize,
        lower_sum: usize,
        size: usize,
        upper_sum: usize,
    },
    /// Group size outside `[sum of lower bounds, sum of upper bounds]`.
    Group {
        group: usize,
        lower_sum: usize,
        size: usize,
        upper_sum: usize,
    },
    /// Flow solver could not route all supply.
    Network { routed: i64, required: i64 },
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::EmptyCell {
                group,
                cluster,
                lower,
                upper,
            } => write!(
                f,
                "group {group} in cluster {cluster}: lower bound {lower} exceeds upper bound {upper}"
            ),
            Infeasibility::Cluster {
                cluster,
                lower_sum,
                size,
                upper_sum,
            } => write!(
                f,
                "cluster {cluster} has size {size} outside the bound totals [{lower_sum}, {upper_sum}]"
            ),
            Infeasibility::Group {
                group,
                lower_sum,
                size,
                upper_sum,
            } => write!(
                f,
                "group {group} has size {size} outside the bound totals [{lower_sum}, {upper_sum}]"
            ),
            Infeasibility::Network { routed, required } => {
                write!(f, "only {routed} of {required} units of flow could be routed")
            }
        }
    }
}
