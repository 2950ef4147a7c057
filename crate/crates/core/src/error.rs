use thiserror::Error;

use crate::TrajId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature `{feature}` required by term `{term}` is missing")]
    MissingFeature { term: String, feature: String },

    #[error("feature `{feature}` required by term `{term}` is absent (None)")]
    AbsentFeature { term: String, feature: String },

    #[error("parameter `{name}` = {value} lies outside its active domain [{min}, {max}]")]
    OutOfDomain {
        name: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("parameter vector does not match the reward spec: {0}")]
    ParamMismatch(String),

    #[error("invalid reward spec: {0}")]
    InvalidSpec(String),

    #[error("invalid feature record: {0}")]
    InvalidRecord(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory {id}: {source}")]
    AtTrajectory {
        id: TrajId,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unknown trajectory id {0}")]
    UnknownTrajectory(TrajId),

    #[error("invalid preference data: {0}")]
    InvalidPreference(String),

    #[error("rankings are not over the same trajectory set: {0}")]
    RankingMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("posterior is -inf at the initial state: {0}")]
    DegenerateChain(String),

    #[error("stage rules: {0}")]
    Stage(String),

    #[error("could not parse oracle reply: {reason}")]
    Parse { reason: String, reply: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("proposal validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("template placeholder `{0}` could not be resolved")]
    Template(String),

    #[error("run directory: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_trajectory(self, id: TrajId) -> Self {
        Error::AtTrajectory {
            id,
            source: Box::new(self),
        }
    }
}
