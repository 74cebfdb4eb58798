use thiserror::Error;

/// Errors produced by the corpus-synthesis and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate concept id `{0}`")]
    DuplicateId(String),

    #[error("dangling relation targets: {}", .0.join(", "))]
    DanglingTargets(Vec<String>),

    #[error("unknown concept id `{0}`")]
    UnknownConcept(String),

    #[error("empty relation set: at least one traversal relation is required")]
    EmptyRelations,

    #[error("relation `{0}` cannot be used for domain exploration")]
    NonTraversalRelation(String),

    #[error("form `{form}` has no gibberish mapping yet")]
    UnresolvedDependency { form: String },

    #[error("cannot translate an empty form")]
    EmptyForm,

    #[error("could not generate a fresh gibberish word for `{word}` after {retries} retries")]
    GenerationExhausted { word: String, retries: u32 },

    #[error("`{0}` is not in the image of the form map")]
    UnknownGibberish(String),

    #[error("propagation exceeded its iteration bound of {bound}")]
    IterationBoundExceeded { bound: usize },

    #[error("no valid corruption candidate for pair ({hyponym}, {hypernym})")]
    CorruptionSampling { hyponym: String, hypernym: String },

    #[error("instance set is empty")]
    NoInstances,

    #[error("max_in_flight must be at least 1")]
    InvalidConcurrency,

    #[error("variant mismatch: expected {expected}, found instance {instance} with {found}")]
    VariantMismatch {
        expected: String,
        found: String,
        instance: String,
    },

    #[error("no prediction for instance `{0}`")]
    MissingPrediction(String),

    #[error("instance sets are misaligned; unmatched keys: {}", .0.join(", "))]
    Misaligned(Vec<String>),

    #[error("transport: {0}")]
    Transport(String),

    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
