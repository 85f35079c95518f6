use std::fmt;

/// What went wrong on a specific line of an edge-list file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    MissingHeader,
    Malformed(String),
    ProbabilityOutOfRange(String),
    SelfLoop(u32),
    DuplicateEdge(u32, u32),
    NodeOutOfRange { node: u64, n: usize },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::MissingHeader => write!(f, "missing node-count header"),
            ParseErrorKind::Malformed(s) => write!(f, "malformed line: {s:?}"),
            ParseErrorKind::ProbabilityOutOfRange(s) => {
                write!(f, "probability {s} is outside [0, 1]")
            }
            ParseErrorKind::SelfLoop(u) => write!(f, "self-loop on node {u}"),
            ParseErrorKind::DuplicateEdge(u, v) => write!(f, "duplicate edge {u} -> {v}"),
            ParseErrorKind::NodeOutOfRange { node, n } => {
                write!(f, "node id {node} is out of range for n = {n}")
            }
        }
    }
}

/// The quantity an exact routine refused to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resource {
    /// Binary outcomes (fractional edges, shadow bits) to enumerate.
    Bits,
    /// Canonical partial-realisation states in backward induction.
    States,
    Nodes,
    Edges,
    OutDegree,
    Budget,
    /// Joint item-state assignments of an SMSM instance.
    JointStates,
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Resource::Bits => "enumerated bits",
            Resource::States => "oracle states",
            Resource::Nodes => "nodes",
            Resource::Edges => "edges",
            Resource::OutDegree => "out-degree",
            Resource::Budget => "budget",
            Resource::JointStates => "joint item states",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },

    #[error("exact computation needs {required} {resource}, limit is {limit}")]
    EnumerationTooLarge {
        resource: Resource,
        required: u64,
        limit: u64,
    },

    #[error("inconsistent partial realisation: {0}")]
    InconsistentRealisation(String),

    #[error("policy violation: {0}")]
    PolicyViolation(String),

    #[error("malformed decision tree: {0}")]
    MalformedTree(String),

    #[error("item {0} is already selected")]
    ItemAlreadySelected(usize),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn too_large(resource: Resource, required: u64, limit: u64) -> Self {
        Error::EnumerationTooLarge {
            resource,
            required,
            limit,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for refusals by a resource guard, as opposed to bad input.
    pub fn is_resource_guard(&self) -> bool {
        matches!(self, Error::EnumerationTooLarge { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
