use mfchaos_core::Error;

/// Process exit status. Numeric order doubles as severity when several
/// sweep points fail in different ways.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Success,
    Failure,
    Config,
    BlowUp,
    Unreliable,
    Consistency,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Failure => 1,
            Status::Config => 2,
            Status::BlowUp => 3,
            Status::Unreliable => 4,
            Status::Consistency => 5,
        }
    }

    pub fn worst(self, other: Status) -> Status {
        self.max(other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Success => "ok",
            Status::Failure => "failure",
            Status::Config => "config_error",
            Status::BlowUp => "blow_up",
            Status::Unreliable => "estimator_unreliable",
            Status::Consistency => "consistency_failure",
        }
    }
}

impl From<&Error> for Status {
    fn from(e: &Error) -> Self {
        match e {
            Error::BlowUp { .. } => Status::BlowUp,
            Error::Io(_) => Status::Failure,
            Error::Domain(_)
            | Error::DimensionMismatch { .. }
            | Error::Singularity { .. }
            | Error::Config(_)
            | Error::Stability { .. }
            | Error::InsufficientData(_)
            | Error::Mismatch(_)
            | Error::HistogramDimension { .. }
            | Error::Json(_) => Status::Config,
        }
    }
}

/// Maps an error chain to a status: the first core error found decides,
/// anything else is a config error if it came from parsing, a generic
/// failure otherwise.
pub fn status_of(err: &anyhow::Error) -> Status {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return e.into();
        }
        if let Some(s) = cause.downcast_ref::<StatusError>() {
            return s.0;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() || cause.downcast_ref::<csv::Error>().is_some() {
            return Status::Config;
        }
    }
    Status::Failure
}

/// Carries an explicit status through `anyhow`.
#[derive(Debug, thiserror::Error)]
#[error("{1}")]
pub struct StatusError(pub Status, pub String);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_the_contract() {
        let codes: Vec<i32> = [Status::Success, Status::Config, Status::BlowUp, Status::Unreliable, Status::Consistency]
            .iter()
            .map(|s| s.code())
            .collect();
        assert_eq!(codes, [0, 2, 3, 4, 5]);
        assert_eq!(Status::Unreliable.worst(Status::BlowUp), Status::Unreliable);
    }

    #[test]
    fn error_chain_is_searched() {
        let e = anyhow::Error::new(Error::BlowUp { replica: 0, step: 1, particle: 2 }).context("simulating");
        assert_eq!(status_of(&e), Status::BlowUp);
        let e = anyhow::Error::new(StatusError(Status::Consistency, "x".into()));
        assert_eq!(status_of(&e), Status::Consistency);
        assert_eq!(status_of(&anyhow::anyhow!("other")), Status::Failure);
    }
}
