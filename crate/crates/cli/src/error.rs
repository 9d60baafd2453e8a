use std::fmt;

use dvs_nearchip::bench::BenchError;
use dvs_nearchip::bnn::BnnError;
use dvs_nearchip::codec::CodecError;
use dvs_nearchip::events::EventError;
use dvs_nearchip::filter::FilterError;
use dvs_nearchip::synth::SynthError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_MISMATCH: u8 = 3;
pub const EXIT_IO: u8 = 4;

/// A failed run: message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    pub fn mismatch(message: impl Into<String>) -> Self {
        Failure { code: EXIT_MISMATCH, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: EXIT_IO, message: message.into() }
    }

    /// Prefixes the message with `what` (typically a path).
    pub fn at(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

macro_rules! classify {
    ($ty:ty, |$e:ident| $code:expr) => {
        impl From<$ty> for Failure {
            fn from($e: $ty) -> Self {
                let code = $code;
                Failure { code, message: $e.to_string() }
            }
        }
    };
}

classify!(std::io::Error, |e| EXIT_IO);
classify!(serde_json::Error, |e| EXIT_IO);
classify!(EventError, |e| match e {
    EventError::InvalidGeometry { .. } | EventError::OutOfRange { .. } | EventError::NonMonotonic { .. } => EXIT_USAGE,
    _ => EXIT_IO,
});
classify!(FilterError, |e| match e {
    FilterError::InvalidConfig(_) | FilterError::ConfigSyntax { .. } => EXIT_USAGE,
    FilterError::FrameFormat(_) | FilterError::Io(_) => EXIT_IO,
});
classify!(CodecError, |e| match e {
    CodecError::EmptyCorpus => EXIT_USAGE,
    _ => EXIT_IO,
});
classify!(BnnError, |e| match e {
    BnnError::FrameTooSmall { .. } | BnnError::LayoutMismatch { .. } => EXIT_MISMATCH,
    BnnError::SingleClass | BnnError::Dataset(_) => EXIT_USAGE,
    BnnError::InvalidModel(_) | BnnError::Io(_) => EXIT_IO,
});
classify!(SynthError, |e| match e {
    SynthError::InvalidSpec(_) => EXIT_USAGE,
    _ => EXIT_IO,
});
classify!(BenchError, |e| match e {
    BenchError::Filter(f) => return f.into(),
    BenchError::Synth(s) => return s.into(),
    BenchError::Codec(c) => return c.into(),
    BenchError::Bnn(b) => return b.into(),
    BenchError::Io(_) => EXIT_IO,
    _ => EXIT_USAGE,
});

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::io(e.to_string())
    }
}
