use std::process::ExitCode;

use gcf_core::GcfError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_GATE: u8 = 3;

/// A failed command: exit status plus a one-line JSON record on stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            kind: "usage".into(),
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            kind: "validation".into(),
            message: message.into(),
        }
    }

    pub fn gate(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_GATE,
            kind: "gate".into(),
            message: message.into(),
        }
    }

    pub fn report(&self) -> ExitCode {
        let record = serde_json::json!({
            "error": self.kind,
            "message": self.message,
            "exit_code": self.code,
        });
        eprintln!("{record}");
        ExitCode::from(self.code)
    }
}

impl From<GcfError> for Failure {
    fn from(e: GcfError) -> Self {
        Self {
            code: EXIT_VALIDATION,
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}
