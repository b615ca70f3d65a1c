//! Bookkeeping for the acceptance run in `tests/acceptance.rs`.

/// Verdict and one-line summary for a criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Collects named identity checks and remembers which ones failed.
#[derive(Debug, Default)]
pub struct Checks {
    pub total: usize,
    pub failures: Vec<String>,
}

impl Checks {
    /// Passes when `err <= tol`; NaN always fails.
    pub fn close(&mut self, name: &str, err: f64, tol: f64) {
        self.total += 1;
        if !(err <= tol) {
            self.failures.push(format!("{name} (err {err:.3e})"));
        }
    }

    pub fn holds(&mut self, name: &str, ok: bool) {
        self.total += 1;
        if !ok {
            self.failures.push(name.to_string());
        }
    }
}
