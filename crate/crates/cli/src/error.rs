use std::fmt;

/// Broad failure categories; each maps to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Input,
    Model,
    Endpoint,
    Linking,
    Eval,
    Output,
    Check,
}

impl ErrorClass {
    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Config => "CONFIG",
            ErrorClass::Input => "INPUT",
            ErrorClass::Model => "MODEL",
            ErrorClass::Endpoint => "ENDPOINT",
            ErrorClass::Linking => "LINKING",
            ErrorClass::Eval => "EVAL",
            ErrorClass::Output => "OUTPUT",
            ErrorClass::Check => "CHECK",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Input => 3,
            ErrorClass::Model => 4,
            ErrorClass::Endpoint => 5,
            ErrorClass::Linking => 6,
            ErrorClass::Eval => 7,
            ErrorClass::Output => 8,
            ErrorClass::Check => 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub class: ErrorClass,
    pub detail: String,
}

impl Failure {
    pub fn new(class: ErrorClass, detail: impl fmt::Display) -> Self {
        let detail = detail.to_string().lines().map(str::trim).collect::<Vec<_>>().join("; ");
        Failure { class, detail }
    }

    pub fn config(detail: impl fmt::Display) -> Self {
        Self::new(ErrorClass::Config, detail)
    }

    pub fn input(detail: impl fmt::Display) -> Self {
        Self::new(ErrorClass::Input, detail)
    }

    pub fn output(detail: impl fmt::Display) -> Self {
        Self::new(ErrorClass::Output, detail)
    }
}

/// `error[CLASS]: detail` on one line.
impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.class.name(), self.detail)
    }
}

impl std::error::Error for Failure {}

/// Tags any error with a class.
pub trait Classify<T> {
    fn class(self, class: ErrorClass) -> Result<T, Failure>;
}

impl<T, E: fmt::Display> Classify<T> for Result<T, E> {
    fn class(self, class: ErrorClass) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(class, e))
    }
}
