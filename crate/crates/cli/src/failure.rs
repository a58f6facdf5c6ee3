use std::fmt;

use prefmod::ErrorClass;
use serde::Serialize;

/// Error raised by the front end itself, carrying its exit class.
#[derive(Debug)]
pub struct Failure {
    pub class: ErrorClass,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn config_error(message: impl Into<String>) -> anyhow::Error {
    Failure { class: ErrorClass::Config, message: message.into() }.into()
}

pub fn data_error(message: impl Into<String>) -> anyhow::Error {
    Failure { class: ErrorClass::Data, message: message.into() }.into()
}

pub fn classify(err: &anyhow::Error) -> ErrorClass {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.class;
        }
        if let Some(e) = cause.downcast_ref::<prefmod::Error>() {
            return e.class();
        }
    }
    ErrorClass::Data
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    code: i32,
    kind: &'a str,
    message: String,
}

/// One line of JSON for stderr.
pub fn error_line(class: ErrorClass, message: String) -> String {
    let kind = match class {
        ErrorClass::Config => "config",
        ErrorClass::Data => "data",
        ErrorClass::Numerical => "numerical",
    };
    serde_json::to_string(&ErrorLine { code: exit_code(class), kind, message })
        .expect("plain struct serializes")
}
