use thiserror::Error;

#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("pack error: {0}")]
    Pack(String),

    #[error("network error: {0}")]
    Network(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed at t = {t:.6}: {message}")]
    Integration { t: f64, message: String },

    #[error("steady Golgi solve failed at t = {t:.4} h: {message} (env: {env})")]
    SteadySolve { t: f64, message: String, env: String },

    #[error("nlp error: {0}")]
    Nlp(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario error at {path}: {message}")]
    Scenario { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
