//! Service settings, read from the environment.

use std::net::SocketAddr;
use std::path::PathBuf;

use crate::error::ConfigError;

pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "ausc-data";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlsMode {
    /// Upgrade the connection with STARTTLS before authenticating.
    On,
    /// Plain SMTP, for local relays and test stubs.
    Off,
}

#[derive(Clone, PartialEq, Eq)]
pub struct SmtpConfig {
    pub host: String,
    pub port: u16,
    pub username: Option<String>,
    pub password: Option<String>,
    pub from_address: String,
    pub tls: TlsMode,
}

impl std::fmt::Debug for SmtpConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmtpConfig")
            .field("host", &self.host)
            .field("port", &self.port)
            .field("username", &self.username)
            .field("password", &self.password.as_ref().map(|_| "***"))
            .field("from_address", &self.from_address)
            .field("tls", &self.tls)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub model_path: Option<PathBuf>,
    pub data_dir: PathBuf,
    pub bind_addr: SocketAddr,
    /// `None` disables the e-mail endpoint (it answers 503).
    pub smtp: Option<SmtpConfig>,
}

impl ServiceConfig {
    /// Read `AUSC_MODEL_PATH`, `AUSC_DATA_DIR`, `AUSC_BIND_ADDR`, `SMTP_HOST`,
    /// `SMTP_PORT`, `SMTP_USER`, `SMTP_PASS`, `SMTP_FROM` and `SMTP_TLS`.
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Same as [`ServiceConfig::from_env`] with an arbitrary variable source.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let get = |k: &str| get(k).map(|v| v.trim().to_string()).filter(|v| !v.is_empty());
        let bind = get("AUSC_BIND_ADDR").unwrap_or_else(|| DEFAULT_BIND_ADDR.into());
        let bind_addr = bind.parse().map_err(|_| ConfigError::Invalid { var: "AUSC_BIND_ADDR", value: bind })?;
        let smtp = match get("SMTP_HOST") {
            None => None,
            Some(host) => {
                let tls = match get("SMTP_TLS").as_deref().map(str::to_ascii_lowercase).as_deref() {
                    None | Some("on") | Some("true") | Some("1") => TlsMode::On,
                    Some("off") | Some("false") | Some("0") => TlsMode::Off,
                    Some(other) => return Err(ConfigError::Invalid { var: "SMTP_TLS", value: other.into() }),
                };
                let port = match get("SMTP_PORT") {
                    Some(p) => p.parse().map_err(|_| ConfigError::Invalid { var: "SMTP_PORT", value: p })?,
                    None if tls == TlsMode::On => 587,
                    None => 25,
                };
                let from_address = get("SMTP_FROM").ok_or(ConfigError::Missing { var: "SMTP_FROM", because: "SMTP_HOST is set" })?;
                Some(SmtpConfig { host, port, username: get("SMTP_USER"), password: get("SMTP_PASS"), from_address, tls })
            }
        };
        Ok(Self {
            model_path: get("AUSC_MODEL_PATH").map(PathBuf::from),
            data_dir: get("AUSC_DATA_DIR").map_or_else(|| PathBuf::from(DEFAULT_DATA_DIR), PathBuf::from),
            bind_addr,
            smtp,
        })
    }
}
