//! Rendering reports as e-mail and handing them to an SMTP relay.

use std::fmt::Write as _;
use std::time::Duration;

use ausc_core::ClassLabel;
use lettre::message::{Mailbox, MultiPart};
use lettre::transport::smtp::authentication::Credentials;
use lettre::{Address, AsyncSmtpTransport, AsyncTransport, Message, Tokio1Executor};

use crate::config::{SmtpConfig, TlsMode};
use crate::reports::DiagnosisReport;

const SMTP_TIMEOUT: Duration = Duration::from_secs(20);

#[derive(Debug, thiserror::Error)]
pub enum MailError {
    #[error("invalid recipient address {0:?}")]
    BadAddress(String),
    #[error("invalid sender address {0:?}")]
    BadSender(String),
    #[error("could not build message: {0}")]
    Build(String),
    #[error("SMTP delivery failed: {0}")]
    Smtp(String),
}

pub fn parse_recipient(to: &str) -> Result<Mailbox, MailError> {
    let to = to.trim();
    to.parse::<Address>().map(|a| Mailbox::new(None, a)).map_err(|_| MailError::BadAddress(to.to_string()))
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

pub fn subject(report: &DiagnosisReport) -> String {
    format!("Auscultation report {}: {}", report.report_id, report.predicted_label.full_name())
}

fn patient_lines(report: &DiagnosisReport) -> Vec<(&'static str, &str)> {
    let m = &report.patient_meta;
    [("Patient", &m.name), ("Age", &m.age), ("Notes", &m.notes)].into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
}

pub fn render_text(report: &DiagnosisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Auscultation diagnosis report");
    let _ = writeln!(s, "Report ID:     {}", report.report_id);
    let _ = writeln!(s, "Created (UTC): {}", report.created_at.to_rfc3339());
    let _ = writeln!(s, "Organ:         {}", report.organ_hint);
    let _ = writeln!(s, "Prediction:    {} ({})", report.predicted_label.full_name(), report.predicted_label);
    let _ = writeln!(s, "Model version: {}", report.model_version);
    let _ = writeln!(s, "Audio SHA-256: {}", report.audio_digest);
    for (k, v) in patient_lines(report) {
        let _ = writeln!(s, "{:<15}{v}", format!("{k}:"));
    }
    let _ = writeln!(s, "\nClass probabilities:");
    for (c, p) in ClassLabel::ALL.iter().zip(&report.probabilities) {
        let _ = writeln!(s, "  {:<24}{:>7.2}%", c.full_name(), 100.0 * p);
    }
    let _ = writeln!(s, "\nThis report was generated automatically and is not a clinical diagnosis.");
    s
}

pub fn render_html(report: &DiagnosisReport) -> String {
    let mut s = String::from("<!DOCTYPE html>\n<html><body>\n<h2>Auscultation diagnosis report</h2>\n<table>\n");
    let mut row = |k: &str, v: &str| {
        let _ = writeln!(s, "<tr><th align=\"left\">{}</th><td>{}</td></tr>", escape_html(k), escape_html(v));
    };
    row("Report ID", &report.report_id.to_string());
    row("Created (UTC)", &report.created_at.to_rfc3339());
    row("Organ", report.organ_hint.as_str());
    row("Prediction", &format!("{} ({})", report.predicted_label.full_name(), report.predicted_label));
    row("Model version", &report.model_version);
    row("Audio SHA-256", &report.audio_digest);
    for (k, v) in patient_lines(report) {
        row(k, v);
    }
    s.push_str("</table>\n<h3>Class probabilities</h3>\n<table>\n");
    for (c, p) in ClassLabel::ALL.iter().zip(&report.probabilities) {
        let bold = *c == report.predicted_label;
        let name = escape_html(c.full_name());
        let name = if bold { format!("<b>{name}</b>") } else { name };
        let _ = writeln!(s, "<tr><td>{name}</td><td align=\"right\">{:.2}%</td></tr>", 100.0 * p);
    }
    s.push_str("</table>\n<p><i>This report was generated automatically and is not a clinical diagnosis.</i></p>\n</body></html>\n");
    s
}

pub fn build_message(report: &DiagnosisReport, from: &str, to: Mailbox) -> Result<Message, MailError> {
    let from: Mailbox = from.parse().map_err(|_| MailError::BadSender(from.to_string()))?;
    Message::builder()
        .from(from)
        .to(to)
        .subject(subject(report))
        .multipart(MultiPart::alternative_plain_html(render_text(report), render_html(report)))
        .map_err(|e| MailError::Build(e.to_string()))
}

/// Thin wrapper over an async SMTP transport built from [`SmtpConfig`].
#[derive(Clone)]
pub struct Mailer {
    transport: AsyncSmtpTransport<Tokio1Executor>,
    from: String,
}

impl Mailer {
    pub fn new(cfg: &SmtpConfig) -> Result<Self, MailError> {
        let builder = match cfg.tls {
            TlsMode::On => AsyncSmtpTransport::<Tokio1Executor>::starttls_relay(&cfg.host).map_err(|e| MailError::Smtp(e.to_string()))?,
            TlsMode::Off => AsyncSmtpTransport::<Tokio1Executor>::builder_dangerous(&cfg.host),
        };
        let mut builder = builder.port(cfg.port).timeout(Some(SMTP_TIMEOUT));
        if let Some(user) = &cfg.username {
            builder = builder.credentials(Credentials::new(user.clone(), cfg.password.clone().unwrap_or_default()));
        }
        cfg.from_address.parse::<Mailbox>().map_err(|_| MailError::BadSender(cfg.from_address.clone()))?;
        Ok(Self { transport: builder.build(), from: cfg.from_address.clone() })
    }

    /// Deliver synchronously (from the caller's point of view); no retry queue.
    pub async fn send_report(&self, report: &DiagnosisReport, to: Mailbox) -> Result<(), MailError> {
        let msg = build_message(report, &self.from, to)?;
        self.transport.send(msg).await.map(|_| ()).map_err(|e| MailError::Smtp(e.to_string()))
    }
}
