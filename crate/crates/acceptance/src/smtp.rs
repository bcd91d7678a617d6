//! A permissive SMTP server that records every line it receives.

use std::sync::{Arc, Mutex};

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpListener;

pub struct CaptureServer {
    pub port: u16,
    transcript: Arc<Mutex<String>>,
}

impl CaptureServer {
    /// Bind to an ephemeral local port and serve until the runtime stops.
    pub async fn start() -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let port = listener.local_addr()?.port();
        let transcript = Arc::new(Mutex::new(String::new()));
        let log = transcript.clone();
        tokio::spawn(async move {
            while let Ok((sock, _)) = listener.accept().await {
                let log = log.clone();
                tokio::spawn(async move {
                    let (rd, mut wr) = sock.into_split();
                    let mut lines = BufReader::new(rd).lines();
                    if wr.write_all(b"220 capture ESMTP\r\n").await.is_err() {
                        return;
                    }
                    let mut in_data = false;
                    while let Ok(Some(line)) = lines.next_line().await {
                        log.lock().expect("transcript lock").push_str(&format!("{line}\n"));
                        let reply: &[u8] = if in_data {
                            if line != "." {
                                continue;
                            }
                            in_data = false;
                            b"250 2.0.0 queued\r\n"
                        } else {
                            match line.get(..4).map(str::to_ascii_uppercase).as_deref() {
                                Some("EHLO") => b"250-capture\r\n250 8BITMIME\r\n",
                                Some("DATA") => {
                                    in_data = true;
                                    b"354 end with <CRLF>.<CRLF>\r\n"
                                }
                                Some("QUIT") => {
                                    let _ = wr.write_all(b"221 bye\r\n").await;
                                    return;
                                }
                                _ => b"250 ok\r\n",
                            }
                        };
                        if wr.write_all(reply).await.is_err() {
                            return;
                        }
                    }
                });
            }
        });
        Ok(Self { port, transcript })
    }

    pub fn transcript(&self) -> String {
        self.transcript.lock().expect("transcript lock").clone()
    }
}
