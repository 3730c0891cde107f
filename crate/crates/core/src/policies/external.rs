//! Delegates decisions to a child process over length-prefixed frames.
//!
//! Both directions use UTF-8 frames `LEN <bytes>\n<payload>`. The adapter
//! writes one prompt frame per slot and waits for one completion frame.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::interface::{encode, CompletionText, SlotObservation};
use crate::model::RequestSlot;
use crate::traffic::Instance;

use super::Policy;

/// Largest frame the adapter accepts from a child.
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalConfig {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ExternalConfig {
    /// Splits `command` on whitespace into program and arguments.
    pub fn from_command(command: &str, timeout: Duration) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty external command".into()))?;
        Ok(ExternalConfig {
            program,
            args: parts.collect(),
            timeout,
        })
    }

    pub fn command_line(&self) -> String {
        std::iter::once(self.program.as_str())
            .chain(self.args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn write_frame<W: Write>(mut w: W, payload: &str) -> std::io::Result<()> {
    writeln!(w, "LEN {}", payload.len())?;
    w.write_all(payload.as_bytes())?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean EOF before the header.
pub fn read_frame<R: BufRead>(r: &mut R) -> std::io::Result<Option<String>> {
    let mut header = String::new();
    if r.read_line(&mut header)? == 0 {
        return Ok(None);
    }
    let bad = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidData, m);
    let len: usize = header
        .trim_end_matches('\n')
        .strip_prefix("LEN ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad(format!("bad frame header {header:?}")))?;
    if len > MAX_FRAME {
        return Err(bad(format!("frame of {len} bytes exceeds limit")));
    }
    let mut buf = vec![0; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf)
        .map(Some)
        .map_err(|_| bad("frame is not UTF-8".into()))
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    frames: Receiver<String>,
}

impl Session {
    fn spawn(cfg: &ExternalConfig) -> Result<Session> {
        let mut child = Command::new(&cfg.program)
            .args(&cfg.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Config(format!("cannot spawn {:?}: {e}", cfg.command_line())))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, frames) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                match read_frame(&mut reader) {
                    Ok(Some(frame)) => {
                        if tx.send(frame).is_err() {
                            break;
                        }
                    }
                    Ok(None) => break,
                    Err(e) => {
                        log::warn!("external policy: {e}");
                        break;
                    }
                }
            }
        });
        Ok(Session {
            child,
            stdin,
            frames,
        })
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Persistent child process per rollout. A timeout, EOF or broken pipe
/// yields an empty completion, and the next decision respawns the child.
pub struct External {
    cfg: ExternalConfig,
    session: Option<Session>,
}

impl External {
    pub fn new(cfg: ExternalConfig) -> Self {
        External { cfg, session: None }
    }

    fn exchange(&mut self, prompt: &str) -> Result<CompletionText> {
        if self.session.is_none() {
            self.session = Some(Session::spawn(&self.cfg)?);
        }
        let session = self.session.as_mut().expect("session");
        if let Err(e) = write_frame(&mut session.stdin, prompt) {
            log::warn!("external policy {:?}: write failed: {e}", self.cfg.command_line());
            self.session = None;
            return Ok(CompletionText::default());
        }
        match session.frames.recv_timeout(self.cfg.timeout) {
            Ok(text) => Ok(CompletionText(text)),
            Err(RecvTimeoutError::Timeout) => {
                log::warn!(
                    "external policy {:?}: no reply within {:?}",
                    self.cfg.command_line(),
                    self.cfg.timeout
                );
                self.session = None;
                Ok(CompletionText::default())
            }
            Err(RecvTimeoutError::Disconnected) => {
                log::warn!("external policy {:?}: closed its output", self.cfg.command_line());
                self.session = None;
                Ok(CompletionText::default())
            }
        }
    }
}

impl Policy for External {
    fn name(&self) -> String {
        format!("extern:{}", self.cfg.command_line())
    }

    fn reset(&mut self, _instance: &Instance) -> Result<()> {
        self.session = Some(Session::spawn(&self.cfg)?);
        Ok(())
    }

    fn decide(
        &mut self,
        obs: &SlotObservation,
        _peek: Option<&[RequestSlot]>,
    ) -> Result<CompletionText> {
        self.exchange(encode(obs).as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interface::{parse, testing::golden_observation};
    use crate::model::InvalidKind;
    use std::io::Cursor;
    use std::time::Instant;

    #[test]
    fn frames_round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, "BS 1: NOOP\nBS 2: NOOP").unwrap();
        write_frame(&mut buf, "").unwrap();
        write_frame(&mut buf, "\u{00e9}").unwrap();
        assert!(buf.starts_with(b"LEN 21\nBS 1: NOOP"));
        let mut r = Cursor::new(buf);
        assert_eq!(read_frame(&mut r).unwrap().as_deref(), Some("BS 1: NOOP\nBS 2: NOOP"));
        assert_eq!(read_frame(&mut r).unwrap().as_deref(), Some(""));
        assert_eq!(read_frame(&mut r).unwrap().as_deref(), Some("\u{00e9}"));
        assert_eq!(read_frame(&mut r).unwrap(), None);
        assert!(read_frame(&mut Cursor::new(b"LEN x\n".to_vec())).is_err());
        assert!(read_frame(&mut Cursor::new(b"LEN 5\nab".to_vec())).is_err());
    }

    #[test]
    fn spawn_failure_is_config_error() {
        let cfg = ExternalConfig::from_command(
            "/nonexistent/coopcache-agent",
            Duration::from_secs(1),
        )
        .unwrap();
        let mut p = External::new(cfg);
        assert!(matches!(p.exchange("x"), Err(Error::Config(_))));
        assert!(ExternalConfig::from_command("  ", Duration::from_secs(1)).is_err());
    }

    #[test]
    fn echoed_prompt_is_invalid_syntax() {
        let obs = golden_observation();
        let cfg = ExternalConfig::from_command("cat", Duration::from_secs(5)).unwrap();
        let mut p = External::new(cfg);
        let text = p.decide(&obs, None).unwrap();
        assert_eq!(text.as_str(), encode(&obs).as_str());
        assert_eq!(parse(text.as_str(), &obs).invalid_kind(), Some(InvalidKind::Syntax));
        // the same child answers again
        assert_eq!(p.decide(&obs, None).unwrap().as_str(), encode(&obs).as_str());
    }

    #[test]
    fn silent_child_times_out() {
        let obs = golden_observation();
        let cfg = ExternalConfig::from_command("sleep 30", Duration::from_millis(200)).unwrap();
        let mut p = External::new(cfg);
        let start = Instant::now();
        let text = p.decide(&obs, None).unwrap();
        assert!(start.elapsed() < Duration::from_secs(5));
        assert_eq!(text.as_str(), "");
        assert_eq!(parse(text.as_str(), &obs).invalid_kind(), Some(InvalidKind::Count));
    }

    #[test]
    fn exiting_child_gives_empty_completion() {
        let obs = golden_observation();
        let cfg = ExternalConfig::from_command("true", Duration::from_secs(5)).unwrap();
        let mut p = External::new(cfg);
        assert_eq!(p.decide(&obs, None).unwrap().as_str(), "");
    }
}
