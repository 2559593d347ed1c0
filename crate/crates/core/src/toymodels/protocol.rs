use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{AdapterInfo, AdvertisedVariable, ModelAdapter};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

pub const PROTOCOL: &str = "esm-adapter/1";
pub const FRAME_MAGIC: &[u8; 4] = b"EVF1";

/// First line a child writes on stdout. `units`, `model_id` and
/// `max_wind_mps` are optional extensions; readers ignore unknown keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
    pub nlat: usize,
    pub nlon: usize,
    pub variables: Vec<String>,
    pub dt_seconds: f64,
    pub deterministic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wind_mps: Option<f64>,
}

impl Handshake {
    pub fn from_info(info: &AdapterInfo) -> Self {
        Self {
            protocol: PROTOCOL.into(),
            nlat: info.grid.nlat(),
            nlon: info.grid.nlon(),
            variables: info.variables.iter().map(|v| v.name.clone()).collect(),
            dt_seconds: info.dt_seconds,
            deterministic: info.deterministic,
            units: Some(info.variables.iter().map(|v| v.units.clone()).collect()),
            model_id: Some(info.id.clone()),
            max_wind_mps: info.max_wind_mps,
        }
    }

    /// Adapter description implied by the handshake. The grid is the
    /// regular equal-angle grid of the advertised size.
    pub fn to_info(&self, fallback_id: &str) -> Result<AdapterInfo> {
        if self.protocol != PROTOCOL {
            return Err(Error::AdapterInit(format!(
                "unsupported protocol `{}`, expected `{PROTOCOL}`",
                self.protocol
            )));
        }
        if self.variables.is_empty() {
            return Err(Error::AdapterInit("handshake advertises no variables".into()));
        }
        if !(self.dt_seconds > 0.0 && self.dt_seconds.is_finite()) {
            return Err(Error::AdapterInit(format!("invalid dt_seconds {}", self.dt_seconds)));
        }
        let units = match &self.units {
            Some(u) if u.len() == self.variables.len() => u.clone(),
            Some(_) => return Err(Error::AdapterInit("`units` length differs from `variables`".into())),
            None => vec!["1".to_string(); self.variables.len()],
        };
        let grid =
            GridSpec::regular(self.nlat, self.nlon).map_err(|e| Error::AdapterInit(format!("handshake grid: {e}")))?;
        Ok(AdapterInfo {
            id: self.model_id.clone().unwrap_or_else(|| fallback_id.to_string()),
            grid,
            variables: self
                .variables
                .iter()
                .zip(units)
                .map(|(n, u)| AdvertisedVariable::new(n.clone(), u))
                .collect(),
            dt_seconds: self.dt_seconds,
            deterministic: self.deterministic,
            max_wind_mps: self.max_wind_mps,
        })
    }
}

/// Writes one frame: magic, u32 LE byte length, f64 LE payload.
pub fn write_frame<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let len = u32::try_from(values.len() * 8).map_err(|_| Error::Config("state too large for one frame".into()))?;
    let mut buf = Vec::with_capacity(8 + values.len() * 8);
    buf.extend_from_slice(FRAME_MAGIC);
    buf.extend_from_slice(&len.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` is the zero-length shutdown frame.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<f64>>> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    if &head[..4] != FRAME_MAGIC {
        return Err(Error::Format(format!("bad frame magic {:?}", &head[..4])));
    }
    let len = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
    if len == 0 {
        return Ok(None);
    }
    if !len.is_multiple_of(8) {
        return Err(Error::Format(format!("frame length {len} is not a multiple of 8")));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Some(
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    ))
}

/// Child side of the protocol: handshake, then answer state frames until
/// the parent sends a zero-length frame or closes the pipe.
pub fn serve<A: ModelAdapter, R: Read, W: Write>(adapter: &mut A, input: R, output: W) -> Result<()> {
    let mut input = std::io::BufReader::new(input);
    let mut output = std::io::BufWriter::new(output);
    let line = serde_json::to_string(&Handshake::from_info(adapter.info()))?;
    writeln!(output, "{line}")?;
    output.flush()?;
    let n = adapter.info().state_len();
    loop {
        let frame = match read_frame(&mut input) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        };
        if frame.len() != n {
            return Err(Error::Shape(format!("frame has {} values, expected {n}", frame.len())));
        }
        let next = adapter.step(&frame)?;
        write_frame(&mut output, &next)?;
    }
}

#[derive(Debug, Clone)]
pub struct SubprocessOptions {
    pub handshake_timeout: Duration,
    /// Reject children whose advertised grid differs in size.
    pub expected_grid: Option<GridSpec>,
}

impl Default for SubprocessOptions {
    fn default() -> Self {
        Self {
            handshake_timeout: Duration::from_secs(30),
            expected_grid: None,
        }
    }
}

/// Adapter backed by a child process speaking the frame protocol.
pub struct SubprocessAdapter {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    info: AdapterInfo,
    steps: usize,
}

impl SubprocessAdapter {
    pub fn spawn(argv: &[String], options: &SubprocessOptions) -> Result<Self> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| Error::Config("empty adapter command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::AdapterInit(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));

        // Read the handshake on a helper thread so a silent child cannot
        // block us past the timeout.
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut stdout = stdout;
            let mut line = String::new();
            let res = stdout.read_line(&mut line);
            let _ = tx.send((res, line, stdout));
        });
        let fail = |child: &mut Child, msg: String| {
            let _ = child.kill();
            let _ = child.wait();
            Err(Error::AdapterInit(msg))
        };
        let (res, line, stdout) = match rx.recv_timeout(options.handshake_timeout) {
            Ok(x) => x,
            Err(_) => {
                return fail(
                    &mut child,
                    format!("no handshake within {:?}", options.handshake_timeout),
                )
            }
        };
        match res {
            Ok(0) => return fail(&mut child, "child exited before the handshake".into()),
            Err(e) => return fail(&mut child, format!("reading handshake: {e}")),
            Ok(_) => {}
        }
        let handshake: Handshake = match serde_json::from_str(line.trim_end()) {
            Ok(h) => h,
            Err(e) => return fail(&mut child, format!("malformed handshake: {e}")),
        };
        let info = match handshake.to_info(program) {
            Ok(i) => i,
            Err(e) => return fail(&mut child, e.to_string()),
        };
        if let Some(g) = &options.expected_grid {
            if g.nlat() != info.grid.nlat() || g.nlon() != info.grid.nlon() {
                return fail(
                    &mut child,
                    format!(
                        "child grid {}x{} does not match expected {}x{}",
                        info.grid.nlat(),
                        info.grid.nlon(),
                        g.nlat(),
                        g.nlon()
                    ),
                );
            }
        }
        Ok(Self {
            child,
            stdin,
            stdout,
            info,
            steps: 0,
        })
    }

    /// Sends the shutdown frame and waits briefly for the child to exit.
    pub fn shutdown(mut self) -> Result<std::process::ExitStatus> {
        self.close()
    }

    fn close(&mut self) -> Result<std::process::ExitStatus> {
        if let Some(mut stdin) = self.stdin.take() {
            let _ = write_frame(&mut stdin, &[]);
        }
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            if let Some(status) = self.child.try_wait()? {
                return Ok(status);
            }
            if Instant::now() > deadline {
                self.child.kill()?;
                return Ok(self.child.wait()?);
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }
}

impl ModelAdapter for SubprocessAdapter {
    fn info(&self) -> &AdapterInfo {
        &self.info
    }

    fn step(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        let step = self.steps + 1;
        let broken = |message: String| Error::Adapter { step, message };
        if state.len() != self.info.state_len() {
            return Err(broken(format!(
                "state has {} values, child expects {}",
                state.len(),
                self.info.state_len()
            )));
        }
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| broken("adapter already shut down".into()))?;
        write_frame(stdin, state).map_err(|e| broken(format!("sending state: {e}")))?;
        let next = match read_frame(&mut self.stdout) {
            Ok(Some(v)) => v,
            Ok(None) => return Err(broken("child sent an empty frame".into())),
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                return Err(broken("child closed its output".into()))
            }
            Err(e) => return Err(broken(e.to_string())),
        };
        if next.len() != state.len() {
            return Err(broken(format!(
                "child returned {} values, expected {}",
                next.len(),
                state.len()
            )));
        }
        self.steps = step;
        Ok(next)
    }
}

impl Drop for SubprocessAdapter {
    fn drop(&mut self) {
        if self.stdin.is_some() {
            let _ = self.close();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let values = vec![0.0, -1.5, f64::MAX, f64::MIN_POSITIVE, f64::NAN];
        let mut buf = Vec::new();
        write_frame(&mut buf, &values).unwrap();
        assert_eq!(&buf[..4], b"EVF1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 40);
        let back = read_frame(&mut buf.as_slice()).unwrap().unwrap();
        assert!(back.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));

        let mut empty = Vec::new();
        write_frame(&mut empty, &[]).unwrap();
        assert_eq!(read_frame(&mut empty.as_slice()).unwrap(), None);
    }

    #[test]
    fn bad_frames() {
        assert!(matches!(read_frame(&mut &b"XXXX\x08\0\0\0"[..]), Err(Error::Format(_))));
        assert!(matches!(
            read_frame(&mut &b"EVF1\x03\0\0\0abc"[..]),
            Err(Error::Format(_))
        ));
        assert!(matches!(read_frame(&mut &b"EVF1\x10\0\0\0abc"[..]), Err(Error::Io(_))));
    }

    #[test]
    fn handshake_minimal_form() {
        let line = r#"{"protocol":"esm-adapter/1","nlat":4,"nlon":8,"variables":["q"],"dt_seconds":60.0,"deterministic":true}"#;
        let h: Handshake = serde_json::from_str(line).unwrap();
        let info = h.to_info("child").unwrap();
        assert_eq!(info.id, "child");
        assert_eq!(info.variables[0].units, "1");
        assert_eq!(info.max_wind_mps, None);
        let bad: Handshake = serde_json::from_str(&line.replace("esm-adapter/1", "other/2")).unwrap();
        assert!(matches!(bad.to_info("c"), Err(Error::AdapterInit(_))));
    }
}
