use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use super::{ExecError, ExecErrorKind, ExecRequest, Executor, ObjectTrace, WorkerResponse};

/// Extra wall-clock the host allows beyond the worker's own timeout before killing it.
const KILL_GRACE: Duration = Duration::from_millis(750);

/// Spawns one worker process per request and speaks the line protocol with it.
#[derive(Clone, Debug)]
pub struct WorkerExecutor {
    program: String,
    args: Vec<String>,
    scratch_dir: Option<PathBuf>,
}

impl WorkerExecutor {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        WorkerExecutor {
            program: program.into(),
            args,
            scratch_dir: None,
        }
    }

    /// Parse a shell-like command line (whitespace separated, no quoting).
    pub fn from_command_line(cmd: &str) -> Option<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(WorkerExecutor::new(program, parts.collect()))
    }

    /// Working directory handed to the worker; it must not write elsewhere.
    pub fn with_scratch_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.scratch_dir = Some(dir.into());
        self
    }
}

impl Executor for WorkerExecutor {
    fn execute(&self, req: &ExecRequest) -> Result<ObjectTrace, ExecError> {
        req.check()?;
        let protocol = |msg: String| ExecError::new(ExecErrorKind::Protocol, msg);

        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(dir) = &self.scratch_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| protocol(format!("could not start worker `{}`: {e}", self.program)))?;

        let mut line = serde_json::to_string(req).expect("request serializes");
        line.push('\n');
        {
            let mut stdin = child.stdin.take().expect("stdin piped");
            if let Err(e) = stdin.write_all(line.as_bytes()) {
                let _ = child.kill();
                let _ = child.wait();
                return Err(protocol(format!("could not write request: {e}")));
            }
        }

        let stdout = child.stdout.take().expect("stdout piped");
        let mut stderr = child.stderr.take().expect("stderr piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            let mut response = String::new();
            let res = reader.read_line(&mut response).map(|_| response);
            let _ = tx.send(res);
        });
        let err_reader = thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let deadline = Duration::from_secs_f64(req.limits.timeout_s) + KILL_GRACE;
        let response = match rx.recv_timeout(deadline) {
            Ok(Ok(text)) => text,
            Ok(Err(e)) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(protocol(format!("could not read response: {e}")));
            }
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(ExecError::new(
                    ExecErrorKind::Timeout,
                    format!("worker exceeded {:.1} s", req.limits.timeout_s),
                ));
            }
        };
        let status = child.wait().map_err(|e| protocol(format!("worker wait failed: {e}")))?;
        let stderr_text = err_reader.join().unwrap_or_default();

        if response.trim().is_empty() {
            return Err(protocol(format!(
                "worker exited with {status} without a response: {}",
                stderr_text.trim()
            )));
        }
        let parsed: WorkerResponse =
            serde_json::from_str(response.trim()).map_err(|e| protocol(format!("malformed response line: {e}")))?;
        if !status.success() {
            return Err(protocol(format!("worker emitted a response but exited with {status}")));
        }
        parsed.into_result()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::ExecLimits;

    fn python() -> Option<&'static str> {
        Command::new("python3")
            .arg("--version")
            .output()
            .ok()
            .map(|_| "python3")
    }

    fn script_worker(script: &str) -> Option<WorkerExecutor> {
        python().map(|p| WorkerExecutor::new(p, vec!["-c".into(), script.into()]))
    }

    #[test]
    fn round_trips_one_line() {
        let Some(w) = script_worker(
            r#"
import sys, json
req = json.loads(sys.stdin.readline())
n = len(req["source"])
print(json.dumps({"ok": True, "trace": {"objects": [{"label": "x", "half_size": [1, 1, 1],
    "position": [n, 0, 0], "rotation": [1,0,0,0,1,0,0,0,1]}], "events": []}}))
"#,
        ) else {
            return;
        };
        let trace = w.execute_program("abcd", ExecLimits::default()).unwrap();
        assert_eq!(trace.objects[0].position.x, 4.0);
    }

    #[test]
    fn error_responses_pass_through() {
        let Some(w) = script_worker(
            r#"
import sys, json
sys.stdin.readline()
print(json.dumps({"ok": False, "error": {"kind": "syntax", "message": "bad", "location": 3}}))
"#,
        ) else {
            return;
        };
        let err = w.execute_program("(", ExecLimits::default()).unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::Syntax);
        assert_eq!(err.location, Some(3));
    }

    #[test]
    fn hung_worker_is_killed_as_timeout() {
        let Some(w) = script_worker("import time\ntime.sleep(30)") else {
            return;
        };
        let limits = ExecLimits {
            timeout_s: 0.5,
            ..ExecLimits::default()
        };
        let start = std::time::Instant::now();
        let err = w.execute_program("while True: pass", limits).unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::Timeout);
        assert!(start.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn crash_without_response_is_protocol_error() {
        let Some(w) = script_worker("import sys\nsys.exit(3)") else {
            return;
        };
        let err = w.execute_program("x", ExecLimits::default()).unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::Protocol);

        let missing = WorkerExecutor::new("/nonexistent/worker", vec![]);
        assert_eq!(
            missing.execute_program("x", ExecLimits::default()).unwrap_err().kind,
            ExecErrorKind::Protocol
        );
    }
}
