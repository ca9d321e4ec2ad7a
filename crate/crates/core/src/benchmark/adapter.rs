//! Algorithms as seen by the benchmark runner.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::baselines::Baseline;
use crate::error::{Error, Result};
use crate::model::{predict, ModelParams, Observation};
use crate::timebase::Date;

/// An algorithm under evaluation. Trainable algorithms receive the train
/// slice through [`Forecaster::begin_fit`] and are then stepped by the
/// runner, which owns the clock.
pub trait Forecaster: Send {
    fn name(&self) -> &str;

    /// True when there is no training loop; such algorithms never fail on time.
    fn is_zero_shot(&self) -> bool;

    fn begin_fit(&mut self, _fit: &[Observation], _validation: &[Observation], _seed: u64) -> Result<()> {
        Ok(())
    }

    /// One training step; `Ok(true)` once training is complete.
    fn train_step(&mut self) -> Result<bool> {
        Ok(true)
    }

    /// Whether a usable model exists for [`Forecaster::predict`].
    fn has_model(&self) -> bool {
        true
    }

    fn predict(&mut self, input: &[Observation], horizon: &[Date]) -> Result<Vec<f64>>;

    /// An independent copy for parallel runs, when the algorithm supports it.
    fn try_clone(&self) -> Option<Box<dyn Forecaster>> {
        None
    }
}

pub struct ModelForecaster {
    name: String,
    params: Arc<ModelParams>,
}

impl ModelForecaster {
    pub fn new(name: impl Into<String>, params: Arc<ModelParams>) -> Self {
        Self { name: name.into(), params }
    }
}

impl Forecaster for ModelForecaster {
    fn name(&self) -> &str {
        &self.name
    }

    fn is_zero_shot(&self) -> bool {
        true
    }

    fn predict(&mut self, input: &[Observation], horizon: &[Date]) -> Result<Vec<f64>> {
        predict(&self.params, input, horizon)
    }

    fn try_clone(&self) -> Option<Box<dyn Forecaster>> {
        Some(Box::new(Self { name: self.name.clone(), params: Arc::clone(&self.params) }))
    }
}

pub struct BaselineForecaster(pub Baseline);

impl Forecaster for BaselineForecaster {
    fn name(&self) -> &str {
        self.0.as_str()
    }

    fn is_zero_shot(&self) -> bool {
        true
    }

    fn predict(&mut self, input: &[Observation], horizon: &[Date]) -> Result<Vec<f64>> {
        Ok(self.0.forecast(input, horizon)?.predictions)
    }

    fn try_clone(&self) -> Option<Box<dyn Forecaster>> {
        Some(Box::new(BaselineForecaster(self.0)))
    }
}

#[derive(Debug, Serialize)]
struct WirePoint {
    date: Date,
    value: Option<f64>,
}

fn wire(points: &[Observation]) -> Vec<WirePoint> {
    points.iter().map(|o| WirePoint { date: o.date, value: o.present.then_some(o.value) }).collect()
}

#[derive(Debug, Deserialize)]
struct Reply {
    ok: bool,
    #[serde(default)]
    error: Option<String>,
    #[serde(default)]
    done: bool,
    #[serde(default)]
    has_model: bool,
    #[serde(default)]
    predictions: Vec<f64>,
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// External algorithm speaking one JSON object per line on stdin/stdout.
///
/// Requests carry an `op` field:
///
/// * `{"op":"fit","fit":[{"date","value"}],"validation":[..],"seed":n}` → `{"ok":true}`
/// * `{"op":"step"}` → `{"ok":true,"done":bool,"has_model":bool}`
/// * `{"op":"predict","input":[..],"horizon":["YYYY-MM-DD",..]}` → `{"ok":true,"predictions":[..]}`
/// * `{"op":"shutdown"}` (no reply)
///
/// Missing points have `"value": null`. Failures reply `{"ok":false,"error":".."}`.
pub struct SubprocessForecaster {
    name: String,
    program: String,
    args: Vec<String>,
    zero_shot: bool,
    process: Option<Process>,
    has_model: bool,
}

impl SubprocessForecaster {
    pub fn new(name: impl Into<String>, program: impl Into<String>, args: Vec<String>, zero_shot: bool) -> Self {
        Self { name: name.into(), program: program.into(), args, zero_shot, process: None, has_model: false }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Adapter { name: self.name.clone(), message: message.into() }
    }

    fn ensure_started(&mut self) -> Result<()> {
        if self.process.is_some() {
            return Ok(());
        }
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| self.err(format!("cannot start `{}`: {e}", self.program)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        self.process = Some(Process { child, stdin, stdout });
        Ok(())
    }

    fn kill(&mut self) {
        if let Some(mut p) = self.process.take() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }

    fn call(&mut self, request: serde_json::Value) -> Result<Reply> {
        self.ensure_started()?;
        let outcome = (|| -> std::result::Result<Reply, String> {
            let p = self.process.as_mut().expect("started");
            let mut line = serde_json::to_string(&request).map_err(|e| e.to_string())?;
            line.push('\n');
            p.stdin.write_all(line.as_bytes()).and_then(|_| p.stdin.flush()).map_err(|e| e.to_string())?;
            let mut reply = String::new();
            if p.stdout.read_line(&mut reply).map_err(|e| e.to_string())? == 0 {
                return Err("process closed its output".into());
            }
            serde_json::from_str(&reply).map_err(|e| format!("malformed reply: {e}"))
        })();
        match outcome {
            Ok(r) if r.ok => Ok(r),
            Ok(r) => Err(self.err(r.error.unwrap_or_else(|| "request failed".into()))),
            Err(message) => {
                self.kill();
                Err(self.err(message))
            }
        }
    }
}

impl Forecaster for SubprocessForecaster {
    fn name(&self) -> &str {
        &self.name
    }

    fn is_zero_shot(&self) -> bool {
        self.zero_shot
    }

    fn begin_fit(&mut self, fit: &[Observation], validation: &[Observation], seed: u64) -> Result<()> {
        self.has_model = false;
        self.call(json!({"op": "fit", "fit": wire(fit), "validation": wire(validation), "seed": seed}))?;
        Ok(())
    }

    fn train_step(&mut self) -> Result<bool> {
        let r = self.call(json!({"op": "step"}))?;
        self.has_model = r.has_model;
        Ok(r.done)
    }

    fn has_model(&self) -> bool {
        self.zero_shot || self.has_model
    }

    fn predict(&mut self, input: &[Observation], horizon: &[Date]) -> Result<Vec<f64>> {
        let r = self.call(json!({"op": "predict", "input": wire(input), "horizon": horizon}))?;
        Ok(r.predictions)
    }
}

impl Drop for SubprocessForecaster {
    fn drop(&mut self) {
        if let Some(p) = self.process.as_mut() {
            let _ = p.stdin.write_all(b"{\"op\":\"shutdown\"}\n");
            let _ = p.stdin.flush();
        }
        if let Some(p) = self.process.take() {
            let Process { mut child, stdin, .. } = p;
            drop(stdin);
            for _ in 0..100 {
                if matches!(child.try_wait(), Ok(Some(_))) {
                    return;
                }
                std::thread::sleep(std::time::Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
