//! CSV and summary writers. Floats are written with 17 significant digits so
//! identical runs produce byte-identical files.

use std::path::Path;
use std::time::Instant;

use acoustolab::ExperimentConfig;
use anyhow::Context;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvOut {
    writer: csv::Writer<std::fs::File>,
}

impl CsvOut {
    pub fn create(dir: &Path, name: &str, header: &[&str]) -> anyhow::Result<Self> {
        let path = dir.join(name);
        let mut writer = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> anyhow::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

pub struct Summary {
    body: Map<String, Value>,
    timings: Map<String, Value>,
    files: Vec<String>,
    result: Map<String, Value>,
}

impl Summary {
    pub fn new(command: &str, config: &ExperimentConfig, workers: usize) -> Self {
        let mut body = Map::new();
        body.insert("command".into(), json!(command));
        body.insert(
            "versions".into(),
            json!({ "acoustolab": env!("CARGO_PKG_VERSION"), "format": 1 }),
        );
        body.insert("config".into(), serde_json::to_value(config).unwrap_or(Value::Null));
        body.insert("workers".into(), json!(workers));
        Self { body, timings: Map::new(), files: Vec::new(), result: Map::new() }
    }

    pub fn timing(&mut self, name: &str, since: Instant) {
        self.timings.insert(format!("{name}_s"), json!(since.elapsed().as_secs_f64()));
    }

    pub fn file(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.result.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn finish(&mut self, status: &str, verdict: Option<&str>, error: Option<String>) {
        self.body.insert("status".into(), json!(status));
        self.body.insert("verdict".into(), json!(verdict));
        self.body.insert("error".into(), json!(error));
    }

    pub fn write(mut self, dir: &Path) -> anyhow::Result<()> {
        let command = self.body["command"].as_str().unwrap_or("run").to_string();
        self.body.insert("result".into(), Value::Object(self.result));
        self.body.insert("files".into(), json!(self.files));
        self.body.insert("timings".into(), Value::Object(self.timings));
        let path = dir.join(format!("summary_{command}.json"));
        let text = serde_json::to_string_pretty(&Value::Object(self.body))?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
