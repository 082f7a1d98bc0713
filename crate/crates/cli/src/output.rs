use std::path::Path;

use serde_json::{Map, Value};

use crate::Failure;

/// Shortest decimal that round-trips, so output bytes depend only on the value.
pub fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Comma-separated text with LF line endings.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n" }
    }

    pub fn row<const N: usize>(&mut self, fields: [String; N]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn finish(&self) -> String {
        self.text.clone()
    }
}

/// Flat JSON object with string values and sorted keys.
pub fn certificate_json(fields: &[(String, String)]) -> String {
    let map: Map<String, Value> = fields.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
    let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("string map serialises");
    s.push('\n');
    s
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}
