//! JSON-lines events on stderr. Timestamps live only here, so command
//! outputs stay byte-identical across replays.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

pub fn event(level: &str, name: &str, fields: Value) {
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let mut obj = Map::new();
    obj.insert("ts".into(), json!(ts));
    obj.insert("level".into(), json!(level));
    obj.insert("event".into(), json!(name));
    if let Value::Object(extra) = fields {
        obj.extend(extra);
    }
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{}", Value::Object(obj));
}

pub fn info(name: &str, fields: Value) {
    event("info", name, fields);
}

pub fn warn(name: &str, fields: Value) {
    event("warn", name, fields);
}
