//! Sample files: UTF-8 text, one observation per line, `#` starts a comment.

use std::path::Path;

use rhomix::{Result, RhoError};

pub fn parse_sample(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let v: f64 = body
            .parse()
            .map_err(|_| RhoError::Config(format!("line {}: `{body}` is not a number", i + 1)))?;
        if !v.is_finite() {
            return Err(RhoError::Config(format!(
                "line {}: observations must be finite",
                i + 1
            )));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(RhoError::Config(
            "the data file holds no observations".into(),
        ));
    }
    Ok(out)
}

pub fn read_sample(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RhoError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_sample(&text)
}
