use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::job::{Common, Failure, Format, SweepRow};

/// Pretty JSON to `--out` or stdout. CSV is only defined for sweeps.
pub fn emit<T: Serialize>(c: &Common, value: &T) -> Result<(), Failure> {
    if c.format == Format::Csv {
        return Err(Failure::from(almred::Error::InvalidArgument("--format csv is only available for sweep".into())));
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| internal(e.to_string()))?;
    write_text(c.out.as_deref(), &text).map_err(|e| internal(e.to_string()))
}

fn internal(msg: String) -> Failure {
    Failure::Internal(serde_json::json!({"status": "internal_error", "error": "Io", "message": msg}))
}

pub fn write_text(out: Option<&Path>, text: &str) -> std::io::Result<()> {
    let text = text.trim_end_matches('\n');
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n")),
        None => {
            let mut h = std::io::stdout().lock();
            match writeln!(h, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r,
            }
        }
    }
}

/// Header: `param,value,lambda,energy,L0,classification,case,residual,error`.
/// Floats are written exactly as in the JSON output (shortest round-trip form).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("param,value,lambda,energy,L0,classification,case,residual,error\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            word(&r.param),
            num(r.value),
            num(r.lambda),
            num(r.energy),
            num(r.l0),
            word(&r.classification),
            r.case.as_ref().map(word).unwrap_or_default(),
            r.residual.map(num).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ));
    }
    s
}

/// Serde name of a unit enum variant.
fn word<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn num(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_default()
}
