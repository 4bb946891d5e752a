use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::estimate::FitReport;

/// One named value; `stderr` is absent for fixed or exact values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub unit: String,
}

impl Entry {
    pub fn new(name: &str, value: f64, unit: &str) -> Self {
        Self {
            name: name.into(),
            value,
            stderr: None,
            unit: unit.into(),
        }
    }

    pub fn with_error(name: &str, value: f64, stderr: f64, unit: &str) -> Self {
        Self {
            name: name.into(),
            value,
            stderr: stderr.is_finite().then_some(stderr),
            unit: unit.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub chi2: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
}

/// Summary of one command run. Contains no timestamps or paths outside the
/// output directory, so identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub tool_version: String,
    pub input_digest: String,
    pub parameters: Vec<Entry>,
    pub derived: Vec<Entry>,
    pub quantities: Vec<Entry>,
    pub fit: Option<FitSummary>,
    pub notes: Vec<String>,
    pub outputs: Vec<String>,
}

impl Report {
    pub fn new(command: &str, digest: String) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            input_digest: digest,
            parameters: Vec::new(),
            derived: Vec::new(),
            quantities: Vec::new(),
            fit: None,
            notes: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Copies parameters, derived values, fit statistics and notes of a fit.
    /// `units` maps parameter names to units.
    pub fn add_fit(&mut self, rep: &FitReport, units: &[(&str, &str)]) {
        let unit = |n: &str| units.iter().find(|(k, _)| *k == n).map_or("", |(_, u)| *u);
        for (i, name) in rep.names.iter().enumerate() {
            let err = rep.stderr[i];
            self.parameters.push(Entry {
                name: name.clone(),
                value: rep.values[i],
                stderr: err.is_finite().then_some(err),
                unit: unit(name).into(),
            });
        }
        for (name, value) in &rep.fixed {
            self.parameters.push(Entry::new(name, *value, unit(name)));
        }
        for d in &rep.derived {
            self.derived.push(Entry {
                name: d.name.clone(),
                value: d.value,
                stderr: d.stderr.is_finite().then_some(d.stderr),
                unit: unit(&d.name).into(),
            });
        }
        self.fit = Some(FitSummary {
            chi2: rep.chi2,
            dof: rep.dof,
            converged: rep.converged,
            iterations: rep.n_iter,
        });
        self.notes.extend(rep.notes.iter().cloned());
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} (sqzlab {})", self.command, self.tool_version);
        let _ = writeln!(s, "input digest {}", self.input_digest);
        let mut section = |title: &str, entries: &[Entry]| {
            if entries.is_empty() {
                return;
            }
            let _ = writeln!(s, "\n{title}:");
            for e in entries {
                let err = e.stderr.map(|v| format!(" ± {}", fmt_num(v))).unwrap_or_default();
                let unit = if e.unit.is_empty() {
                    String::new()
                } else {
                    format!(" {}", e.unit)
                };
                let _ = writeln!(s, "  {:<28} {}{err}{unit}", e.name, fmt_num(e.value));
            }
        };
        section("parameters", &self.parameters);
        section("derived", &self.derived);
        section("quantities", &self.quantities);
        if let Some(f) = &self.fit {
            let _ = writeln!(
                s,
                "\nchi2 {} with {} dof, {} after {} iterations",
                fmt_num(f.chi2),
                f.dof,
                if f.converged { "converged" } else { "not converged" },
                f.iterations
            );
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "\nnotes:");
            for n in &self.notes {
                let _ = writeln!(s, "  - {n}");
            }
        }
        if !self.outputs.is_empty() {
            let _ = writeln!(s, "\noutputs: {}", self.outputs.join(", "));
        }
        s
    }
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        format!("{v}")
    } else if (1e-3..1e5).contains(&v.abs()) {
        format!("{v:.6}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.6e}")
    }
}

/// Hex SHA-256 of the given byte chunks, each length-prefixed.
pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}
