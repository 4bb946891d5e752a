use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Efficiency {
    pub name: String,
    pub eta: f64,
}

/// Ordered multiplicative efficiency budget.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EfficiencyChain {
    entries: Vec<Efficiency>,
}

impl EfficiencyChain {
    pub fn new(entries: Vec<Efficiency>) -> Result<Self> {
        let chain = Self { entries };
        chain.validate()?;
        Ok(chain)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, eta)| Efficiency {
                    name: name.to_string(),
                    eta,
                })
                .collect(),
        )
    }

    /// Propagation, homodyne visibility squared and detector quantum
    /// efficiency of the fiber homodyne setup.
    pub fn detection_default() -> Self {
        Self::from_pairs([
            ("propagation", 0.80),
            ("visibility_squared", 0.99 * 0.99),
            ("detector", 0.934),
        ])
        .expect("static chain is valid")
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if !(e.eta > 0.0 && e.eta <= 1.0) {
                return Err(Error::Domain(format!(
                    "efficiency '{}' = {} outside (0, 1]",
                    e.name, e.eta
                )));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[Efficiency] {
        &self.entries
    }

    pub fn push(&mut self, name: &str, eta: f64) -> Result<()> {
        self.entries.push(Efficiency {
            name: name.to_string(),
            eta,
        });
        self.validate()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.eta).product()
    }
}

/// Solves for the single unknown (`None`) entry so that the chain product
/// equals `target_total`.
pub fn solve_missing_entry(entries: &[(&str, Option<f64>)], target_total: f64) -> Result<f64> {
    let unknowns = entries.iter().filter(|(_, e)| e.is_none()).count();
    if unknowns != 1 {
        return Err(Error::Underdetermined { unknowns });
    }
    let known: f64 = entries.iter().filter_map(|(_, e)| *e).product();
    let eta = target_total / known;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!(
            "target {target_total} needs an entry of {eta}, outside (0, 1]"
        )));
    }
    Ok(eta)
}

/// Near-threshold, zero-frequency squeezing bound `10 log10(1 - eta)`.
pub fn asymptotic_squeezing_db(eta_total: f64) -> Result<f64> {
    if eta_total >= 1.0 {
        return Err(Error::UnboundedSqueezing);
    }
    if !(eta_total >= 0.0) {
        return Err(Error::Domain(format!("efficiency {eta_total} must be >= 0")));
    }
    Ok(10.0 * (1.0 - eta_total).log10())
}
