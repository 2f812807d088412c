//! JSON scenario documents.
//!
//! ```json
//! {
//!   "market": {"m": 4, "p": 2, "t_slots": 52, "d_total": 3.2, "phi": 1,
//!              "alpha_l": 0.8, "alpha_u": 0.9, "osa": "overlay"},
//!   "operators": [
//!     {"id": 1, "tier": "licensed", "mu_theta": 1.0, "sigma_theta": 0.5,
//!      "revenue_slope": 1.0, "revenue_cv": 0.5, "rho": 0.8, "omega": 0.9,
//!      "mer_fraction": 0.3}
//!   ]
//! }
//! ```
//!
//! `m` defaults to 1 and `p` to 0; `bandwidth_hz` is optional.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketParams, MarketScenario, OperatorProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Licensed,
    Unlicensed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorEntry {
    pub tier: Tier,
    #[serde(flatten)]
    pub profile: OperatorProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    pub market: MarketParams,
    pub operators: Vec<OperatorEntry>,
}

impl ScenarioDocument {
    pub fn new(scenario: &MarketScenario, market: MarketParams) -> Self {
        let entry = |tier| move |p: &OperatorProfile| OperatorEntry { tier, profile: p.clone() };
        let operators = scenario
            .licensed_candidates
            .iter()
            .map(entry(Tier::Licensed))
            .chain(scenario.unlicensed_candidates.iter().map(entry(Tier::Unlicensed)))
            .collect();
        ScenarioDocument { market, operators }
    }

    pub fn scenario(&self) -> MarketScenario {
        let pick = |tier| self.operators.iter().filter(|o| o.tier == tier).map(|o| o.profile.clone()).collect();
        MarketScenario { licensed_candidates: pick(Tier::Licensed), unlicensed_candidates: pick(Tier::Unlicensed) }
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.scenario().validate()
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_owned(), source })
}

pub fn load_scenario(path: &Path) -> Result<ScenarioDocument> {
    let doc: ScenarioDocument = read_json(path)?;
    doc.validate()?;
    Ok(doc)
}

pub fn save_scenario(path: &Path, doc: &ScenarioDocument) -> Result<()> {
    let text = serde_json::to_string_pretty(doc).expect("scenario documents always serialise");
    fs::write(path, text + "\n").map_err(|source| Error::Io { path: path.to_owned(), source })
}
