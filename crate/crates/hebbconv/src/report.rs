//! Accuracy report in plain text and JSON.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub network: String,
    pub layer: String,
    pub state: String,
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub entries: Vec<ReportEntry>,
    pub runtime_seconds: f64,
}

impl Report {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn find(&self, network: &str, layer: &str, state: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.network == network && e.layer == layer && e.state == state)
            .map(|e| e.accuracy)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<18} {:<14} {:<10} {:>9} {:>8} {:>7} {:>6}", "network", "probe", "state", "accuracy", "train", "test", "seed");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:<18} {:<14} {:<10} {:>8.2}% {:>8} {:>7} {:>6}",
                e.network,
                e.layer,
                e.state,
                100.0 * e.accuracy,
                e.n_train,
                e.n_test,
                e.seed
            );
        }
        let _ = writeln!(s, "runtime {:.1} s", self.runtime_seconds);
        s
    }
}
