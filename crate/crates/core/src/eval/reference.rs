//! Published benchmark numbers shipped as a fixture for table formatting.
//! Values are kept as the original strings so rendering never reformats them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REFERENCE_RESULTS_JSON: &str = include_str!("../../fixtures/reference_results.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceRow {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceTable {
    pub name: String,
    pub row_header: String,
    /// Dataset names; each spans `columns.len()` values.
    pub groups: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<ReferenceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceResults {
    pub label: String,
    pub metric: String,
    pub tables: Vec<ReferenceTable>,
}

impl ReferenceResults {
    pub fn bundled() -> Self {
        Self::parse(REFERENCE_RESULTS_JSON).expect("bundled fixture parses")
    }

    pub fn parse(json: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(json).map_err(|e| Error::invalid("eval", format!("reference results: {e}")))?;
        for t in &r.tables {
            let width = t.groups.len() * t.columns.len();
            if let Some(row) = t.rows.iter().find(|row| row.values.len() != width) {
                return Err(Error::invalid("eval", format!("row `{}` of `{}` has {} values, expected {width}", row.name, t.name, row.values.len())));
            }
        }
        Ok(r)
    }

    pub fn table(&self, name: &str) -> Option<&ReferenceTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{} ({})\n", self.metric, self.label);
        for t in &self.tables {
            s.push('\n');
            s.push_str(&t.render());
        }
        s
    }
}

impl ReferenceTable {
    pub fn row(&self, name: &str) -> Option<&ReferenceRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Plain-text grid; cell strings are copied verbatim.
    pub fn render(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.name.len()).chain([self.row_header.len()]).max().unwrap_or(0);
        let cell_w = self
            .rows
            .iter()
            .flat_map(|r| r.values.iter().map(String::len))
            .chain(self.columns.iter().map(String::len))
            .max()
            .unwrap_or(0);
        let group_w = self.columns.len() * (cell_w + 1) - 1;
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.name);
        let _ = write!(s, "{:name_w$}", "");
        for g in &self.groups {
            let _ = write!(s, " | {g:^group_w$}");
        }
        s.push('\n');
        let _ = write!(s, "{:<name_w$}", self.row_header);
        for _ in &self.groups {
            s.push_str(" |");
            for c in &self.columns {
                let _ = write!(s, " {c:>cell_w$}");
            }
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:<name_w$}", r.name);
            for chunk in r.values.chunks(self.columns.len()) {
                s.push_str(" |");
                for v in chunk {
                    let _ = write!(s, " {v:>cell_w$}");
                }
            }
            s.push('\n');
        }
        s
    }
}
