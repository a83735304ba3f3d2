use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DepsError;
use crate::ast::UNKNOWN_KIND;

/// The five dependency feature categories a retained node can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyCategory {
    Declaration,
    Expression,
    Control,
    Data,
    Function,
}

impl DependencyCategory {
    pub const ALL: [DependencyCategory; 5] = [
        DependencyCategory::Declaration,
        DependencyCategory::Expression,
        DependencyCategory::Control,
        DependencyCategory::Data,
        DependencyCategory::Function,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DependencyCategory::Declaration => "declaration",
            DependencyCategory::Expression => "expression",
            DependencyCategory::Control => "control",
            DependencyCategory::Data => "data",
            DependencyCategory::Function => "function",
        }
    }
}

impl fmt::Display for DependencyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DependencyCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DependencyCategory::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown dependency category {s:?}"))
    }
}

const DEFAULT_LABELS: &str = include_str!("../../data/default_labels.tsv");

/// The set `L` of retained syntax-element kinds, each mapped to its category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    labels: BTreeMap<String, DependencyCategory>,
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet::parse(DEFAULT_LABELS).expect("bundled label table is valid")
    }
}

impl LabelSet {
    pub fn new(labels: BTreeMap<String, DependencyCategory>) -> Result<Self, DepsError> {
        if labels.is_empty() {
            return Err(DepsError::EmptyLabelSet);
        }
        Ok(LabelSet { labels })
    }

    /// Parses a `kind<TAB>category` table. Blank lines and `#` comments are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self, DepsError> {
        let mut labels = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (kind, category) = line
                .split_once('\t')
                .ok_or_else(|| DepsError::LabelTable { line: lineno + 1, reason: "expected kind<TAB>category".into() })?;
            let category = category
                .parse()
                .map_err(|reason| DepsError::LabelTable { line: lineno + 1, reason })?;
            labels.insert(kind.trim().to_owned(), category);
        }
        LabelSet::new(labels)
    }

    pub fn load(path: &Path) -> Result<Self, DepsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DepsError::LabelTable { line: 0, reason: format!("{}: {e}", path.display()) })?;
        LabelSet::parse(&text)
    }

    /// Category of `kind`; `Unknown` kinds are never categorized.
    pub fn category(&self, kind: &str) -> Option<DependencyCategory> {
        if kind == UNKNOWN_KIND {
            return None;
        }
        self.labels.get(kind).copied()
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.category(kind).is_some()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, DependencyCategory)> {
        self.labels.iter().map(|(k, c)| (k.as_str(), *c))
    }

    /// Restricts the set to kinds satisfying `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&str) -> bool) -> Result<Self, DepsError> {
        LabelSet::new(self.labels.iter().filter(|(k, _)| keep(k)).map(|(k, c)| (k.clone(), *c)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_covers_all_categories() {
        let labels = LabelSet::default();
        assert!(labels.len() >= 30);
        for category in DependencyCategory::ALL {
            assert!(labels.iter().any(|(_, c)| c == category), "{category} missing");
        }
        assert_eq!(labels.category("VariableDeclaration"), Some(DependencyCategory::Declaration));
        assert_eq!(labels.category("IfStatement"), Some(DependencyCategory::Control));
        assert_eq!(labels.category("PragmaDirective"), None);
    }

    #[test]
    fn unknown_kind_never_labeled() {
        let labels = LabelSet::parse("Unknown\tdata\n").unwrap();
        assert_eq!(labels.category(UNKNOWN_KIND), None);
    }

    #[test]
    fn table_errors() {
        assert!(matches!(LabelSet::parse("# nothing\n"), Err(DepsError::EmptyLabelSet)));
        assert!(matches!(LabelSet::parse("Foo declaration\n"), Err(DepsError::LabelTable { line: 1, .. })));
        assert!(matches!(LabelSet::parse("Foo\tbogus\n"), Err(DepsError::LabelTable { line: 1, .. })));
        let ok = LabelSet::parse("Foo\tControl\n\n# c\nBar\tDATA\n").unwrap();
        assert_eq!(ok.category("Bar"), Some(DependencyCategory::Data));
    }
}
