use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::Command;

use semver::{Version, VersionReq};
use serde::{Deserialize, Serialize};

use super::input::parse_ast_text;
use super::{AstError, RawAstDocument};

/// Maps compiler version ranges to executables.
///
/// ```toml
/// [compilers]
/// ">=0.8.0" = "/opt/solc/solc-0.8.19"
/// ">=0.6.0, <0.8.0" = "/opt/solc/solc-0.6.12"
/// ```
///
/// Ranges are tried in lexicographic key order; the first match wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompilerConfig {
    #[serde(default)]
    pub compilers: BTreeMap<String, PathBuf>,
}

impl CompilerConfig {
    pub fn from_toml(text: &str) -> Result<Self, AstError> {
        let config: CompilerConfig = toml::from_str(text).map_err(|e| AstError::Config(e.to_string()))?;
        for range in config.compilers.keys() {
            VersionReq::parse(range).map_err(|e| AstError::Config(format!("range {range:?}: {e}")))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, AstError> {
        let text = std::fs::read_to_string(path).map_err(|source| AstError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Executable configured for `version` (`0.8`, `0.8.19`, `v0.8.19` ...).
    pub fn locate(&self, version: &str) -> Result<&Path, AstError> {
        let parsed = parse_version(version).ok_or_else(|| AstError::CompilerNotFound {
            version: version.to_owned(),
            detail: "not a concrete version".into(),
        })?;
        self.compilers
            .iter()
            .find(|(range, _)| VersionReq::parse(range).is_ok_and(|req| req.matches(&parsed)))
            .map(|(_, exe)| exe.as_path())
            .ok_or_else(|| AstError::CompilerNotFound {
                version: version.to_owned(),
                detail: "no configured range matches".into(),
            })
    }
}

fn parse_version(text: &str) -> Option<Version> {
    let text = text.trim().trim_start_matches('v');
    let dots = text.matches('.').count();
    let padded = match dots {
        0 => format!("{text}.0.0"),
        1 => format!("{text}.0"),
        _ => text.to_owned(),
    };
    Version::parse(&padded).ok()
}

/// Runs the configured compiler on `source_path` and returns the AST it
/// emits for that file. The source is never modified.
pub fn invoke_external_compiler(
    config: &CompilerConfig,
    source_path: &Path,
    version: &str,
) -> Result<RawAstDocument, AstError> {
    let exe = config.locate(version)?;
    let output = Command::new(exe)
        .arg("--ast-compact-json")
        .arg(source_path)
        .output()
        .map_err(|e| match e.kind() {
            ErrorKind::NotFound | ErrorKind::PermissionDenied => AstError::CompilerNotFound {
                version: version.to_owned(),
                detail: format!("{}: {e}", exe.display()),
            },
            _ => AstError::Io { path: exe.display().to_string(), source: e },
        })?;

    let display = source_path.display().to_string();
    if !output.status.success() {
        return Err(AstError::CompilationFailed {
            path: display,
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let mut docs = parse_ast_text(&stdout, &display)?;
    let file_name = source_path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let pick = docs
        .iter()
        .position(|d| d.source_unit_path.ends_with(file_name))
        .unwrap_or(0);
    if docs.is_empty() {
        return Err(AstError::CompilationFailed { path: display, stderr: "compiler emitted no AST".into() });
    }
    let mut doc = docs.swap_remove(pick);
    doc.compiler_version = version.to_owned();
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_padding() {
        assert_eq!(parse_version("0.8"), Some(Version::new(0, 8, 0)));
        assert_eq!(parse_version("v0.6.12"), Some(Version::new(0, 6, 12)));
        assert_eq!(parse_version("^0.8.0"), None);
    }

    #[test]
    fn locate_by_range() {
        let config = CompilerConfig::from_toml(
            "[compilers]\n\">=0.8.0\" = \"/opt/solc8\"\n\">=0.6.0, <0.8.0\" = \"/opt/solc6\"\n",
        )
        .unwrap();
        assert_eq!(config.locate("0.8.19").unwrap(), Path::new("/opt/solc8"));
        assert_eq!(config.locate("0.6.12").unwrap(), Path::new("/opt/solc6"));
        assert!(matches!(config.locate("0.5.0"), Err(AstError::CompilerNotFound { .. })));
    }

    #[test]
    fn bad_range_rejected() {
        assert!(matches!(
            CompilerConfig::from_toml("[compilers]\n\"nonsense\" = \"/x\"\n"),
            Err(AstError::Config(_))
        ));
    }

    #[test]
    fn missing_executable() {
        let config = CompilerConfig::from_toml("[compilers]\n\"*\" = \"/nonexistent/solc-xyz\"\n").unwrap();
        let err = invoke_external_compiler(&config, Path::new("A.sol"), "0.8.0").unwrap_err();
        assert!(matches!(err, AstError::CompilerNotFound { .. }));
    }
}
