use std::path::PathBuf;

use recbench::data::{
    default_cache_root, prepare_report, DatasetDescriptor, Prepared, SyntheticSpec, KNOWN_DATASETS,
    SYNTHETIC_PREFIX,
};
use recbench::Split;

use crate::error::{CliError, CliResult};

/// Used for a bare `synthetic`.
pub const DEFAULT_SYNTHETIC: SyntheticSpec = SyntheticSpec {
    users: 200,
    items: 300,
    rank: 8,
    seed: 0,
};

/// Where published datasets come from and are cached.
#[derive(Debug, Clone, Default)]
pub struct DataSource {
    pub cache_root: Option<PathBuf>,
    pub base_url: Option<String>,
}

impl DataSource {
    pub fn cache_root(&self) -> PathBuf {
        self.cache_root.clone().unwrap_or_else(default_cache_root)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetRef {
    Synthetic(SyntheticSpec),
    Published(String),
}

impl DatasetRef {
    /// Unknown names are usage errors.
    pub fn parse(name: &str) -> CliResult<Self> {
        if name == "synthetic" {
            return Ok(DatasetRef::Synthetic(DEFAULT_SYNTHETIC));
        }
        if name.starts_with(SYNTHETIC_PREFIX) {
            return name
                .parse()
                .map(DatasetRef::Synthetic)
                .map_err(|e| CliError::usage(e.to_string()));
        }
        if KNOWN_DATASETS.contains(&name) {
            return Ok(DatasetRef::Published(name.to_string()));
        }
        Err(CliError::usage(format!(
            "unknown dataset `{name}`; expected one of {}, `synthetic` or synthetic:<users>x<items>:rank<r>:seed<s>",
            KNOWN_DATASETS.join(", ")
        )))
    }

    /// The id recorded in contexts.
    pub fn id(&self) -> String {
        match self {
            DatasetRef::Synthetic(s) => s.to_string(),
            DatasetRef::Published(n) => n.clone(),
        }
    }

    pub fn descriptor(&self, src: &DataSource) -> CliResult<Option<DatasetDescriptor>> {
        match self {
            DatasetRef::Synthetic(_) => Ok(None),
            DatasetRef::Published(n) => Ok(Some(DatasetDescriptor::known(
                n,
                src.base_url.as_deref(),
                src.cache_root(),
            )?)),
        }
    }

    /// Published datasets go through the cache; synthetic ones are generated.
    pub fn prepare(&self, src: &DataSource) -> CliResult<Option<Prepared>> {
        match self.descriptor(src)? {
            Some(d) => Ok(Some(prepare_report(&d)?)),
            None => Ok(None),
        }
    }

    pub fn load(&self, src: &DataSource) -> CliResult<Split> {
        match self {
            DatasetRef::Synthetic(s) => Ok(s.generate()?),
            DatasetRef::Published(_) => Ok(self.prepare(src)?.expect("published").split),
        }
    }
}

/// `1561406` -> `1,561,406`.
pub fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_groups() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(31668), "31,668");
        assert_eq!(thousands(1561406), "1,561,406");
    }

    #[test]
    fn parse_names() {
        assert_eq!(DatasetRef::parse("synthetic").unwrap().id(), "synthetic:200x300:rank8:seed0");
        assert_eq!(DatasetRef::parse("gowalla").unwrap(), DatasetRef::Published("gowalla".into()));
        assert_eq!(DatasetRef::parse("movielens").unwrap_err().exit_code(), 2);
        assert_eq!(DatasetRef::parse("synthetic:3x").unwrap_err().exit_code(), 2);
    }
}
