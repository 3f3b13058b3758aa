use std::env;
use std::fs::{self, File};
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::cache::{encode_split, read_split_cache, write_atomic, CacheLock};
use super::{build_split, parse_adjacency_list, DataError, Split};

/// Environment variable overriding the dataset cache root.
pub const CACHE_ENV: &str = "RECBENCH_CACHE";

/// Default location of the published LightGCN train/test files.
pub const DEFAULT_BASE_URL: &str = "https://raw.githubusercontent.com/kuandeng/LightGCN/master/Data";

/// Datasets with built-in descriptors.
pub const KNOWN_DATASETS: &[&str] = &["yelp2018", "gowalla"];

pub const TRAIN_FILE: &str = "train.txt";
pub const TEST_FILE: &str = "test.txt";

/// `$RECBENCH_CACHE`, else `$HOME/.cache/recbench`, else `./.recbench-cache`.
pub fn default_cache_root() -> PathBuf {
    if let Some(root) = env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(root);
    }
    match env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".cache").join("recbench"),
        None => PathBuf::from(".recbench-cache"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteFile {
    pub name: String,
    /// Tried in order; `file://` URLs and bare paths are copied locally.
    pub urls: Vec<String>,
    /// Lowercase hex SHA-256.
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetDescriptor {
    name: String,
    files: Vec<RemoteFile>,
    cache_root: PathBuf,
}

impl DatasetDescriptor {
    pub fn new(
        name: impl Into<String>,
        files: Vec<RemoteFile>,
        cache_root: impl Into<PathBuf>,
    ) -> Result<Self, DataError> {
        let name = name.into();
        if name.is_empty()
            || name.starts_with('.')
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(DataError::InvalidDescriptor(format!(
                "dataset name `{name}` is not filesystem-safe"
            )));
        }
        for required in [TRAIN_FILE, TEST_FILE] {
            if !files.iter().any(|f| f.name == required) {
                return Err(DataError::InvalidDescriptor(format!(
                    "descriptor for `{name}` lacks {required}"
                )));
            }
        }
        for f in &files {
            if f.urls.is_empty() {
                return Err(DataError::InvalidDescriptor(format!(
                    "no source url for {}",
                    f.name
                )));
            }
            if f.name.contains('/') || f.name.contains('\\') || f.name.starts_with('.') {
                return Err(DataError::InvalidDescriptor(format!(
                    "file name `{}` is not filesystem-safe",
                    f.name
                )));
            }
        }
        Ok(Self {
            name,
            files,
            cache_root: cache_root.into(),
        })
    }

    /// Descriptor for a dataset laid out as `<base_url>/<name>/{train,test}.txt`.
    pub fn lightgcn_layout(
        name: &str,
        base_url: &str,
        cache_root: impl Into<PathBuf>,
    ) -> Result<Self, DataError> {
        let base = base_url.trim_end_matches('/');
        let files = [TRAIN_FILE, TEST_FILE]
            .iter()
            .map(|f| RemoteFile {
                name: f.to_string(),
                urls: vec![format!("{base}/{name}/{f}")],
                sha256: None,
            })
            .collect();
        Self::new(name, files, cache_root)
    }

    /// Built-in descriptor for one of [`KNOWN_DATASETS`].
    pub fn known(
        name: &str,
        base_url: Option<&str>,
        cache_root: impl Into<PathBuf>,
    ) -> Result<Self, DataError> {
        if !KNOWN_DATASETS.contains(&name) {
            return Err(DataError::UnknownDataset(name.to_string()));
        }
        Self::lightgcn_layout(name, base_url.unwrap_or(DEFAULT_BASE_URL), cache_root)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn files(&self) -> &[RemoteFile] {
        &self.files
    }

    pub fn cache_root(&self) -> &Path {
        &self.cache_root
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.cache_root.join(&self.name)
    }

    pub fn raw_dir(&self) -> PathBuf {
        self.dataset_dir().join("raw")
    }

    pub fn split_cache_path(&self) -> PathBuf {
        self.dataset_dir().join("processed").join("split.bin")
    }

    fn raw_path(&self, file: &str) -> PathBuf {
        self.raw_dir().join(file)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchReport {
    pub paths: Vec<PathBuf>,
    /// Names of files that were not already cached.
    pub downloaded: Vec<String>,
}

impl FetchReport {
    pub fn fully_cached(&self) -> bool {
        self.downloaded.is_empty()
    }
}

/// Makes every raw file of `descriptor` present in the cache. Files already
/// cached (and matching their checksum) are not re-fetched.
pub fn fetch(descriptor: &DatasetDescriptor) -> Result<FetchReport, DataError> {
    let _lock = CacheLock::acquire(&descriptor.dataset_dir())?;
    fetch_locked(descriptor)
}

fn fetch_locked(descriptor: &DatasetDescriptor) -> Result<FetchReport, DataError> {
    fs::create_dir_all(descriptor.raw_dir())?;
    let mut report = FetchReport {
        paths: Vec::new(),
        downloaded: Vec::new(),
    };
    for file in descriptor.files() {
        let target = descriptor.raw_path(&file.name);
        let cached = target.is_file()
            && match &file.sha256 {
                Some(expected) => {
                    let ok = sha256_file(&target)? == expected.to_ascii_lowercase();
                    if !ok {
                        log::warn!("cached {} fails its checksum, refetching", target.display());
                        fs::remove_file(&target)?;
                    }
                    ok
                }
                None => true,
            };
        if !cached {
            download_any(&file.urls, &target)?;
            if let Some(expected) = &file.sha256 {
                let actual = sha256_file(&target)?;
                if actual != expected.to_ascii_lowercase() {
                    fs::remove_file(&target)?;
                    return Err(DataError::CorruptData {
                        path: target,
                        expected: expected.clone(),
                        actual,
                    });
                }
            }
            report.downloaded.push(file.name.clone());
        }
        report.paths.push(target);
    }
    Ok(report)
}

/// Result of [`prepare_report`].
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: Split,
    /// The processed cache was loaded without re-parsing.
    pub cache_hit: bool,
    pub cache_path: PathBuf,
}

/// Fetch, parse, check and cache a split; later calls read the cache.
pub fn prepare(descriptor: &DatasetDescriptor) -> Result<Split, DataError> {
    prepare_report(descriptor).map(|p| p.split)
}

pub fn prepare_report(descriptor: &DatasetDescriptor) -> Result<Prepared, DataError> {
    let _lock = CacheLock::acquire(&descriptor.dataset_dir())?;
    let cache_path = descriptor.split_cache_path();
    if cache_path.is_file() {
        match read_split_cache(&cache_path) {
            Ok(split) => {
                return Ok(Prepared {
                    split,
                    cache_hit: true,
                    cache_path,
                })
            }
            Err(e) => {
                log::warn!("discarding split cache {}: {e}", cache_path.display());
                fs::remove_file(&cache_path)?;
            }
        }
    }
    fetch_locked(descriptor)?;
    let train = parse_file(&descriptor.raw_path(TRAIN_FILE))?;
    let test = parse_file(&descriptor.raw_path(TEST_FILE))?;
    let split = build_split(train, test)?;
    let empty = split.train().empty_users().len();
    if empty > 0 {
        log::warn!("{}: {empty} users have no training interactions", descriptor.name());
    }
    write_atomic(&cache_path, &encode_split(&split))?;
    Ok(Prepared {
        split,
        cache_hit: false,
        cache_path,
    })
}

fn parse_file(path: &Path) -> Result<super::InteractionStore, DataError> {
    let f = File::open(path)?;
    parse_adjacency_list(BufReader::new(f), None).map_err(|e| match e {
        DataError::Parse { line, message } => DataError::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn sha256_file(path: &Path) -> Result<String, DataError> {
    let mut hasher = Sha256::new();
    let mut f = BufReader::new(File::open(path)?);
    io::copy(&mut f, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

fn download_any(urls: &[String], target: &Path) -> Result<(), DataError> {
    let mut last = None;
    for url in urls {
        match download(url, target) {
            Ok(()) => return Ok(()),
            Err(e) => {
                log::warn!("fetching {url} failed: {e}");
                last = Some(e);
            }
        }
    }
    Err(last.unwrap_or_else(|| DataError::Fetch {
        url: String::new(),
        message: "no source urls".into(),
    }))
}

fn download(url: &str, target: &Path) -> Result<(), DataError> {
    let tmp = target.with_extension("part");
    let result = (|| {
        if url.starts_with("http://") || url.starts_with("https://") {
            let resp = ureq::get(url).call().map_err(|e| DataError::Fetch {
                url: url.to_string(),
                message: e.to_string(),
            })?;
            let mut reader = resp.into_body().into_reader();
            let mut out = File::create(&tmp)?;
            io::copy(&mut reader, &mut out).map_err(|e| DataError::Fetch {
                url: url.to_string(),
                message: e.to_string(),
            })?;
        } else {
            let src = url.strip_prefix("file://").unwrap_or(url);
            fs::copy(src, &tmp).map_err(|e| DataError::Fetch {
                url: url.to_string(),
                message: e.to_string(),
            })?;
        }
        fs::rename(&tmp, target)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
