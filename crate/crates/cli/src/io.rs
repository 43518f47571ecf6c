use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use gridfill::error::Context;
use gridfill::{CustomerSeries, Error, HighResSeries, LowResSeries, Result};
use serde::Serialize;

pub const CUSTOMERS_SUFFIX: &str = "_customers.csv";
pub const RUN_MANIFEST: &str = "run_manifest.json";

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

/// Creates `path` and its parent directories for writing.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// Load CSVs in a directory, excluding customer files, in name order.
pub fn load_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        name.ends_with(".csv") && !name.ends_with(CUSTOMERS_SUFFIX)
    });
    files.sort();
    Ok(files)
}

/// High-resolution series from a CSV file or every load CSV in a directory.
pub fn read_high_res(path: &Path) -> Result<Vec<HighResSeries>> {
    let files = if path.is_dir() { load_files(path)? } else { vec![path.to_path_buf()] };
    let mut out = Vec::new();
    for f in files {
        out.extend(HighResSeries::read_csv(open(&f)?, None).with_context(|| format!("reading {}", f.display()))?);
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = out.iter().find(|s| !seen.insert(s.transformer_id.clone())) {
        return Err(Error::Input(format!("transformer {} appears more than once in {}", dup.transformer_id, path.display())));
    }
    Ok(out)
}

pub fn read_low_res(path: &Path, low_dt: i64) -> Result<Vec<LowResSeries>> {
    LowResSeries::read_csv(open(path)?, Some(low_dt)).with_context(|| format!("reading {}", path.display()))
}

/// Customer series grouped by transformer.
pub fn read_customers(path: &Path, low_dt: i64) -> Result<BTreeMap<String, Vec<CustomerSeries>>> {
    let all = CustomerSeries::read_csv(open(path)?, Some(low_dt)).with_context(|| format!("reading {}", path.display()))?;
    let mut by_tx: BTreeMap<String, Vec<CustomerSeries>> = BTreeMap::new();
    for c in all {
        by_tx.entry(c.transformer_id.clone()).or_default().push(c);
    }
    Ok(by_tx)
}

/// Provenance written next to every output.
#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl<'a> RunManifest<'a> {
    pub fn new(command: &'a str, seed: Option<u64>, config_sha256: String) -> Self {
        Self {
            tool: "gridfill",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_sha256,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, p: &Path) -> Self {
        self.inputs.push(p.display().to_string());
        self
    }

    pub fn output(mut self, p: &Path) -> Self {
        self.outputs.push(p.display().to_string());
        self
    }

    /// `run_manifest.json` inside a directory output, `<file>.manifest.json`
    /// beside a file output.
    pub fn write_beside(&self, out: &Path) -> Result<PathBuf> {
        let path = if out.is_dir() {
            out.join(RUN_MANIFEST)
        } else {
            let name = out.file_name().and_then(|n| n.to_str()).unwrap_or("output");
            out.with_file_name(format!("{name}.manifest.json"))
        };
        write_json(&path, self)?;
        Ok(path)
    }
}
