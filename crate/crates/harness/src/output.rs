//! Result bundles: CSV tables, frames, plots and a hashed manifest.

use crate::error::{HarnessError, HarnessResult};
use proscan_core::imaging::Frame;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Shortest decimal text that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Headline metrics of a run, keyed by name.
pub type Summary = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario_kind: String,
    pub seed: u64,
    pub config_sha256: String,
    pub versions: BTreeMap<String, String>,
    /// Numeric outputs (tables, frames, summary).
    pub files: Vec<FileEntry>,
    /// Plots are listed separately; they never enter `outputs_sha256`.
    #[serde(default)]
    pub plots: Vec<FileEntry>,
    /// Digest over the `path:sha256` lines of `files`.
    pub outputs_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Bundle {
    dir: PathBuf,
    plots: bool,
    files: Vec<FileEntry>,
    plot_files: Vec<FileEntry>,
    warnings: Vec<String>,
}

impl Bundle {
    pub fn create(dir: &Path, plots: bool) -> HarnessResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), plots, files: Vec::new(), plot_files: Vec::new(), warnings: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> HarnessResult<FileEntry> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        Ok(FileEntry { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> HarnessResult<()> {
        let entry = self.put(name, bytes)?;
        self.files.push(entry);
        Ok(())
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> HarnessResult<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let bytes = csv_bytes(header, rows)?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> HarnessResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable value");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// 16-bit PGM plus a JSON sidecar describing the camera and placement.
    pub fn write_frame(&mut self, stem: &str, frame: &Frame<f64>, meta: FrameMeta) -> HarnessResult<()> {
        let pgm = encode_pgm(frame);
        self.write_bytes(&format!("{stem}.pgm"), &pgm)?;
        let sidecar = FrameSidecar {
            width: frame.width(),
            height: frame.height(),
            origin_nm: frame.origin(),
            camera: *frame.camera(),
            seed: meta.seed,
            frame_index: meta.frame_index,
            roi_half_px: meta.roi_half_px,
        };
        self.write_json(&format!("{stem}.json"), &sidecar)
    }

    /// Renders an SVG plot; failures are kept as warnings only.
    pub fn plot(&mut self, name: &str, spec: &crate::plot::PlotSpec) {
        if !self.plots {
            return;
        }
        let result = crate::plot::render_svg(spec)
            .map_err(|e| e.to_string())
            .and_then(|svg| self.put(name, svg.as_bytes()).map_err(|e| e.to_string()));
        match result {
            Ok(entry) => self.plot_files.push(entry),
            Err(e) => self.warnings.push(format!("plot {name}: {e}")),
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn finish(mut self, kind: &str, seed: u64, config_json: &str) -> HarnessResult<Manifest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.plot_files.sort_by(|a, b| a.path.cmp(&b.path));
        let listing: String = self.files.iter().map(|f| format!("{}:{}\n", f.path, f.sha256)).collect();
        let versions = BTreeMap::from([
            ("proscan-core".to_string(), proscan_core::VERSION.to_string()),
            ("proscan-harness".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]);
        let manifest = Manifest {
            scenario_kind: kind.to_string(),
            seed,
            config_sha256: sha256_hex(config_json.as_bytes()),
            versions,
            outputs_sha256: sha256_hex(listing.as_bytes()),
            files: self.files,
            plots: self.plot_files,
        };
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn csv_bytes<I>(header: &[&str], rows: I) -> HarnessResult<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| HarnessError::Config(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| HarnessError::Config(format!("csv: {e}")))
}

#[derive(Debug, Clone, Copy)]
pub struct FrameMeta {
    pub seed: u64,
    pub frame_index: usize,
    pub roi_half_px: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub width: usize,
    pub height: usize,
    pub origin_nm: [f64; 2],
    pub camera: proscan_core::imaging::CameraModel<f64>,
    pub seed: u64,
    pub frame_index: usize,
    pub roi_half_px: usize,
}

/// Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples).
pub fn encode_pgm(frame: &Frame<f64>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.pixels().iter().flat_map(|p| p.to_be_bytes()));
    out
}

/// Reads a frame written by [`Bundle::write_frame`]; the sidecar sits next to
/// the image with a `.json` extension.
pub fn read_frame(path: &Path) -> HarnessResult<(Frame<f64>, FrameSidecar)> {
    let sidecar_path = path.with_extension("json");
    let text = std::fs::read_to_string(&sidecar_path).map_err(|e| HarnessError::io(&sidecar_path, e))?;
    let meta: FrameSidecar = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", sidecar_path.display())))?;
    let img = image::ImageReader::open(path)
        .map_err(|e| HarnessError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| HarnessError::io(path, e))?
        .decode()
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
        .into_luma16();
    if (img.width() as usize, img.height() as usize) != (meta.width, meta.height) {
        return Err(HarnessError::Config(format!(
            "{}: image is {}x{} but the sidecar says {}x{}",
            path.display(),
            img.width(),
            img.height(),
            meta.width,
            meta.height
        )));
    }
    let frame = Frame::new(meta.width, meta.height, img.into_raw(), meta.origin_nm, meta.camera)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    Ok((frame, meta))
}
