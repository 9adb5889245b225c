//! PNG, manifest and template-store files.

use std::fs;
use std::path::{Path, PathBuf};

use hybridaug_core::sampler::{ImageSource, TemplatePool};
use hybridaug_core::synthesis::{AcceptorTemplate, DonorTemplate, TemplateMeta};
use hybridaug_core::{BinaryMask, GrayImage, Manifest};
use image::{DynamicImage, ImageFormat, ImageReader};
use serde::Serialize;

use crate::error::{Error, Result};

fn decode_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::data(path.display(), other),
    }
}

/// Reads an 8-bit grayscale PNG. Any other colour type is rejected.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| decode_error(path, e))?;
    let DynamicImage::ImageLuma8(buf) = decoded else {
        return Err(Error::data(
            path.display(),
            format!("expected 8-bit grayscale, found {:?}", decoded.color()),
        ));
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    GrayImage::from_pixels(w, h, buf.into_raw()).map_err(|e| Error::data(path.display(), e))
}

pub fn write_gray(path: &Path, img: &GrayImage) -> Result<()> {
    ensure_parent(path)?;
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| decode_error(path, e))
}

/// Reads a mask PNG; values >= 128 are foreground.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = read_gray(path)?;
    Ok(BinaryMask::from_intensities(img.width(), img.height(), img.pixels()))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let img = GrayImage::from_pixels(mask.width(), mask.height(), mask.to_intensities())
        .map_err(|e| Error::data(path.display(), e))?;
    write_gray(path, &img)
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| Error::data(path.display(), e))?;
    write_text(path, &(text + "\n"))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).map_err(|e| Error::data(path.display(), e))?);
        out.push('\n');
    }
    write_text(path, &out)
}

/// Loads a JSON Lines manifest. The split tag is the file stem.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = read_text(path)?;
    let tag = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Manifest::from_jsonl(&text, tag).map_err(|e| Error::data(path.display(), e))
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    write_text(path, &m.to_jsonl())
}

/// Record paths are resolved against the manifest's directory.
pub fn manifest_root(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn resolve(root: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Originals decoded lazily from disk.
#[derive(Debug, Clone)]
pub struct DiskImages {
    paths: std::collections::BTreeMap<String, PathBuf>,
}

impl DiskImages {
    pub fn new(manifest: &Manifest, root: &Path) -> Self {
        Self {
            paths: manifest
                .records()
                .iter()
                .map(|r| (r.id.clone(), resolve(root, &r.path)))
                .collect(),
        }
    }
}

impl ImageSource for DiskImages {
    type Error = Error;

    fn image(&self, record_id: &str) -> Result<GrayImage> {
        let path = self
            .paths
            .get(record_id)
            .ok_or_else(|| Error::data(record_id, "record not in manifest"))?;
        read_gray(path)
    }
}

fn template_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{id}.png")), dir.join(format!("{id}.json")))
}

/// Writes `<dir>/donors/<id>.{png,json}` and `<dir>/acceptors/<id>.{png,json}`.
pub fn write_store(dir: &Path, donors: &[DonorTemplate], acceptors: &[AcceptorTemplate]) -> Result<()> {
    let ddir = dir.join("donors");
    let adir = dir.join("acceptors");
    create_dir(&ddir)?;
    create_dir(&adir)?;
    for d in donors {
        let (png, json) = template_paths(&ddir, &d.source_id);
        write_gray(&png, &d.patch)?;
        write_json(&json, &d.meta())?;
    }
    for a in acceptors {
        let (png, json) = template_paths(&adir, &a.source_id);
        write_gray(&png, &a.background)?;
        write_json(&json, &a.meta())?;
    }
    Ok(())
}

fn read_templates(dir: &Path) -> Result<Vec<(TemplateMeta, GrayImage)>> {
    let mut metas: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    metas.sort();
    metas
        .into_iter()
        .map(|json| {
            let meta: TemplateMeta =
                serde_json::from_str(&read_text(&json)?).map_err(|e| Error::data(json.display(), e))?;
            let img = read_gray(&json.with_extension("png"))?;
            Ok((meta, img))
        })
        .collect()
}

/// Loads a template store; templates are ordered by source id.
pub fn read_store(dir: &Path) -> Result<TemplatePool> {
    let donors = read_templates(&dir.join("donors"))?
        .into_iter()
        .map(|(m, img)| DonorTemplate::from_meta(m, img))
        .collect();
    let acceptors = read_templates(&dir.join("acceptors"))?
        .into_iter()
        .map(|(m, img)| AcceptorTemplate::from_meta(m, img))
        .collect();
    Ok(TemplatePool::new(donors, acceptors))
}
