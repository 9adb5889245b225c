//! Byte format for streaming realized batches to a trainer.
//!
//! ```text
//! header : "HYBA" | version u16 | metadata_len u32 | metadata JSON
//! frame  : epoch u32 | batch_index u32 | count u16 | height u16 | width u16
//!          | count x (label u8 | height*width intensity bytes)
//! ```
//!
//! All integers are little-endian. A frame with `epoch == u32::MAX` and
//! `count == 0` ends the stream.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::ClassLabel;
use crate::image::GrayImage;

pub const MAGIC: [u8; 4] = *b"HYBA";
pub const VERSION: u16 = 1;
pub const FRAME_HEADER_LEN: usize = 14;
pub const SENTINEL_EPOCH: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StreamError {
    #[error("truncated at byte {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported stream version {0}")]
    VersionUnsupported(u16),
    #[error("malformed header metadata: {0}")]
    BadMetadata(String),
    #[error("batch images are not all {width}x{height}")]
    DimensionMismatch { width: usize, height: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("{what} = {value} does not fit in 16 bits")]
    TooLarge { what: &'static str, value: usize },
    #[error("label byte {0} is not a class index")]
    InvalidLabel(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamMetadata {
    pub classes: Vec<String>,
    pub image_height: u32,
    pub image_width: u32,
    pub strategy: String,
    pub seed: u64,
    pub epochs: u32,
    pub batch_size: u32,
}

impl StreamMetadata {
    /// Metadata with the canonical class list.
    pub fn new(image_width: u32, image_height: u32, strategy: &str, seed: u64, epochs: u32, batch_size: u32) -> Self {
        Self {
            classes: ClassLabel::ALL.iter().map(|l| l.as_str().to_string()).collect(),
            image_height,
            image_width,
            strategy: strategy.to_string(),
            seed,
            epochs,
            batch_size,
        }
    }
}

pub fn encode_header(meta: &StreamMetadata) -> Vec<u8> {
    let json = serde_json::to_vec(meta).unwrap_or_default();
    let mut out = Vec::with_capacity(10 + json.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out
}

fn need(bytes: &[u8], offset: usize, len: usize) -> Result<(), StreamError> {
    if bytes.len() < offset + len {
        Err(StreamError::Truncated {
            offset: bytes.len(),
            needed: offset + len - bytes.len(),
        })
    } else {
        Ok(())
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Parses a header; returns it with the number of bytes consumed.
pub fn decode_header(bytes: &[u8]) -> Result<(StreamMetadata, usize), StreamError> {
    need(bytes, 0, 4)?;
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic != MAGIC {
        return Err(StreamError::BadMagic(magic));
    }
    need(bytes, 4, 6)?;
    let version = u16_at(bytes, 4);
    if version != VERSION {
        return Err(StreamError::VersionUnsupported(version));
    }
    let len = u32_at(bytes, 6) as usize;
    need(bytes, 10, len)?;
    let meta: StreamMetadata =
        serde_json::from_slice(&bytes[10..10 + len]).map_err(|e| StreamError::BadMetadata(e.to_string()))?;
    if meta.classes.len() != ClassLabel::ALL.len() {
        return Err(StreamError::BadMetadata(alloc::format!(
            "expected 6 classes, got {}",
            meta.classes.len()
        )));
    }
    Ok((meta, 10 + len))
}

/// One batch on the wire. Images are stored back to back in `pixels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchFrame {
    pub epoch: u32,
    pub batch_index: u32,
    pub height: u16,
    pub width: u16,
    pub labels: Vec<u8>,
    pub pixels: Vec<u8>,
}

impl BatchFrame {
    pub fn sentinel() -> Self {
        Self {
            epoch: SENTINEL_EPOCH,
            batch_index: 0,
            height: 0,
            width: 0,
            labels: Vec::new(),
            pixels: Vec::new(),
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.epoch == SENTINEL_EPOCH && self.labels.is_empty()
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }

    /// Packs a realized batch; all images must share one size.
    pub fn from_items(epoch: u32, batch_index: u32, items: &[(GrayImage, ClassLabel)]) -> Result<Self, StreamError> {
        let first = &items.first().ok_or(StreamError::EmptyBatch)?.0;
        let (w, h) = (first.width(), first.height());
        let fit = |what, value: usize| u16::try_from(value).map_err(|_| StreamError::TooLarge { what, value });
        let count = fit("count", items.len())?;
        let width = fit("width", w)?;
        let height = fit("height", h)?;
        let mut labels = Vec::with_capacity(count as usize);
        let mut pixels = Vec::with_capacity(items.len() * w * h);
        for (img, label) in items {
            if img.width() != w || img.height() != h {
                return Err(StreamError::DimensionMismatch { width: w, height: h });
            }
            labels.push(label.index() as u8);
            pixels.extend_from_slice(img.pixels());
        }
        Ok(Self {
            epoch,
            batch_index,
            height,
            width,
            labels,
            pixels,
        })
    }

    /// Unpacks into images and labels.
    pub fn items(&self) -> Result<Vec<(GrayImage, ClassLabel)>, StreamError> {
        let size = self.width as usize * self.height as usize;
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let label = ClassLabel::from_index(l as usize).ok_or(StreamError::InvalidLabel(l))?;
                let img = GrayImage::from_pixels(
                    self.width as usize,
                    self.height as usize,
                    self.pixels[i * size..(i + 1) * size].to_vec(),
                )
                .map_err(|_| StreamError::DimensionMismatch {
                    width: self.width as usize,
                    height: self.height as usize,
                })?;
                Ok((img, label))
            })
            .collect()
    }

    pub fn encoded_len(&self) -> usize {
        frame_len(self.count(), self.height as usize, self.width as usize)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.batch_index.to_le_bytes());
        out.extend_from_slice(&(self.count() as u16).to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        let size = self.width as usize * self.height as usize;
        for (i, &l) in self.labels.iter().enumerate() {
            out.push(l);
            out.extend_from_slice(&self.pixels[i * size..(i + 1) * size]);
        }
    }
}

/// `14 + count * (1 + height * width)`.
pub const fn frame_len(count: usize, height: usize, width: usize) -> usize {
    FRAME_HEADER_LEN + count * (1 + height * width)
}

pub fn encode_frame(epoch: u32, batch_index: u32, items: &[(GrayImage, ClassLabel)]) -> Result<Vec<u8>, StreamError> {
    Ok(BatchFrame::from_items(epoch, batch_index, items)?.encode())
}

/// Decodes the frame at the start of `bytes`; returns it with the number of
/// bytes consumed so trailing data can be decoded next.
pub fn decode_frame(bytes: &[u8]) -> Result<(BatchFrame, usize), StreamError> {
    need(bytes, 0, FRAME_HEADER_LEN)?;
    let epoch = u32_at(bytes, 0);
    let batch_index = u32_at(bytes, 4);
    let count = u16_at(bytes, 8) as usize;
    let height = u16_at(bytes, 10);
    let width = u16_at(bytes, 12);
    let size = height as usize * width as usize;
    let total = frame_len(count, height as usize, width as usize);
    need(bytes, 0, total)?;
    let mut labels = Vec::with_capacity(count);
    let mut pixels = Vec::with_capacity(count * size);
    let mut at = FRAME_HEADER_LEN;
    for _ in 0..count {
        let l = bytes[at];
        if ClassLabel::from_index(l as usize).is_none() {
            return Err(StreamError::InvalidLabel(l));
        }
        labels.push(l);
        pixels.extend_from_slice(&bytes[at + 1..at + 1 + size]);
        at += 1 + size;
    }
    Ok((
        BatchFrame {
            epoch,
            batch_index,
            height,
            width,
            labels,
            pixels,
        },
        total,
    ))
}

/// Decodes a complete stream: header, frames, and the end sentinel (which is
/// not included in the returned frames). Truncation offsets are absolute.
pub fn decode_stream(bytes: &[u8]) -> Result<(StreamMetadata, Vec<BatchFrame>), StreamError> {
    let (meta, mut at) = decode_header(bytes)?;
    let mut frames = Vec::new();
    loop {
        let (frame, used) = decode_frame(&bytes[at..]).map_err(|e| match e {
            StreamError::Truncated { offset, needed } => StreamError::Truncated {
                offset: offset + at,
                needed,
            },
            other => other,
        })?;
        at += used;
        if frame.is_sentinel() {
            return Ok((meta, frames));
        }
        frames.push(frame);
    }
}
