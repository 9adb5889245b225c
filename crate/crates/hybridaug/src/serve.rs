//! Online batch streaming.

use std::io::Write;
use std::net::TcpListener;
use std::path::Path;

use hybridaug_core::sampler::{build_epoch_schedule, realize_batch, ImageSource, RealizeConfig, Strategy, TemplatePool};
use hybridaug_core::stream::{encode_header, BatchFrame, StreamMetadata};
use hybridaug_core::Manifest;
use rayon::prelude::*;

use crate::error::{Error, Result};

// Batches realized concurrently before their frames are written in order.
const WINDOW: usize = 64;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub strategy: Strategy,
    pub epochs: u32,
    pub batch_size: usize,
    pub realize: RealizeConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeStats {
    pub frames: u64,
    pub images: u64,
    pub bytes: u64,
}

pub fn metadata(cfg: &ServeConfig) -> StreamMetadata {
    StreamMetadata::new(
        cfg.realize.output_width as u32,
        cfg.realize.output_height as u32,
        cfg.strategy.as_str(),
        cfg.realize.seed,
        cfg.epochs,
        cfg.batch_size as u32,
    )
}

/// Writes the header, every frame of epochs `0..epochs` in order, then the
/// sentinel. The bytes depend only on the inputs, not on the thread count.
pub fn serve<S, W>(
    manifest: &Manifest,
    pool: &TemplatePool,
    images: &S,
    cfg: &ServeConfig,
    sink: &mut W,
    sink_name: &str,
) -> Result<ServeStats>
where
    S: ImageSource + Sync,
    W: Write + ?Sized,
{
    let mut stats = ServeStats::default();
    let mut emit = |bytes: &[u8], stats: &mut ServeStats| {
        stats.bytes += bytes.len() as u64;
        sink.write_all(bytes).map_err(|e| Error::io(Path::new(sink_name), e))
    };
    emit(&encode_header(&metadata(cfg)), &mut stats)?;
    let eligibility = pool.eligibility(manifest);
    for epoch in 0..cfg.epochs {
        let schedule = build_epoch_schedule(
            manifest,
            &eligibility,
            cfg.strategy,
            cfg.realize.seed,
            epoch,
            cfg.batch_size,
        )
        .map_err(|e| Error::data(format!("epoch {epoch}"), e))?;
        for window in schedule.batches.chunks(WINDOW) {
            let frames: Vec<Vec<u8>> = window
                .par_iter()
                .map(|batch| {
                    let context = || format!("epoch {epoch} batch {}", batch.batch_index);
                    let items = realize_batch(batch, manifest, pool, images, &cfg.realize)
                        .map_err(|e| Error::data(context(), e))?;
                    let pairs: Vec<_> = items.into_iter().map(|it| (it.image, it.label)).collect();
                    let frame = BatchFrame::from_items(epoch, batch.batch_index, &pairs)
                        .map_err(|e| Error::data(context(), e))?;
                    Ok(frame.encode())
                })
                .collect::<Result<_>>()?;
            for (bytes, batch) in frames.iter().zip(window) {
                emit(bytes, &mut stats)?;
                stats.frames += 1;
                stats.images += batch.entries.len() as u64;
            }
        }
    }
    emit(&BatchFrame::sentinel().encode(), &mut stats)?;
    sink.flush().map_err(|e| Error::io(Path::new(sink_name), e))?;
    Ok(stats)
}

/// Binds `addr`, reports the bound address through `on_bound`, then serves
/// the first connection.
pub fn serve_tcp<S: ImageSource + Sync>(
    addr: &str,
    manifest: &Manifest,
    pool: &TemplatePool,
    images: &S,
    cfg: &ServeConfig,
    on_bound: impl FnOnce(std::net::SocketAddr),
) -> Result<ServeStats> {
    let listener = TcpListener::bind(addr).map_err(|e| Error::io(Path::new(addr), e))?;
    let local = listener.local_addr().map_err(|e| Error::io(Path::new(addr), e))?;
    on_bound(local);
    let (stream, _) = listener.accept().map_err(|e| Error::io(Path::new(addr), e))?;
    let mut writer = std::io::BufWriter::new(stream);
    serve(manifest, pool, images, cfg, &mut writer, addr)
}
