//! Query clip upload handling: a tar or zip archive of frame images is
//! unpacked in memory and decoded into a frame sequence under the same rules
//! as on-disk clips.

use std::io::{Cursor, Read};

use anyhow::{bail, Context, Result};

use motioncloud_core::templates::{decode_frame_bytes, Frame, FrameSequence};

const FRAME_EXTENSIONS: [&str; 5] = ["pgm", "png", "jpg", "jpeg", "bmp"];

fn is_frame_name(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    !lower.starts_with('.')
        && FRAME_EXTENSIONS
            .iter()
            .any(|ext| lower.ends_with(&format!(".{ext}")))
}

fn extract_zip(bytes: &[u8]) -> Result<Vec<(String, Vec<u8>)>> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).context("reading zip archive")?;
    let mut files = Vec::new();
    for i in 0..archive.len() {
        let mut entry = archive.by_index(i).context("reading zip entry")?;
        if !entry.is_file() {
            continue;
        }
        let name = entry.name().to_string();
        if !is_frame_name(&name) {
            continue;
        }
        let mut data = Vec::with_capacity(entry.size() as usize);
        entry.read_to_end(&mut data)?;
        files.push((name, data));
    }
    Ok(files)
}

fn extract_tar(bytes: &[u8]) -> Result<Vec<(String, Vec<u8>)>> {
    let mut archive = tar::Archive::new(bytes);
    let mut files = Vec::new();
    for entry in archive.entries().context("reading tar archive")? {
        let mut entry = entry.context("reading tar entry")?;
        if !entry.header().entry_type().is_file() {
            continue;
        }
        let name = entry
            .path()
            .ok()
            .and_then(|p| p.to_str().map(String::from))
            .unwrap_or_default();
        if !is_frame_name(&name) {
            continue;
        }
        let mut data = Vec::new();
        entry.read_to_end(&mut data)?;
        files.push((name, data));
    }
    Ok(files)
}

/// Decode an uploaded archive into a frame sequence, frames in file-name
/// order, resized to `target`.
pub fn clip_from_archive(bytes: &[u8], target: usize) -> Result<FrameSequence> {
    if bytes.is_empty() {
        bail!("empty upload");
    }
    let mut files = if bytes.starts_with(b"PK\x03\x04") {
        extract_zip(bytes)?
    } else {
        extract_tar(bytes)?
    };
    if files.is_empty() {
        bail!("archive contains no frame images (pgm/png/jpg/bmp)");
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    let frames: Vec<Frame> = files
        .iter()
        .map(|(name, data)| {
            decode_frame_bytes(name, data, target).with_context(|| format!("decoding {name}"))
        })
        .collect::<Result<_>>()?;
    Ok(FrameSequence::new(frames, 25.0)?)
}
