//! IDX image/label files (the MNIST container format).
//!
//! Images: magic 0x00000803 (u8 payload, 3 dimensions), then big-endian u32
//! counts `n, rows, cols`, then `n*rows*cols` bytes. Labels: magic
//! 0x00000801, count `n`, then `n` bytes. Pixels map to [0, 1] by dividing
//! by 255.

use super::dataset::Dataset;
use crate::{Error, Result};
use std::fs;
use std::path::Path;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn idx_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Idx {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(idx_err(path, format!("truncated before {what}")));
    }
    let mut buf = [0u8; 4];
    buf.copy_from_slice(&bytes[offset..end]);
    Ok(u32::from_be_bytes(buf))
}

/// Loads an image/label file pair into a dataset. The class count is taken
/// as `max label + 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = fs::read(images_path)?;
    let label_bytes = fs::read(labels_path)?;

    let magic = read_u32_be(&image_bytes, 0, images_path, "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(idx_err(
            images_path,
            format!("bad magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let n = read_u32_be(&image_bytes, 4, images_path, "sample count")? as usize;
    let rows = read_u32_be(&image_bytes, 8, images_path, "row count")? as usize;
    let cols = read_u32_be(&image_bytes, 12, images_path, "column count")? as usize;
    if n == 0 {
        return Err(idx_err(images_path, "contains no samples"));
    }
    if rows == 0 || cols == 0 {
        return Err(idx_err(images_path, "zero image dimension"));
    }
    let expected = 16 + n * rows * cols;
    if image_bytes.len() != expected {
        return Err(idx_err(
            images_path,
            format!("payload is {} bytes, expected {expected}", image_bytes.len()),
        ));
    }

    let magic = read_u32_be(&label_bytes, 0, labels_path, "magic")?;
    if magic != LABEL_MAGIC {
        return Err(idx_err(
            labels_path,
            format!("bad magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let n_labels = read_u32_be(&label_bytes, 4, labels_path, "label count")? as usize;
    if n_labels != n {
        return Err(idx_err(
            labels_path,
            format!("{n_labels} labels for {n} images"),
        ));
    }
    if label_bytes.len() != 8 + n {
        return Err(idx_err(
            labels_path,
            format!("payload is {} bytes, expected {}", label_bytes.len(), 8 + n),
        ));
    }

    let inputs: Vec<f64> = image_bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = label_bytes[8..].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(inputs, rows * cols, labels, num_classes)?.with_image_shape(rows, cols)
}

/// Writes a dataset as an IDX image/label file pair. Values are clamped to
/// [0, 1] and quantised to bytes by `round(v * 255)`. Datasets without an
/// image shape are written as `1 x dim` images.
pub fn write_idx(data: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    if data.num_classes() > 256 {
        return Err(Error::invalid(
            "write_idx",
            "IDX labels are single bytes; at most 256 classes",
        ));
    }
    let (rows, cols) = data.image_shape().unwrap_or((1, data.dim()));
    let n = data.len();

    let mut image_bytes = Vec::with_capacity(16 + n * rows * cols);
    image_bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&(n as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for &v in data.inputs() {
        image_bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }

    let mut label_bytes = Vec::with_capacity(8 + n);
    label_bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&(n as u32).to_be_bytes());
    for &y in data.labels() {
        label_bytes.push(y as u8);
    }

    fs::write(images_path, image_bytes)?;
    fs::write(labels_path, label_bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn write_files(dir: &TempDir, images: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.path().join("images.idx");
        let lp = dir.path().join("labels.idx");
        fs::write(&ip, images).unwrap();
        fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    fn tiny_image_bytes() -> Vec<u8> {
        // Two 2x2 images: [0, 255, 0, 255] and [128, 128, 0, 255].
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&[0, 255, 0, 255, 128, 128, 0, 255]);
        b
    }

    fn tiny_label_bytes() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&[1, 0]);
        b
    }

    #[test]
    fn loads_hand_built_pair() {
        let dir = TempDir::new().unwrap();
        let (ip, lp) = write_files(&dir, &tiny_image_bytes(), &tiny_label_bytes());
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 4);
        assert_eq!(d.image_shape(), Some((2, 2)));
        assert_eq!(d.labels(), &[1, 0]);
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.input_row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(d.input_row(1)[0], 128.0 / 255.0);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = TempDir::new().unwrap();
        let mut bad = tiny_image_bytes();
        bad[3] = 0x99;
        let (ip, lp) = write_files(&dir, &bad, &tiny_label_bytes());
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn rejects_truncation_and_count_mismatch() {
        let dir = TempDir::new().unwrap();
        let mut truncated = tiny_image_bytes();
        truncated.pop();
        let (ip, lp) = write_files(&dir, &truncated, &tiny_label_bytes());
        assert!(load_idx(&ip, &lp).is_err());

        let mut labels = tiny_label_bytes();
        labels[7] = 3; // claims 3 labels
        let (ip, lp) = write_files(&dir, &tiny_image_bytes(), &labels);
        assert!(load_idx(&ip, &lp).is_err());
    }

    #[test]
    fn write_then_load_round_trips() {
        // Values on the k/255 grid survive quantisation exactly.
        let inputs: Vec<f64> = (0..12).map(|k| (k * 20 % 256) as f64 / 255.0).collect();
        let d = Dataset::new(inputs, 4, vec![0, 1, 2], 3)
            .unwrap()
            .with_image_shape(2, 2)
            .unwrap();
        let dir = TempDir::new().unwrap();
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lab.idx");
        write_idx(&d, &ip, &lp).unwrap();
        let back = load_idx(&ip, &lp).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = TempDir::new().unwrap();
        let err = load_idx(&dir.path().join("nope"), &dir.path().join("nope2")).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
