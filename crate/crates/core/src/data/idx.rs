use std::path::Path;

use super::{cap_row_norms, DatasetHandle, Labels};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, offset: usize, reason: String) -> Error {
        Error::Idx {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            reason,
        }
    }

    fn u32_be(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let Some(b) = self.bytes.get(self.pos..end) else {
            return Err(self.err(self.pos, "truncated header".into()));
        };
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn payload(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available != len {
            return Err(self.err(
                self.pos,
                format!("header declares {len} {what} bytes but payload has {available}"),
            ));
        }
        let out = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        Ok(out)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an IDX image/label file pair. Pixels are scaled to [0, 1], images
/// are flattened channel-major, and rows are capped to norm `x1`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, x1: f64) -> Result<DatasetHandle> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let img_bytes = read(images_path)?;
    let lbl_bytes = read(labels_path)?;

    let mut img = Cursor {
        path: images_path,
        bytes: &img_bytes,
        pos: 0,
    };
    let magic = img.u32_be()?;
    if magic != IMAGES_MAGIC {
        return Err(img.err(0, format!("magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let n = img.u32_be()? as usize;
    let rows = img.u32_be()? as usize;
    let cols = img.u32_be()? as usize;
    let pixels = img.payload(n * rows * cols, "pixel")?;

    let mut lbl = Cursor {
        path: labels_path,
        bytes: &lbl_bytes,
        pos: 0,
    };
    let magic = lbl.u32_be()?;
    if magic != LABELS_MAGIC {
        return Err(lbl.err(0, format!("magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let n_labels = lbl.u32_be()? as usize;
    if n_labels != n {
        return Err(lbl.err(4, format!("{n_labels} labels for {n} images")));
    }
    let labels: Vec<usize> = lbl.payload(n, "label")?.iter().map(|b| *b as usize).collect();

    let dim = rows * cols;
    let mut feats: Vec<Vec<f64>> = pixels
        .chunks(dim.max(1))
        .take(n)
        .map(|c| c.iter().map(|p| *p as f64 / 255.0).collect())
        .collect();
    cap_row_norms(&mut feats, x1);
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    DatasetHandle::new(
        feats,
        Labels::Classes { labels, num_classes },
        x1,
        images_path.display().to_string(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn idx_images(n: u32, r: u32, c: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGES_MAGIC, n, r, c] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    fn write_pair(dir: &tempfile::TempDir, images: Vec<u8>, labels: Vec<u8>) -> (std::path::PathBuf, std::path::PathBuf) {
        let i = dir.path().join("img.idx");
        let l = dir.path().join("lbl.idx");
        std::fs::write(&i, images).unwrap();
        std::fs::write(&l, labels).unwrap();
        (i, l)
    }

    #[test]
    fn full_intensity_pixel_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = write_pair(&dir, idx_images(2, 1, 1, &[255, 0]), idx_labels(&[1, 0]));
        let d = load_idx(&i, &l, 1.0).unwrap();
        assert_eq!(d.row(0).data(), &[1.0]);
        assert_eq!(d.num_classes(), Some(2));
    }

    #[test]
    fn count_mismatch_names_both_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = write_pair(&dir, idx_images(3, 1, 2, &[1, 2, 3, 4]), idx_labels(&[0, 1, 0]));
        let e = load_idx(&i, &l, 1.0).unwrap_err().to_string();
        assert!(e.contains("6") && e.contains("4"), "{e}");
        assert!(e.contains("byte offset 16"), "{e}");
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = idx_images(2, 1, 1, &[1, 2]);
        img[3] = 0x01;
        let (i, l) = write_pair(&dir, img, idx_labels(&[0, 1]));
        assert!(matches!(load_idx(&i, &l, 1.0), Err(Error::Idx { offset: 0, .. })));
    }

    #[test]
    fn rows_capped_to_bound() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = write_pair(&dir, idx_images(2, 2, 2, &[255; 8]), idx_labels(&[0, 1]));
        let d = load_idx(&i, &l, 1.0).unwrap();
        assert!((d.max_row_norm() - 1.0).abs() < 1e-12);
    }
}
