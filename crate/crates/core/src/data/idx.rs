//! IDX reader: big-endian `u32` magic and dimensions followed by unsigned
//! bytes. Gzip-compressed files are detected by their header and inflated.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn header(bytes: &[u8], magic: u32, n_dims: usize) -> Result<Vec<usize>> {
    let need = 4 * (1 + n_dims);
    if bytes.len() < need {
        return Err(Error::TruncatedFile {
            expected: need,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != magic {
        return Err(Error::BadMagic {
            expected: magic,
            found: word(0),
        });
    }
    Ok((1..=n_dims).map(|i| word(i) as usize).collect())
}

fn payload(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8]> {
    let found = bytes.len() - offset;
    if found < len {
        return Err(Error::TruncatedFile { expected: len, found });
    }
    Ok(&bytes[offset..offset + len])
}

/// Images as rows of `rows·cols` pixels scaled to `[0, 1]`; at most `limit`.
pub fn read_idx_images(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Matrix> {
    let bytes = read_bytes(path.as_ref())?;
    let dims = header(&bytes, IMAGES_MAGIC, 3)?;
    let (count, pixels) = (dims[0], dims[1] * dims[2]);
    let n = limit.map_or(count, |l| l.min(count));
    let data = payload(&bytes, 16, count * pixels)?;
    Matrix::new(n, pixels, data[..n * pixels].iter().map(|&b| b as f64 / 255.0).collect())
}

/// Labels as class indices; at most `limit`.
pub fn read_idx_labels(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Vec<usize>> {
    let bytes = read_bytes(path.as_ref())?;
    let count = header(&bytes, LABELS_MAGIC, 1)?[0];
    let n = limit.map_or(count, |l| l.min(count));
    Ok(payload(&bytes, 8, count)?[..n].iter().map(|&b| b as usize).collect())
}

/// Paired image and label files as a classification dataset with
/// `max label + 1` classes.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset> {
    let images_bytes = read_bytes(images_path.as_ref())?;
    let labels_bytes = read_bytes(labels_path.as_ref())?;
    let n_images = header(&images_bytes, IMAGES_MAGIC, 3)?[0];
    let n_labels = header(&labels_bytes, LABELS_MAGIC, 1)?[0];
    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let x = read_idx_images(images_path, limit)?;
    let labels = read_idx_labels(labels_path, limit)?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(x, Targets::Class { labels, n_classes })
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use flate2::write::GzEncoder;
    use flate2::Compression;

    use super::*;

    fn idx_images(n: usize) -> Vec<u8> {
        let mut b = Vec::new();
        for w in [IMAGES_MAGIC, n as u32, 28, 28] {
            b.extend_from_slice(&w.to_be_bytes());
        }
        b.extend((0..n * 784).map(|i| (i % 256) as u8));
        b
    }

    fn idx_labels(n: usize) -> Vec<u8> {
        let mut b = Vec::new();
        for w in [LABELS_MAGIC, n as u32] {
            b.extend_from_slice(&w.to_be_bytes());
        }
        b.extend((0..n).map(|i| (i % 10) as u8));
        b
    }

    fn file(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    #[test]
    fn four_images() {
        let (img, lab) = (file(&idx_images(4)), file(&idx_labels(4)));
        let d = load_idx(img.path(), lab.path(), None).unwrap();
        assert_eq!((d.len(), d.n_features()), (4, 784));
        assert_eq!(d.x[(0, 255)], 1.0);
        assert_eq!(d.x[(0, 0)], 0.0);
        assert_eq!(d.labels().unwrap(), &[0, 1, 2, 3]);
        assert_eq!(load_idx(img.path(), lab.path(), Some(2)).unwrap().len(), 2);
    }

    #[test]
    fn gzip_is_transparent() {
        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(&idx_images(3)).unwrap();
        let gz = file(&enc.finish().unwrap());
        let plain = file(&idx_images(3));
        assert_eq!(read_idx_images(gz.path(), None).unwrap(), read_idx_images(plain.path(), None).unwrap());
    }

    #[test]
    fn format_errors() {
        let lab = file(&idx_labels(4));
        let mut wrong = idx_images(4);
        wrong[3] = 0x01;
        assert!(matches!(read_idx_images(file(&wrong).path(), None), Err(Error::BadMagic { .. })));
        let mut short = idx_images(4);
        short.truncate(16 + 3 * 784);
        assert!(matches!(read_idx_images(file(&short).path(), None), Err(Error::TruncatedFile { .. })));
        assert!(matches!(read_idx_labels(file(&[0, 0]).path(), None), Err(Error::TruncatedFile { .. })));
        let img5 = file(&idx_images(5));
        assert!(matches!(load_idx(img5.path(), lab.path(), None), Err(Error::CountMismatch { .. })));
    }

    #[test]
    fn bundled_sets() {
        let digits = super::super::mnist_subset(Some(600)).unwrap();
        assert_eq!((digits.len(), digits.n_features()), (600, 784));
        let letters = super::super::letters_subset(None).unwrap();
        assert_eq!(letters.len(), 2080);
        assert!(letters.x.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
