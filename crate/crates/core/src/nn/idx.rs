//! Digit image archives: IDX files (big-endian) or a CSV fallback with one
//! row per image, `label,p0,p1,...` and gray values in `0..=255`.

use std::path::Path;

use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("{0}: file truncated")]
    Truncated(String),
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path} line {line}: {message}")]
    Csv {
        path: String,
        line: u64,
        message: String,
    },
    #[error("an IDX image file needs a label file")]
    MissingLabels,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Images scaled to `[0, 1]` with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageArchive {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

fn read(path: &Path) -> Result<Vec<u8>, ArchiveError> {
    std::fs::read(path).map_err(|source| ArchiveError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32, ArchiveError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| ArchiveError::Truncated(path.display().to_string()))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), ArchiveError> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(ArchiveError::BadMagic {
            path: path.display().to_string(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Reads an IDX image file; returns `(rows, cols, images)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<Vec<f64>>), ArchiveError> {
    let bytes = read(path)?;
    check_magic(&bytes, IMAGE_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() < n * size {
        return Err(ArchiveError::Truncated(path.display().to_string()));
    }
    let images = body
        .chunks_exact(size.max(1))
        .take(n)
        .map(|im| im.iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    Ok((rows, cols, images))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, ArchiveError> {
    let bytes = read(path)?;
    check_magic(&bytes, LABEL_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    bytes
        .get(8..8 + n)
        .map(<[u8]>::to_vec)
        .ok_or_else(|| ArchiveError::Truncated(path.display().to_string()))
}

pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for im in images {
        out.extend_from_slice(im);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads `label,p0,...` rows; a header row is skipped when its first field is
/// not a number. Images are assumed square.
pub fn read_csv_archive(path: &Path) -> Result<ImageArchive, ArchiveError> {
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| ArchiveError::Csv {
            path: name.clone(),
            line: 0,
            message: e.to_string(),
        })?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 1;
        let err = |message: String| ArchiveError::Csv {
            path: name.clone(),
            line,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let first = rec.get(0).unwrap_or("").trim();
        if i == 0 && first.parse::<f64>().is_err() {
            continue;
        }
        let label: u8 = first.parse().map_err(|_| err(format!("bad label `{first}`")))?;
        let px = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map(|v| v / 255.0)
                    .map_err(|_| err(format!("bad pixel `{s}`")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(prev) = images.first().map(Vec::len) {
            if prev != px.len() {
                return Err(err(format!("{} pixels, expected {prev}", px.len())));
            }
        }
        labels.push(label);
        images.push(px);
    }
    let pixels = images.first().map_or(0, Vec::len);
    let side = (pixels as f64).sqrt().round() as usize;
    let (rows, cols) = if side * side == pixels { (side, side) } else { (1, pixels) };
    Ok(ImageArchive {
        rows,
        cols,
        images,
        labels,
    })
}

/// Loads a CSV archive (`.csv` extension) or an IDX image/label pair.
pub fn load_archive(images: &Path, labels: Option<&Path>) -> Result<ImageArchive, ArchiveError> {
    if images.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return read_csv_archive(images);
    }
    let labels = labels.ok_or(ArchiveError::MissingLabels)?;
    let (rows, cols, images) = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    if images.len() != labels.len() {
        return Err(ArchiveError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(ImageArchive {
        rows,
        cols,
        images,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lab.idx");
        std::fs::write(&ip, encode_idx_images(2, 2, &[vec![0, 255, 51, 0], vec![255; 4]])).unwrap();
        std::fs::write(&lp, encode_idx_labels(&[7, 1])).unwrap();
        let a = load_archive(&ip, Some(&lp)).unwrap();
        assert_eq!((a.rows, a.cols), (2, 2));
        assert_eq!(a.images[0], vec![0.0, 1.0, 0.2, 0.0]);
        assert_eq!(a.labels, vec![7, 1]);
        assert!(matches!(
            load_archive(&lp, Some(&ip)),
            Err(ArchiveError::BadMagic { .. })
        ));
        std::fs::write(&lp, encode_idx_labels(&[7])).unwrap();
        assert!(matches!(
            load_archive(&ip, Some(&lp)),
            Err(ArchiveError::CountMismatch { images: 2, labels: 1 })
        ));
        let mut short = encode_idx_images(2, 2, &[vec![1; 4]]);
        short.pop();
        std::fs::write(&ip, short).unwrap();
        assert!(matches!(read_idx_images(&ip), Err(ArchiveError::Truncated(_))));
    }

    #[test]
    fn csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "label,a,b,c,d\n3,0,255,255,0\n5,255,0,0,0\n").unwrap();
        let a = load_archive(&p, None).unwrap();
        assert_eq!(a.labels, vec![3, 5]);
        assert_eq!(a.images[1], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!((a.rows, a.cols), (2, 2));
        std::fs::write(&p, "3,0,255\n5,x,0\n").unwrap();
        assert!(matches!(read_csv_archive(&p), Err(ArchiveError::Csv { line: 2, .. })));
    }
}
