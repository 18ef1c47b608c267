//! IDX-format MNIST reader (plain or gzip-compressed files).

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

/// Environment variable naming the dataset directory.
pub const DATA_ENV: &str = "SEMNET_DATA";

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

/// Images as `[n, 784]` rows scaled to `[0, 1]`, with their labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` items (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images.slice_rows(0, n),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Items `start..end`.
    pub fn range(&self, start: usize, end: usize) -> Dataset {
        let end = end.min(self.len());
        Dataset {
            images: self.images.slice_rows(start, end),
            labels: self.labels[start..end].to_vec(),
        }
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }
}

#[derive(Debug, Clone)]
pub struct Mnist {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads `train-*` and `t10k-*` IDX files (optionally `.gz`) from `dir`.
pub fn load_mnist(dir: &Path) -> Result<Mnist> {
    Ok(Mnist {
        train: load_split(dir, "train")?,
        test: load_split(dir, "t10k")?,
    })
}

/// Dataset directory: explicit flag, then `SEMNET_DATA`, then `fallback`.
pub fn resolve_data_dir(flag: Option<&Path>, fallback: &Path) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
        .unwrap_or_else(|| fallback.to_path_buf())
}

fn load_split(dir: &Path, prefix: &str) -> Result<Dataset> {
    let images_path = find(dir, &format!("{prefix}-images-idx3-ubyte"))?;
    let labels_path = find(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
    let images = parse_images(&images_path, &read_all(&images_path)?)?;
    let labels = parse_labels(&labels_path, &read_all(&labels_path)?)?;
    if images.rows() != labels.len() {
        return Err(Error::Parse {
            path: labels_path,
            offset: 4,
            detail: format!(
                "{} labels for {} images",
                labels.len(),
                images.rows()
            ),
        });
    }
    Ok(Dataset { images, labels })
}

fn find(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::io(
        plain,
        std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found (plain or .gz)"),
    ))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    let gz = path.extension().is_some_and(|e| e == "gz");
    let res = if gz {
        GzDecoder::new(BufReader::new(file)).read_to_end(&mut buf)
    } else {
        BufReader::new(file).read_to_end(&mut buf)
    };
    res.map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn be_u32(path: &Path, bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            detail: format!("truncated header, needed bytes {offset}..{}", offset + 4),
        })
}

/// Parses an IDX3 image file into `[n, rows*cols]` values in `[0, 1]`.
pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<Tensor> {
    let magic = be_u32(path, bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            detail: format!("bad magic {magic}, expected {IMAGE_MAGIC}"),
        });
    }
    let n = be_u32(path, bytes, 4)? as usize;
    let rows = be_u32(path, bytes, 8)? as usize;
    let cols = be_u32(path, bytes, 12)? as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            detail: format!("truncated payload, header declares {need} bytes"),
        });
    }
    if n == 0 || rows * cols == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 4,
            detail: "empty image set".into(),
        });
    }
    let data = bytes[16..need].iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::matrix(n, rows * cols, data)
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(path, bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            detail: format!("bad magic {magic}, expected {LABEL_MAGIC}"),
        });
    }
    let n = be_u32(path, bytes, 4)? as usize;
    if bytes.len() < 8 + n {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            detail: format!("truncated payload, header declares {} bytes", 8 + n),
        });
    }
    let labels: Vec<usize> = bytes[8..8 + n].iter().map(|&b| usize::from(b)).collect();
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: (8 + pos) as u64,
            detail: format!("label {} outside 0..=9", labels[pos]),
        });
    }
    Ok(labels)
}
