//! MNIST IDX reader/writer and the binary digit task.

use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images as raw bytes (row-major, `height * width` per record) with their
/// digit labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.pixels_per_image();
        &self.pixels[i * d..(i + 1) * d]
    }
}

/// A two-class subset with labels mapped to `+1` / `-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryTask {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<i8>,
}

impl BinaryTask {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.pixels[i * d..(i + 1) * d]
    }

    /// Area-weighted average pooling to `side x side`. Source cells that
    /// straddle an output boundary contribute in proportion to overlap;
    /// results are rounded back to bytes.
    pub fn downsample(&self, side: usize) -> Result<BinaryTask> {
        if side == 0 || side > self.height || side > self.width {
            return Err(Error::InvalidArgument(format!(
                "cannot pool {}x{} images to {side}x{side}",
                self.height, self.width
            )));
        }
        let row_w = overlap_weights(self.height, side);
        let col_w = overlap_weights(self.width, side);
        let cell_area = (self.height as f64 / side as f64) * (self.width as f64 / side as f64);
        let mut pixels = Vec::with_capacity(self.len() * side * side);
        for i in 0..self.len() {
            let img = self.image(i);
            for rws in &row_w {
                for cws in &col_w {
                    let mut acc = 0.0;
                    for &(r, wr) in rws {
                        for &(c, wc) in cws {
                            acc += wr * wc * f64::from(img[r * self.width + c]);
                        }
                    }
                    pixels.push((acc / cell_area).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Ok(BinaryTask {
            height: side,
            width: side,
            pixels,
            labels: self.labels.clone(),
        })
    }
}

/// For each output cell, the source indices it covers and the covered length.
fn overlap_weights(src: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let step = src as f64 / out as f64;
    (0..out)
        .map(|o| {
            let lo = o as f64 * step;
            let hi = lo + step;
            (lo.floor() as usize..(hi.ceil() as usize).min(src))
                .filter_map(|s| {
                    let w = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                    (w > 0.0).then_some((s, w))
                })
                .collect()
        })
        .collect()
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&images, images_path, &labels, labels_path)
}

pub fn parse_idx(
    images: &[u8],
    images_path: &Path,
    labels: &[u8],
    labels_path: &Path,
) -> Result<RawDataset> {
    let mut img = Cursor::new(images, images_path);
    img.magic(IMAGES_MAGIC)?;
    let n_images = img.u32()? as usize;
    let height = img.u32()? as usize;
    let width = img.u32()? as usize;
    let pixels = img.take(n_images * height * width, "image data")?.to_vec();

    let mut lab = Cursor::new(labels, labels_path);
    lab.magic(LABELS_MAGIC)?;
    let n_labels = lab.u32()? as usize;
    let labels = lab.take(n_labels, "label data")?.to_vec();

    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    Ok(RawDataset {
        height,
        width,
        pixels,
        labels,
    })
}

/// Serializes images and labels as a pair of IDX byte buffers.
pub fn encode_idx(raw: &RawDataset) -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::with_capacity(16 + raw.pixels.len());
    for v in [
        IMAGES_MAGIC,
        raw.len() as u32,
        raw.height as u32,
        raw.width as u32,
    ] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend_from_slice(&raw.pixels);
    let mut labels = Vec::with_capacity(8 + raw.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(raw.len() as u32).to_be_bytes());
    labels.extend_from_slice(&raw.labels);
    (images, labels)
}

/// Keeps the two digit classes in file order, maps `positive -> +1` and
/// `negative -> -1`, and truncates to the first `limit` records.
pub fn make_binary_task(
    raw: &RawDataset,
    positive: u8,
    negative: u8,
    limit: Option<usize>,
) -> Result<BinaryTask> {
    if positive == negative {
        return Err(Error::InvalidArgument(format!(
            "positive and negative label are both {positive}"
        )));
    }
    for class in [positive, negative] {
        if !raw.labels.contains(&class) {
            return Err(Error::ClassAbsent(class));
        }
    }
    let limit = limit.unwrap_or(usize::MAX);
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (i, &l) in raw.labels.iter().enumerate() {
        if labels.len() == limit {
            break;
        }
        let y = if l == positive {
            1
        } else if l == negative {
            -1
        } else {
            continue;
        };
        pixels.extend_from_slice(raw.image(i));
        labels.push(y);
    }
    Ok(BinaryTask {
        height: raw.height,
        width: raw.width,
        pixels,
        labels,
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Self { buf, pos: 0, path }
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                path: self.path.to_path_buf(),
                detail: format!(
                    "{what}: need {len} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4, "header")?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(Error::BadMagic {
                path: self.path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(labels: &[u8], side: usize) -> RawDataset {
        RawDataset {
            height: side,
            width: side,
            pixels: (0..labels.len() * side * side)
                .map(|i| (i % 256) as u8)
                .collect(),
            labels: labels.to_vec(),
        }
    }

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn round_trip_through_bytes() {
        let r = raw(&[2, 5, 7, 2], 3);
        let (i, l) = encode_idx(&r);
        assert_eq!(&i[..4], &[0, 0, 8, 3]);
        assert_eq!(parse_idx(&i, p(), &l, p()).unwrap(), r);
    }

    #[test]
    fn empty_file_is_truncated() {
        let (_, l) = encode_idx(&raw(&[1], 2));
        assert!(matches!(
            parse_idx(&[], p(), &l, p()),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn short_payload_is_truncated() {
        let (mut i, l) = encode_idx(&raw(&[1, 2], 2));
        i.pop();
        assert!(matches!(
            parse_idx(&i, p(), &l, p()),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn swapped_files_report_magic() {
        let (i, l) = encode_idx(&raw(&[1], 2));
        match parse_idx(&l, p(), &i, p()) {
            Err(Error::BadMagic {
                expected, found, ..
            }) => {
                assert_eq!(expected, IMAGES_MAGIC);
                assert_eq!(found, LABELS_MAGIC);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn count_mismatch() {
        let (i, _) = encode_idx(&raw(&[1; 10], 2));
        let (_, l) = encode_idx(&raw(&[1; 12], 2));
        assert!(matches!(
            parse_idx(&i, p(), &l, p()),
            Err(Error::CountMismatch {
                images: 10,
                labels: 12
            })
        ));
    }

    #[test]
    fn binary_task_filters_maps_and_truncates() {
        let r = raw(&[2, 3, 5, 5, 2, 9, 2], 2);
        let t = make_binary_task(&r, 2, 5, None).unwrap();
        assert_eq!(t.labels, vec![1, -1, -1, 1, 1]);
        assert_eq!(t.image(1), r.image(2));
        let t = make_binary_task(&r, 2, 5, Some(3)).unwrap();
        assert_eq!(t.labels, vec![1, -1, -1]);
        assert!(matches!(
            make_binary_task(&r, 2, 2, None),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            make_binary_task(&r, 2, 4, None),
            Err(Error::ClassAbsent(4))
        ));
    }

    #[test]
    fn downsample_constant_and_block_images() {
        let t = BinaryTask {
            height: 28,
            width: 28,
            pixels: vec![200; 28 * 28],
            labels: vec![1],
        };
        let s = t.downsample(8).unwrap();
        assert_eq!(s.dim(), 64);
        assert!(s.pixels.iter().all(|&p| p == 200));

        // 4x4 -> 2x2 is exact block averaging
        let t = BinaryTask {
            height: 4,
            width: 4,
            pixels: vec![
                0, 0, 255, 255, 0, 0, 255, 255, 100, 100, 0, 0, 100, 100, 0, 0,
            ],
            labels: vec![-1],
        };
        assert_eq!(t.downsample(2).unwrap().pixels, vec![0, 255, 100, 0]);
        assert!(t.downsample(5).is_err());
    }

    #[test]
    fn overlap_weights_cover_source_exactly() {
        for (src, out) in [(28, 8), (28, 7), (5, 3)] {
            let w = overlap_weights(src, out);
            let mut per_src = vec![0.0; src];
            for cell in &w {
                for &(s, wt) in cell {
                    per_src[s] += wt;
                }
            }
            assert!(per_src.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        }
    }
}
