//! Bars-and-stripes images, raster flattening, segmentation and splitting.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::random::rng;

/// Largest side length accepted by the generator.
pub const MAX_SIDE: usize = 24;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("image side must be between 1 and {MAX_SIDE}, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
    #[error("segment length {segment_len} does not divide the raster length {total}")]
    Segment { segment_len: usize, total: usize },
    #[error("split fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("dataset is empty")]
    Empty,
    #[error("dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Training and test sequences.
pub type Split = (Vec<Vec<u8>>, Vec<Vec<u8>>);

/// Row-major binary image with pixels in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl BinaryImage {
    pub fn pixel(&self, r: usize, c: usize) -> u8 {
        self.pixels[r * self.cols + c]
    }

    /// Every row is constant.
    pub fn is_bar(&self) -> bool {
        (0..self.rows).all(|r| (0..self.cols).all(|c| self.pixel(r, c) == self.pixel(r, 0)))
    }

    /// Every column is constant.
    pub fn is_stripe(&self) -> bool {
        (0..self.cols).all(|c| (0..self.rows).all(|r| self.pixel(r, c) == self.pixel(0, c)))
    }
}

/// All bar images (mask ascending, top row = most significant bit) followed
/// by all stripe images (left column = most significant bit). With `dedup`
/// the two constant stripe images, which repeat constant bar images, are
/// dropped.
pub fn bars_and_stripes(rows: usize, cols: usize, dedup: bool) -> Result<Vec<BinaryImage>, DataError> {
    if !(1..=MAX_SIDE).contains(&rows) || !(1..=MAX_SIDE).contains(&cols) {
        return Err(DataError::Shape { rows, cols });
    }
    let bit = |mask: usize, i: usize, n: usize| ((mask >> (n - 1 - i)) & 1) as u8;
    let mut out = Vec::with_capacity((1 << rows) + (1 << cols));
    for mask in 0..1usize << rows {
        let pixels = (0..rows * cols).map(|k| bit(mask, k / cols, rows)).collect();
        out.push(BinaryImage { rows, cols, pixels });
    }
    let full = (1usize << cols) - 1;
    for mask in 0..1usize << cols {
        if dedup && (mask == 0 || mask == full) {
            continue;
        }
        let pixels = (0..rows * cols).map(|k| bit(mask, k % cols, cols)).collect();
        out.push(BinaryImage { rows, cols, pixels });
    }
    Ok(out)
}

/// Row-major scan with symbol = pixel + 1.
pub fn raster_flatten(img: &BinaryImage) -> Vec<u8> {
    img.pixels.iter().map(|&p| p + 1).collect()
}

/// Sequences of uniform length over symbols `1..=d_obs`, with the
/// parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDataset {
    pub sequences: Vec<Vec<u8>>,
    pub d_obs: usize,
    pub rows: usize,
    pub cols: usize,
    pub segment_len: usize,
    pub dedup: bool,
    pub seed: u64,
}

impl SequenceDataset {
    /// Bars-and-stripes rasters cut into consecutive `segment_len` pieces.
    pub fn bars_and_stripes(
        rows: usize,
        cols: usize,
        segment_len: usize,
        dedup: bool,
        seed: u64,
    ) -> Result<Self, DataError> {
        let images = bars_and_stripes(rows, cols, dedup)?;
        let total = rows * cols;
        if segment_len == 0 || !total.is_multiple_of(segment_len) {
            return Err(DataError::Segment { segment_len, total });
        }
        let sequences = images
            .iter()
            .flat_map(|img| {
                let raster = raster_flatten(img);
                raster.chunks(segment_len).map(<[u8]>::to_vec).collect::<Vec<_>>()
            })
            .collect();
        Ok(Self { sequences, d_obs: 2, rows, cols, segment_len, dedup, seed })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.segment_len
    }

    /// Seeded permutation; the first `⌈fraction · M⌉` sequences form the
    /// training split.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<Split, DataError> {
        let (train, test) = split_indices(self.len(), fraction, seed)?;
        let pick = |ix: &[usize]| ix.iter().map(|&i| self.sequences[i].clone()).collect();
        Ok((pick(&train), pick(&test)))
    }

    pub fn write_csv(&self, w: impl Write) -> Result<(), DataError> {
        let mut w = w;
        writeln!(
            w,
            "# rows={},cols={},segment_len={},seed={},dedup={},d_obs={}",
            self.rows, self.cols, self.segment_len, self.seed, self.dedup, self.d_obs
        )?;
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for s in &self.sequences {
            csv.write_record(s.iter().map(u8::to_string))?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self, DataError> {
        let mut r = r;
        let mut header = String::new();
        r.read_line(&mut header)?;
        let header = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| DataError::Format("missing '#' header line".into()))?;
        let mut fields = std::collections::BTreeMap::new();
        for kv in header.split(',') {
            let (k, v) = kv
                .trim()
                .split_once('=')
                .ok_or_else(|| DataError::Format(format!("malformed header field {kv:?}")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        fn get<T: std::str::FromStr>(
            fields: &std::collections::BTreeMap<String, String>,
            key: &str,
        ) -> Result<T, DataError> {
            fields
                .get(key)
                .ok_or_else(|| DataError::Format(format!("header lacks {key}")))?
                .parse()
                .map_err(|_| DataError::Format(format!("header field {key} is malformed")))
        }
        let mut ds = SequenceDataset {
            sequences: Vec::new(),
            d_obs: get(&fields, "d_obs")?,
            rows: get(&fields, "rows")?,
            cols: get(&fields, "cols")?,
            segment_len: get(&fields, "segment_len")?,
            dedup: get(&fields, "dedup")?,
            seed: get(&fields, "seed")?,
        };
        let mut csv = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        for (i, rec) in csv.records().enumerate() {
            let rec = rec?;
            let seq = rec
                .iter()
                .map(|s| s.trim().parse::<u8>())
                .collect::<Result<Vec<u8>, _>>()
                .map_err(|_| DataError::Format(format!("row {} has a non-integer symbol", i + 1)))?;
            if seq.len() != ds.segment_len {
                return Err(DataError::Format(format!(
                    "row {} has length {}, expected {}",
                    i + 1,
                    seq.len(),
                    ds.segment_len
                )));
            }
            if let Some(&bad) = seq.iter().find(|&&x| x == 0 || x as usize > ds.d_obs) {
                return Err(DataError::Format(format!("row {} has symbol {bad} outside 1..={}", i + 1, ds.d_obs)));
            }
            ds.sequences.push(seq);
        }
        Ok(ds)
    }
}

/// Number of training items for `m` items at `fraction`, rounding up.
pub fn train_size(m: usize, fraction: f64) -> usize {
    // absorb representation error such as 0.7 · 10 = 7.000000000000001
    let x = fraction * m as f64;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    k as usize
}

/// Seeded partition of `0..m` into training and test indices.
pub fn split_indices(m: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::Fraction(fraction));
    }
    if m == 0 {
        return Err(DataError::Empty);
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut rng(seed));
    let test = idx.split_off(train_size(m, fraction));
    Ok((idx, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn eight_by_eight_counts() {
        let imgs = bars_and_stripes(8, 8, true).unwrap();
        assert_eq!(imgs.len(), 510);
        let distinct: BTreeSet<_> = imgs.iter().map(|i| i.pixels.clone()).collect();
        assert_eq!(distinct.len(), 510);
        assert_eq!(bars_and_stripes(8, 8, false).unwrap().len(), 512);
    }

    #[test]
    fn one_by_one() {
        let imgs = bars_and_stripes(1, 1, true).unwrap();
        assert_eq!(imgs.len(), 2);
        let px: BTreeSet<_> = imgs.iter().map(|i| i.pixels.clone()).collect();
        assert_eq!(px, BTreeSet::from([vec![0], vec![1]]));
    }

    #[test]
    fn predicate_holds() {
        for (r, c) in [(1, 1), (2, 3), (3, 2), (4, 4), (8, 8)] {
            for img in bars_and_stripes(r, c, true).unwrap() {
                assert!(img.is_bar() || img.is_stripe());
            }
        }
    }

    #[test]
    fn dedup_count_formula() {
        for r in 1..=5 {
            for c in 1..=5 {
                let imgs = bars_and_stripes(r, c, true).unwrap();
                let distinct: BTreeSet<_> = imgs.iter().map(|i| i.pixels.clone()).collect();
                assert_eq!(imgs.len(), (1 << r) + (1 << c) - 2);
                assert_eq!(distinct.len(), imgs.len());
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(bars_and_stripes(0, 3, true), Err(DataError::Shape { .. })));
        assert!(matches!(bars_and_stripes(3, MAX_SIDE + 1, true), Err(DataError::Shape { .. })));
    }

    #[test]
    fn raster_examples() {
        let img = BinaryImage { rows: 2, cols: 2, pixels: vec![1, 0, 0, 1] };
        assert_eq!(raster_flatten(&img), vec![2, 1, 1, 2]);
        let ones = BinaryImage { rows: 2, cols: 2, pixels: vec![1; 4] };
        assert_eq!(raster_flatten(&ones), vec![2; 4]);
        let big = &bars_and_stripes(8, 8, true).unwrap()[5];
        assert_eq!(raster_flatten(big).len(), 64);
    }

    #[test]
    fn raster_is_injective() {
        let imgs = bars_and_stripes(4, 3, false).unwrap();
        let mut seen = BTreeSet::new();
        let mut distinct_images = BTreeSet::new();
        for img in &imgs {
            distinct_images.insert(img.pixels.clone());
            seen.insert(raster_flatten(img));
        }
        assert_eq!(seen.len(), distinct_images.len());
    }

    #[test]
    fn segmented_dataset() {
        let ds = SequenceDataset::bars_and_stripes(8, 8, 16, true, 0).unwrap();
        assert_eq!(ds.len(), 2040);
        assert!(ds.sequences.iter().all(|s| s.len() == 16 && s.iter().all(|&x| x == 1 || x == 2)));
        let full = SequenceDataset::bars_and_stripes(8, 8, 64, true, 0).unwrap();
        assert_eq!(full.len(), 510);
        assert!(matches!(
            SequenceDataset::bars_and_stripes(8, 8, 10, true, 0),
            Err(DataError::Segment { .. })
        ));
    }

    #[test]
    fn split_sizes_and_determinism() {
        assert_eq!(train_size(10, 0.7), 7);
        assert_eq!(train_size(2040, 0.7), 1428);
        assert_eq!(train_size(3, 0.5), 2);
        let (a, b) = split_indices(10, 0.7, 3).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        assert_eq!(split_indices(10, 0.7, 3).unwrap(), (a, b));
        assert!(matches!(split_indices(0, 0.7, 0), Err(DataError::Empty)));
        assert!(matches!(split_indices(5, 1.0, 0), Err(DataError::Fraction(_))));
        assert!(matches!(split_indices(5, 0.0, 0), Err(DataError::Fraction(_))));
    }

    #[test]
    fn fifteen_seeds_give_distinct_permutations() {
        let perms: BTreeSet<_> = (0..15)
            .map(|r| {
                let (a, b) = split_indices(2040, 0.7, crate::random::derive_seed(0, &[r])).unwrap();
                [a, b].concat()
            })
            .collect();
        assert_eq!(perms.len(), 15);
    }

    #[test]
    fn csv_round_trip_is_byte_stable() {
        let ds = SequenceDataset::bars_and_stripes(3, 2, 3, true, 7).unwrap();
        let mut a = Vec::new();
        ds.write_csv(&mut a).unwrap();
        let back = SequenceDataset::read_csv(&a[..]).unwrap();
        assert_eq!(back, ds);
        let mut b = Vec::new();
        back.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("# rows=3,cols=2,segment_len=3,seed=7,dedup=true,d_obs=2\n"));
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let bad = "# rows=1,cols=2,segment_len=2,seed=0,dedup=true,d_obs=2\n1,3\n";
        assert!(matches!(SequenceDataset::read_csv(bad.as_bytes()), Err(DataError::Format(_))));
        let short = "# rows=1,cols=2,segment_len=2,seed=0,dedup=true,d_obs=2\n1\n";
        assert!(SequenceDataset::read_csv(short.as_bytes()).is_err());
        assert!(SequenceDataset::read_csv("1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn split_is_partition(m in 1usize..200, frac in 0.05f64..0.95, seed: u64) {
            let (a, b) = split_indices(m, frac, seed).unwrap();
            prop_assert_eq!(a.len(), train_size(m, frac));
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
        }
    }
}
