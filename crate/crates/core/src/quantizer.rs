//! Feature-wise uniform scalar quantization.
//!
//! Each feature gets one global range `[lo, hi]` taken from the training
//! split. A value maps to one of `2^bits` evenly spaced levels; values outside
//! the range clamp to the extreme levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::FeatureTable;

pub const MIN_BITS: u32 = 1;
pub const MAX_BITS: u32 = 32;

/// Per-feature quantization ranges (the codebook).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeModel {
    feature_names: Vec<String>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl RangeModel {
    pub fn new(feature_names: Vec<String>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != feature_names.len() || hi.len() != feature_names.len() {
            return Err(Error::invalid("range vectors differ in length from feature names"));
        }
        for (j, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(Error::invalid(format!(
                    "feature `{}` has invalid range [{l}, {h}]",
                    feature_names[j]
                )));
            }
        }
        Ok(Self {
            feature_names,
            lo,
            hi,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    fn check_schema(&self, names: &[String]) -> Result<()> {
        if self.feature_names != names {
            return Err(Error::SchemaMismatch {
                expected: self.feature_names.clone(),
                found: names.to_vec(),
            });
        }
        Ok(())
    }
}

/// Integer codes for a table, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeTable {
    feature_names: Vec<String>,
    codes: Vec<u64>,
    n_rows: usize,
    bits: u8,
}

impl CodeTable {
    pub fn new(feature_names: Vec<String>, codes: Vec<u64>, n_rows: usize, bits: u32) -> Result<Self> {
        check_bits(bits)?;
        let p = feature_names.len();
        if codes.len() != n_rows * p {
            return Err(Error::invalid(format!(
                "{} codes do not fill {n_rows} rows x {p} features",
                codes.len()
            )));
        }
        let max = max_level(bits);
        if let Some(pos) = codes.iter().position(|&c| c > max) {
            return Err(Error::CodeOutOfRange {
                row: pos / p.max(1),
                feature: pos % p.max(1),
                code: codes[pos],
                bits: bits as u8,
            });
        }
        Ok(Self {
            feature_names,
            codes,
            n_rows,
            bits: bits as u8,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn codes(&self) -> &[u64] {
        &self.codes
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn bits(&self) -> u32 {
        u32::from(self.bits)
    }

    pub fn row(&self, i: usize) -> &[u64] {
        let p = self.n_features();
        &self.codes[i * p..(i + 1) * p]
    }
}

pub fn check_bits(bits: u32) -> Result<()> {
    if (MIN_BITS..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidBits(bits))
    }
}

/// Highest code at this bit width, `2^bits - 1`.
pub fn max_level(bits: u32) -> u64 {
    (1u64 << bits) - 1
}

/// Exact per-feature min and max over the training rows.
pub fn fit_ranges(train: &FeatureTable) -> Result<RangeModel> {
    if train.is_empty() {
        return Err(Error::EmptyTable);
    }
    let p = train.n_features();
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for row in train.rows() {
        for (j, &v) in row.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    RangeModel::new(train.feature_names().to_vec(), lo, hi)
}

/// Quantizes one value. `levels` is `2^bits - 1`.
#[inline]
pub fn quantize_value(x: f64, lo: f64, hi: f64, levels: u64) -> u64 {
    if hi <= lo {
        return 0;
    }
    let l = levels as f64;
    let t = ((x - lo) / (hi - lo) * l).clamp(0.0, l);
    // t >= 0, so floor(t + 0.5) rounds half away from zero
    ((t + 0.5).floor() as u64).min(levels)
}

/// Representative value of level `q`. Endpoints reconstruct exactly.
#[inline]
pub fn dequantize_value(q: u64, lo: f64, hi: f64, levels: u64) -> f64 {
    if hi <= lo || q == 0 {
        lo
    } else if q >= levels {
        hi
    } else {
        lo + (hi - lo) * (q as f64 / levels as f64)
    }
}

pub fn encode(table: &FeatureTable, ranges: &RangeModel, bits: u32) -> Result<CodeTable> {
    check_bits(bits)?;
    ranges.check_schema(table.feature_names())?;
    let levels = max_level(bits);
    let p = table.n_features();
    let codes = table
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let j = i % p;
            quantize_value(x, ranges.lo[j], ranges.hi[j], levels)
        })
        .collect();
    Ok(CodeTable {
        feature_names: table.feature_names().to_vec(),
        codes,
        n_rows: table.n_rows(),
        bits: bits as u8,
    })
}

/// Reconstructs feature values. Labels are not part of a [`CodeTable`]; the
/// result carries a single placeholder class and callers reattach the real
/// labels with [`decode_like`] when they have them.
pub fn decode(codes: &CodeTable, ranges: &RangeModel) -> Result<FeatureTable> {
    let values = decode_values(codes, ranges)?;
    let labels = vec![0u32; codes.n_rows];
    let class_names = vec![String::new()];
    FeatureTable::from_parts(
        codes.feature_names.clone(),
        values,
        labels,
        class_names,
        None,
        None,
    )
}

/// Decodes `codes` and attaches the labels, timestamps and group keys of
/// `like`, which must have the same row count.
pub fn decode_like(codes: &CodeTable, ranges: &RangeModel, like: &FeatureTable) -> Result<FeatureTable> {
    if like.n_rows() != codes.n_rows {
        return Err(Error::invalid(format!(
            "code table has {} rows, label source has {}",
            codes.n_rows,
            like.n_rows()
        )));
    }
    let values = decode_values(codes, ranges)?;
    like.with_features(codes.feature_names.clone(), values)
}

fn decode_values(codes: &CodeTable, ranges: &RangeModel) -> Result<Vec<f64>> {
    ranges.check_schema(&codes.feature_names)?;
    let bits = codes.bits();
    let levels = max_level(bits);
    let p = codes.n_features();
    codes
        .codes
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let j = i % p;
            if q > levels {
                return Err(Error::CodeOutOfRange {
                    row: i / p,
                    feature: j,
                    code: q,
                    bits: codes.bits,
                });
            }
            Ok(dequantize_value(q, ranges.lo[j], ranges.hi[j], levels))
        })
        .collect()
}

/// Encode then decode, keeping the table's labels and metadata.
pub fn round_trip(table: &FeatureTable, ranges: &RangeModel, bits: u32) -> Result<FeatureTable> {
    let codes = encode(table, ranges, bits)?;
    decode_like(&codes, ranges, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_col(values: &[f64]) -> FeatureTable {
        let labels = vec!["a"; values.len()];
        FeatureTable::new(vec!["x".into()], values.to_vec(), &labels).unwrap()
    }

    fn range(lo: f64, hi: f64) -> RangeModel {
        RangeModel::new(vec!["x".into()], vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn fits_min_max() {
        let r = fit_ranges(&one_col(&[2.0, 8.0, 5.0])).unwrap();
        assert_eq!((r.lo()[0], r.hi()[0]), (2.0, 8.0));
        let r = fit_ranges(&one_col(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!((r.lo()[0], r.hi()[0]), (5.0, 5.0));
        assert!(matches!(fit_ranges(&one_col(&[])), Err(Error::EmptyTable)));
    }

    #[test]
    fn test_values_outside_train_range_clamp() {
        let train = one_col(&[2.0, 8.0, 5.0]);
        let r = fit_ranges(&train).unwrap();
        let test = one_col(&[8.0 + 1.0, 2.0 - 1.0]);
        for bits in [1, 4, 32] {
            let c = encode(&test, &r, bits).unwrap();
            assert_eq!(c.codes(), [max_level(bits), 0]);
        }
    }

    #[test]
    fn two_bit_levels_by_hand() {
        // levels of [0, 10] at 2 bits: 0, 10/3, 20/3, 10
        let r = range(0.0, 10.0);
        let reps = [0.0, 10.0 / 3.0, 20.0 / 3.0, 10.0];
        let t = one_col(&[5.0]);
        let c = encode(&t, &r, 2).unwrap();
        // 5 sits exactly between levels 1 and 2; the tie goes up
        assert_eq!(c.codes(), [2]);
        let d = decode(&c, &r).unwrap();
        assert!((d.get(0, 0) - 6.6667).abs() < 1e-4);
        for (q, rep) in reps.iter().enumerate() {
            let c = CodeTable::new(vec!["x".into()], vec![q as u64], 1, 2).unwrap();
            assert!((decode(&c, &r).unwrap().get(0, 0) - rep).abs() < 1e-12);
        }
        // every non-tie value lands on its nearest representative
        for k in 0..=100 {
            let x = k as f64 / 10.0;
            let q = encode(&one_col(&[x]), &r, 2).unwrap().codes()[0] as usize;
            let best = reps
                .iter()
                .map(|rep| (x - rep).abs())
                .fold(f64::INFINITY, f64::min);
            assert!((x - reps[q]).abs() <= best + 1e-12, "x={x}");
        }
    }

    #[test]
    fn endpoints_and_clamping() {
        let r = range(0.0, 10.0);
        for bits in [1, 2, 7, 16, 32] {
            let c = encode(&one_col(&[10.0, 0.0]), &r, bits).unwrap();
            assert_eq!(c.codes(), [max_level(bits), 0]);
            let d = decode(&c, &r).unwrap();
            assert_eq!(d.values(), [10.0, 0.0]);
        }
        let c = encode(&one_col(&[-1.0]), &r, 4).unwrap();
        assert_eq!(c.codes(), [0]);
    }

    #[test]
    fn constant_feature() {
        let r = range(5.0, 5.0);
        let c = encode(&one_col(&[5.0, 7.0, 1.0]), &r, 8).unwrap();
        assert_eq!(c.codes(), [0, 0, 0]);
        assert_eq!(decode(&c, &r).unwrap().values(), [5.0, 5.0, 5.0]);
    }

    #[test]
    fn bits_validation_and_schema() {
        let t = one_col(&[1.0]);
        let r = range(0.0, 1.0);
        assert!(matches!(encode(&t, &r, 0), Err(Error::InvalidBits(0))));
        assert!(matches!(encode(&t, &r, 33), Err(Error::InvalidBits(33))));
        let other = RangeModel::new(vec!["y".into()], vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(encode(&t, &other, 4), Err(Error::SchemaMismatch { .. })));
        assert!(RangeModel::new(vec!["x".into()], vec![2.0], vec![1.0]).is_err());
    }

    #[test]
    fn corrupt_code_rejected() {
        let r = range(0.0, 1.0);
        assert!(matches!(
            CodeTable::new(vec!["x".into()], vec![4], 1, 2),
            Err(Error::CodeOutOfRange { code: 4, .. })
        ));
        let forged = CodeTable {
            feature_names: vec!["x".into()],
            codes: vec![4],
            n_rows: 1,
            bits: 2,
        };
        assert!(matches!(decode(&forged, &r), Err(Error::CodeOutOfRange { .. })));
    }

    #[test]
    fn training_data_never_clamps() {
        let t = one_col(&[-3.0, 0.5, 7.25, 1e6]);
        let r = fit_ranges(&t).unwrap();
        let c = encode(&t, &r, 8).unwrap();
        assert_eq!(c.codes()[0], 0);
        assert_eq!(c.codes()[3], 255);
    }

    const BITS: [u32; 6] = [1, 2, 4, 8, 16, 32];

    proptest! {
        #[test]
        fn in_range_error_is_half_step(
            offset in -10.0f64..10.0,
            width in 1e-3f64..1e6,
            u in 0.0f64..=1.0,
            b in 0usize..6,
        ) {
            let bits = BITS[b];
            let lo = offset * width;
            let hi = lo + width;
            let x = (lo + u * width).min(hi);
            let levels = max_level(bits);
            let q = quantize_value(x, lo, hi, levels);
            let xr = dequantize_value(q, lo, hi, levels);
            prop_assert!((x - xr).abs() <= (hi - lo) / (2.0 * levels as f64));
        }

        #[test]
        fn idempotent(x in -20.0f64..20.0, b in 0usize..6) {
            let levels = max_level(BITS[b]);
            let q = quantize_value(x, -10.0, 10.0, levels);
            let again = quantize_value(dequantize_value(q, -10.0, 10.0, levels), -10.0, 10.0, levels);
            prop_assert_eq!(q, again);
        }

        #[test]
        fn monotone(x in -20.0f64..20.0, y in -20.0f64..20.0, b in 0usize..6) {
            let levels = max_level(BITS[b]);
            let (x, y) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(quantize_value(x, -10.0, 10.0, levels) <= quantize_value(y, -10.0, 10.0, levels));
        }

        #[test]
        fn finer_bits_never_worse(samples in prop::collection::vec(-5.0f64..5.0, 2..40)) {
            let t = one_col(&samples);
            let r = fit_ranges(&t).unwrap();
            let max_err = |bits| {
                let back = round_trip(&t, &r, bits).unwrap();
                samples.iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            };
            // Grids at b and b+1 do not nest, so the observed error at b+1 is
            // compared with the worst case at b rather than the observed one.
            let width = r.hi()[0] - r.lo()[0];
            for bits in 1..32 {
                let half_step = |b| width / (2.0 * max_level(b) as f64);
                let e = max_err(bits + 1);
                prop_assert!(e <= half_step(bits + 1));
                prop_assert!(e <= half_step(bits));
            }
        }
    }
}
