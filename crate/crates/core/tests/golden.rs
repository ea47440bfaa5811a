//! Byte- and size-level goldens. A change here is a format or codec change.

mod common;

use std::io::Read;

use featpress_core::codec::{baseline_sizes, open, pack, read_header, seal, unpack, DEFAULT_LEVEL};
use featpress_core::quantizer::{encode, fit_ranges};
use featpress_core::tabular::FeatureTable;

use common::reference_table;

const THREE_ROW: [u8; 70] = [
    0x4e, 0x46, 0x51, 0x31, // NFQ1
    0x01, 0x04, // version, bits
    0x02, 0x00, 0x00, 0x00, // features
    0x03, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // rows
    0x01, 0x00, 0x61, // "a"
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // lo 0
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x24, 0x40, // hi 10
    0x02, 0x00, 0x62, 0x62, // "bb"
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xf8, 0xbf, // lo -1.5
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x10, 0x40, // hi 4
    0x05, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // payload length
    0x63, 0xf8, 0x12, 0x0f, 0x00,
];

fn three_rows() -> FeatureTable {
    FeatureTable::new(
        vec!["a".into(), "bb".into()],
        vec![0.0, -1.5, 2.5, 4.0, 10.0, 0.25],
        &["x", "y", "x"],
    )
    .unwrap()
}

#[test]
fn three_row_container_bytes() {
    let table = three_rows();
    let ranges = fit_ranges(&table).unwrap();
    let codes = encode(&table, &ranges, 4).unwrap();
    assert_eq!(codes.codes(), [0, 0, 4, 15, 15, 5]);
    let bytes = seal(&pack(&codes, &ranges).unwrap(), DEFAULT_LEVEL).unwrap();
    assert_eq!(bytes, THREE_ROW);

    // 4-bit codes, low nibble first: 0,0 | 4,15 | 15,5
    let mut raw = Vec::new();
    flate2::read::DeflateDecoder::new(&THREE_ROW[65..])
        .read_to_end(&mut raw)
        .unwrap();
    assert_eq!(raw, [0x00, 0xf4, 0x5f]);

    let header = read_header(&THREE_ROW).unwrap();
    assert_eq!((header.bits, header.n_rows, header.header_bytes), (4, 3, 65));
    let (back, back_ranges) = unpack(&open(&THREE_ROW).unwrap()).unwrap();
    assert_eq!(back, codes);
    assert_eq!(back_ranges, ranges);
}

#[test]
fn sealed_size_grows_with_bits_on_a_1000_by_20_slice() {
    let table = reference_table()
        .subset(&(0..1000).collect::<Vec<_>>())
        .select_columns(&(0..20).collect::<Vec<_>>())
        .unwrap();
    let ranges = fit_ranges(&table).unwrap();
    let size = |bits| {
        let codes = encode(&table, &ranges, bits).unwrap();
        seal(&pack(&codes, &ranges).unwrap(), DEFAULT_LEVEL).unwrap().len()
    };
    let sizes = [size(2), size(8), size(16), size(32)];
    assert!(sizes.windows(2).all(|w| w[0] < w[1]), "{sizes:?}");
    assert_eq!(sizes, [3013, 17905, 37521, 78591]);
}

#[test]
fn text_baseline_is_larger_than_binary() {
    let sizes = baseline_sizes(reference_table(), DEFAULT_LEVEL).unwrap();
    assert!(sizes.csv_bytes > sizes.f32_bytes);
    assert_eq!((sizes.csv_bytes, sizes.f32_bytes), (547_931, 225_777));
}
