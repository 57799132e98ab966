#![no_main]

use libfuzzer_sys::fuzz_target;
use pme::io::{apply_filters, read_csv_long_from, write_csv_long, CsvColumns, FilterSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(records) = read_csv_long_from(data, &CsvColumns::default()) else {
        return;
    };
    // whatever parses must survive a write/read cycle unchanged
    let mut buf = Vec::new();
    write_csv_long(&mut buf, &records).unwrap();
    let again = read_csv_long_from(buf.as_slice(), &CsvColumns::default()).unwrap();
    assert_eq!(records, again);

    let spec = FilterSpec {
        min_t: 2,
        keep_longest_run: true,
        ..FilterSpec::default()
    };
    let _ = apply_filters(&records, &spec);
});
