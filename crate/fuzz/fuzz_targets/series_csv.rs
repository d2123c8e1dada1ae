#![no_main]

use fujita_lab::report::{parse_series_csv, series_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(series) = parse_series_csv(text) {
        let again = parse_series_csv(&series_csv(&series)).expect("emitted series must parse");
        assert_eq!(series.len(), again.len());
        for (a, b) in series.iter().zip(&again) {
            assert!(a.0.to_bits() == b.0.to_bits() || (a.0.is_nan() && b.0.is_nan()));
            assert!(a.1.to_bits() == b.1.to_bits() || (a.1.is_nan() && b.1.is_nan()));
        }
    }
});
