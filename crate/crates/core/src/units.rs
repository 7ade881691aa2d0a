//! Unit conversions at the configuration boundary.
//!
//! Internally the crate works in watts, Mbps, and MHz, so that
//! `r = tau * log2(1 + sinr)` yields Mbps directly. Config files declare
//! powers in dBm and rates in Mbps; conversions happen here.

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// dB ratio to linear ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear ratio to dB.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}
