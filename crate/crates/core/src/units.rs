//! Unit conversions between the internal watt/nat system and the
//! dB/dBm/bit quantities used at I/O boundaries.

/// Nats → bits multiplier (`log2(e)`).
pub const NATS_TO_BITS: f64 = std::f64::consts::LOG2_E;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1e3).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Total noise power over a bandwidth from a power spectral density in
/// dBm/Hz.
pub fn psd_dbm_hz_to_watts(psd_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(psd_dbm_hz) * bandwidth_hz
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats * NATS_TO_BITS
}

pub fn bits_to_nats(bits: f64) -> f64 {
    bits / NATS_TO_BITS
}
