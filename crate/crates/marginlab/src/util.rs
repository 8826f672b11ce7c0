//! Small shared helpers: float formatting for data files and seed derivation.

/// Format a float with 17 significant digits, enough to round-trip any f64
/// bit-exactly through text.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Derive an independent stream seed from a master seed and a stream index
/// (splitmix64 finalizer). Used so that parallel cells get seeds that do not
/// depend on scheduling order.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
