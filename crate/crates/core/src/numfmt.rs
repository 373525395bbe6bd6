//! Locale-independent numeric formatting for every text output.

/// Formats `x` with 12 significant digits.
///
/// Values with magnitude outside `[1e-4, 1e6)` use lowercase scientific
/// notation. Trailing zeros are trimmed, and negative zero prints as `0`.
pub fn sig12(x: f64) -> String {
    format_sig(x, 12)
}

/// Fixed-point formatting with `decimals` places (used for loadings tables).
pub fn fixed(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if (1e-4..1e6).contains(&a) {
        let exp = a.log10().floor() as i32;
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can carry into the next decade, e.g. 999999.9999999
        let rounded: f64 = s.parse().unwrap_or(x);
        if rounded.abs() >= 1e6 {
            return scientific(x, digits);
        }
        trim_fraction(&s)
    } else {
        scientific(x, digits)
    }
}

fn scientific(x: f64, digits: usize) -> String {
    let s = format!("{:.*e}", digits - 1, x);
    let (mantissa, exponent) = s.split_once('e').expect("scientific format has an exponent");
    format!("{}e{}", trim_fraction(mantissa), exponent)
}

fn trim_fraction(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}
