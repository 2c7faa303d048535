/// Formats `x` with at most `sig` significant digits in plain decimal
/// notation. Trailing fractional zeros are dropped.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return "0".to_string();
    }
    let sig = sig.max(1) as i32;
    let e = x.abs().log10().floor() as i32;
    let s = if e >= sig - 1 {
        let scale = 10f64.powi(e - (sig - 1));
        format!("{:.0}", (x / scale).round() * scale)
    } else {
        let decimals = (sig - 1 - e) as usize;
        trim_fraction(format!("{:.*}", decimals, x))
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

/// Fixed number of decimals, e.g. cents.
pub fn fmt_fixed(x: f64, decimals: usize) -> String {
    let s = format!("{:.*}", decimals, x);
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn trim_fraction(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
