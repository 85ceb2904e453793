//! `%g`-style formatting with a fixed number of significant digits.

/// Formats `x` with `digits` significant digits, dropping trailing zeros,
/// in fixed notation when the decimal exponent lies in `[-4, digits)` and
/// scientific notation otherwise.
pub fn significant(x: f64, digits: usize) -> String {
    assert!(digits >= 1, "need at least one significant digit");
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= digits as i32 {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::significant;

    #[test]
    fn matches_printf_g() {
        for (x, digits, want) in [
            (0.5, 9, "0.5"),
            (0.880797077977882, 9, "0.880797078"),
            (1.0 / 3.0, 9, "0.333333333"),
            (1e-20, 9, "1e-20"),
            (2.5e-5, 9, "2.5e-5"),
            (0.00012345678912, 9, "0.000123456789"),
            (0.9999999999, 9, "1"),
            (2096.4, 3, "2.1e3"),
            (123.456, 3, "123"),
            (0.0, 9, "0"),
            (-0.25, 3, "-0.25"),
        ] {
            assert_eq!(significant(x, digits), want, "{x}");
        }
    }
}
