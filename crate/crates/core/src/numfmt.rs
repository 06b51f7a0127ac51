//! `%g`-style number formatting.

/// Format `value` with at most `digits` significant digits, trailing zeros
/// removed. Very large or very small magnitudes fall back to exponent form.
pub fn format_significant(value: f64, digits: usize) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    if value == 0.0 {
        return "0".to_string();
    }
    let digits = digits.max(1);
    let exp = value.abs().log10().floor() as i32;
    if exp < -5 || exp >= digits as i32 {
        let s = format!("{:.*e}", digits - 1, value);
        let (mantissa, exponent) = s.split_once('e').expect("exponent form");
        return format!("{}e{}", trim_zeros(mantissa), exponent);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = trim_zeros(&format!("{value:.decimals$}")).to_string();
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
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
    use super::format_significant as f;

    #[test]
    fn basic_cases() {
        assert_eq!(f(1.3, 4), "1.3");
        assert_eq!(f(-0.7, 4), "-0.7");
        assert_eq!(f(0.0, 4), "0");
        assert_eq!(f(1.23456, 4), "1.235");
        assert_eq!(f(-2.0, 4), "-2");
        assert_eq!(f(2.0 / 3.0, 12), "0.666666666667");
        assert_eq!(f(0.999999999999999, 12), "1");
        assert_eq!(f(1234.5678, 4), "1235");
        assert_eq!(f(0.00012346, 4), "0.0001235");
        assert_eq!(f(-0.00001, 4), "-0.00001");
        assert_eq!(f(1.5e-9, 4), "1.5e-9");
        assert_eq!(f(-0.00000001, 2), "-1e-8");
    }
}
