//! Number formatting shared by every human-readable table.

/// `value` rounded to `digits` significant digits, positional notation.
pub fn sig(value: f64, digits: usize) -> String {
    if !value.is_finite() {
        return format!("{value}");
    }
    if value == 0.0 {
        return format!("{:.*}", digits.saturating_sub(1), 0.0);
    }
    let magnitude = value.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let rounded = format!("{value:.decimals$}");
    // Rounding may carry into a new leading digit (9.9996 -> 10.000).
    let carried = rounded.trim_start_matches('-').split('.').next().map_or(0, str::len) as i64;
    if decimals > 0 && carried > magnitude.max(0) + 1 {
        format!("{value:.prec$}", prec = decimals - 1)
    } else {
        rounded
    }
}

/// `value` in scientific notation with `digits` significant digits, e.g. `6.71e-07`.
pub fn sci(value: f64, digits: usize) -> String {
    if !value.is_finite() {
        return format!("{value}");
    }
    let s = format!("{value:.prec$e}", prec = digits.saturating_sub(1));
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let exp: i32 = exp.parse().unwrap_or(0);
            let sign = if exp < 0 { '-' } else { '+' };
            format!("{mantissa}e{sign}{:02}", exp.abs())
        }
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(sig(0.963_345, 4), "0.9633");
        assert_eq!(sig(96.33, 4), "96.33");
        assert_eq!(sig(7.4412, 4), "7.441");
        assert_eq!(sig(1234.5, 4), "1234");
        assert_eq!(sig(0.0, 4), "0.000");
        assert_eq!(sig(9.99996, 4), "10.00");
        assert_eq!(sig(-0.0123456, 4), "-0.01235");
    }

    #[test]
    fn scientific() {
        assert_eq!(sci(6.7134e-7, 3), "6.71e-07");
        assert_eq!(sci(0.0324, 3), "3.24e-02");
        assert_eq!(sci(1.0, 3), "1.00e+00");
    }
}
