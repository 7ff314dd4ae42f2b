//! Deterministic numeric formatting for emitted tables.
//!
//! Report files are compared byte for byte across runs and platforms, so
//! every float goes through [`format_sig`]: fixed significant digits,
//! plain decimal notation, `'.'` separator, no locale involvement.

/// Formats `x` with `sig` significant digits in plain decimal notation.
///
/// Trailing zeros are kept so columns align ("0.900000000000", not
/// "0.9"). Exact zero prints as "0". Not meant for NaN or infinities.
pub fn format_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    debug_assert!(x.is_finite());
    if x == 0.0 {
        return "0".to_string();
    }
    // Round in scientific form so the exponent reflects the rounded
    // value (0.99995 at 4 digits must print as 1.000, not 0.9999), then
    // lay the digits out textually to avoid a second float rounding.
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    debug_assert_eq!(digits.len(), sig);
    let body = if exp >= 0 {
        let int_len = exp as usize + 1;
        if int_len >= sig {
            format!("{digits}{}", "0".repeat(int_len - sig))
        } else {
            format!("{}.{}", &digits[..int_len], &digits[int_len..])
        }
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    format!("{sign}{body}")
}
