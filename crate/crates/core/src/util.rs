//! Small formatting helpers shared by the table writers and the CLI.

/// Format a float for deterministic table output.
///
/// Integral values print without a fraction; everything else prints with up
/// to nine decimals, trailing zeros trimmed. NaN marks an undefined cell
/// and prints empty; infinities print as `inf`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == x.trunc() && x.abs() < 1e15 {
        return format!("{}", x as i64);
    }
    let mut s = format!("{x:.9}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}
