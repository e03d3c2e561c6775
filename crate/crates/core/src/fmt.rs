//! Text formatting shared by every CSV and key-value writer.

/// Format a float with 17 significant digits so the text round-trips exactly.
pub fn f64_text(x: f64) -> String {
    format!("{x:.16e}")
}
