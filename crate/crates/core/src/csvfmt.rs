//! Float formatting shared by every CSV writer: six decimals, no
//! locale, `-0.000000` normalized to `0.000000`.

pub fn f6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}
