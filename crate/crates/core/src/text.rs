use alloc::string::String;

/// Lowercase and collapse runs of whitespace to a single space.
pub(crate) fn normalize_label(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        for c in word.chars() {
            out.extend(c.to_lowercase());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_case_and_space() {
        assert_eq!(normalize_label("  Traffic \t LIGHT "), "traffic light");
        assert_eq!(normalize_label(""), "");
    }
}
