use super::AnnotationError;
use crate::labels::Fbl9;

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '\n' | ';' | '!' | '?')
}

/// Label codes found in one clause, in order.
fn codes_in(clause: &str) -> Vec<Fbl9> {
    clause
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
        .map(|tok| tok.trim_matches('-'))
        .filter(|tok| !tok.is_empty() && tok.len() <= 3)
        .filter_map(Fbl9::from_code)
        .collect()
}

/// Extracts the label from a free-text response.
///
/// The first clause (text up to a terminator such as `.` or a newline) that
/// contains any code decides: it must name exactly one distinct code.
/// Matching is case-insensitive and accepts `B-1` and `B1` alike.
pub fn parse_label(response: &str) -> Result<Fbl9, AnnotationError> {
    for clause in response.split(is_terminator) {
        let codes = codes_in(clause);
        let Some(&first) = codes.first() else {
            continue;
        };
        if codes.iter().any(|&c| c != first) {
            return Err(AnnotationError::Unparseable(format!(
                "ambiguous response {response:?}"
            )));
        }
        return Ok(first);
    }
    Err(AnnotationError::Unparseable(format!("no label code in {response:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(parse_label("The answer is C-1.").unwrap(), Fbl9::C1);
        assert_eq!(parse_label("c1").unwrap(), Fbl9::C1);
        assert!(matches!(parse_label("either A or D"), Err(AnnotationError::Unparseable(_))));
    }

    #[test]
    fn variants() {
        assert_eq!(parse_label("B1").unwrap(), Fbl9::B1);
        assert_eq!(parse_label("(B-2)").unwrap(), Fbl9::B2);
        assert_eq!(parse_label("Category: **E**").unwrap(), Fbl9::E);
        assert_eq!(parse_label("D\nBecause they are unrelated, not C-4.").unwrap(), Fbl9::D);
        assert_eq!(parse_label("Answer: C-4. (not C-1)").unwrap(), Fbl9::C4);
        assert!(parse_label("").is_err());
        assert!(parse_label("B-3 or C-9").is_err());
        assert!(parse_label("I cannot decide").is_err());
    }
}
