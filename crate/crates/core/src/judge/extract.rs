//! Yes-probability extraction from a judge response.
//!
//! The score is `p(yes) / (p(yes) + p(no))` over the first generated token,
//! where each side sums the probability mass of its case/whitespace surface
//! variants. When no log-probabilities are available the plain text answer
//! falls back to a hard 1.0 / 0.0.

/// Normalized yes-probability from the first token's top log-probabilities.
/// Returns `None` when neither a yes nor a no variant appears.
pub fn score_from_top_logprobs(top: &[(String, f64)]) -> Option<f64> {
    let mut p_yes = 0.0;
    let mut p_no = 0.0;
    for (token, logprob) in top {
        let surface = token.trim();
        if surface.eq_ignore_ascii_case("yes") {
            p_yes += logprob.exp();
        } else if surface.eq_ignore_ascii_case("no") {
            p_no += logprob.exp();
        }
    }
    let total = p_yes + p_no;
    if total > 0.0 {
        Some(p_yes / total)
    } else {
        None
    }
}

/// Hard fallback when the endpoint gives no log-probabilities: the first
/// word of the answer decides. Returns `None` for anything else.
pub fn score_from_text(content: &str) -> Option<f64> {
    let first_word: String = content
        .trim()
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect();
    if first_word.eq_ignore_ascii_case("yes") {
        Some(1.0)
    } else if first_word.eq_ignore_ascii_case("no") {
        Some(0.0)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(token: &str, p: f64) -> (String, f64) {
        (token.to_string(), p.ln())
    }

    #[test]
    fn plain_distribution_normalizes() {
        let top = vec![entry("yes", 0.8), entry("no", 0.2)];
        assert!((score_from_top_logprobs(&top).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn case_variants_sum_before_normalizing() {
        // Hand oracle: p(yes) = 0.45 + 0.15 = 0.60, p(no) = 0.40,
        // 0.60 / (0.60 + 0.40) = 0.6.
        let top = vec![entry("Yes", 0.45), entry("yes", 0.15), entry("No", 0.40)];
        assert!((score_from_top_logprobs(&top).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn whitespace_variants_count() {
        let top = vec![entry(" yes", 0.3), entry("YES", 0.1), entry(" No", 0.6)];
        assert!((score_from_top_logprobs(&top).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn unrelated_tokens_are_ignored_entirely() {
        let top = vec![entry("maybe", 0.7), entry("the", 0.3)];
        assert_eq!(score_from_top_logprobs(&top), None);
    }

    #[test]
    fn text_fallback_is_hard() {
        assert_eq!(score_from_text("Yes, the image matches."), Some(1.0));
        assert_eq!(score_from_text("  no"), Some(0.0));
        assert_eq!(score_from_text("Notably, it is unclear."), None);
        assert_eq!(score_from_text(""), None);
    }
}
