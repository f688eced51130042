//! Case folding, tokenization and the stem heuristic used for target-word matching.

/// Case-folds with full Unicode lowercasing.
pub fn casefold(text: &str) -> String {
    text.to_lowercase()
}

/// Combining diacritical marks stay attached to the preceding letter.
fn is_combining_mark(c: char) -> bool {
    matches!(c, '\u{0300}'..='\u{036F}' | '\u{1AB0}'..='\u{1AFF}' | '\u{20D0}'..='\u{20FF}')
}

/// Anything that is not a letter, digit, whitespace or combining mark.
pub fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace() && !is_combining_mark(c)
}

/// Case-folds, separates punctuation into standalone tokens and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in casefold(text).chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if is_punctuation(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Case-folded word tokens only (punctuation dropped).
pub fn word_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !t.chars().all(is_punctuation))
        .collect()
}

/// Matches tokens against a target word, exactly or through a prefix stem.
///
/// The stem is the first `max(stem_min, len - 2)` characters of the
/// case-folded target, capped at the target length. `stem_min = 0` turns
/// stem matching off.
#[derive(Debug, Clone)]
pub struct TargetMatcher {
    target: String,
    stem: Option<String>,
}

impl TargetMatcher {
    pub fn new(target: &str, stem_min: usize) -> Self {
        let target = casefold(target.trim());
        let stem = (stem_min > 0).then(|| {
            let len = target.chars().count();
            let keep = stem_min.max(len.saturating_sub(2)).min(len);
            target.chars().take(keep).collect()
        });
        TargetMatcher { target, stem }
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn stem(&self) -> Option<&str> {
        self.stem.as_deref()
    }

    /// `token` must already be case-folded.
    pub fn matches_token(&self, token: &str) -> bool {
        if token == self.target {
            return true;
        }
        match &self.stem {
            Some(stem) if !stem.is_empty() => token.starts_with(stem.as_str()),
            _ => false,
        }
    }

    /// True if any token of `text` matches. Multi-word targets fall back to a
    /// case-folded phrase search.
    pub fn matches_text(&self, text: &str) -> bool {
        if self.target.contains(char::is_whitespace) {
            let folded = word_tokens(text).join(" ");
            let target = word_tokens(&self.target).join(" ");
            return !target.is_empty() && folded.contains(&target);
        }
        word_tokens(text).iter().any(|t| self.matches_token(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("A unit of a living organism"),
            vec!["a", "unit", "of", "a", "living", "organism"]
        );
        assert_eq!(tokenize("cell."), vec!["cell", "."]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("«Кот», да?"), vec!["«", "кот", "»", ",", "да", "?"]);
    }

    #[test]
    fn stem_lengths() {
        assert_eq!(TargetMatcher::new("таблица", 4).stem(), Some("табли"));
        assert_eq!(TargetMatcher::new("cell", 4).stem(), Some("cell"));
        assert_eq!(TargetMatcher::new("Tisch", 4).stem(), Some("tisc"));
        assert_eq!(TargetMatcher::new("Tisch", 0).stem(), None);
    }

    #[test]
    fn multiword_target() {
        let m = TargetMatcher::new("New York", 4);
        assert!(m.matches_text("I moved to new  York."));
        assert!(!m.matches_text("York is old"));
    }
}
