use super::UNK;

/// Lowercases, splits on whitespace and detaches punctuation.
///
/// Alphanumeric runs are words. An apostrophe that directly follows a word
/// character and precedes another one starts a clitic token (`it's` gives
/// `it`, `'s`). Every other non-alphanumeric character is its own token.
/// Text without any token yields a single [`UNK`].
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().flat_map(char::to_lowercase).collect();
        let mut cur = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if c.is_alphanumeric() {
                cur.push(c);
                continue;
            }
            let clitic = c == '\''
                && i > 0
                && chars[i - 1].is_alphanumeric()
                && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
            if clitic {
                cur.push(c);
            } else {
                tokens.push(c.to_string());
            }
        }
        if !cur.is_empty() {
            tokens.push(cur);
        }
    }
    if tokens.is_empty() {
        tokens.push(UNK.to_owned());
    }
    tokens
}
