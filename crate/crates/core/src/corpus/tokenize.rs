/// Splits a message into lowercased tokens.
///
/// Whitespace separates chunks. Within a chunk, runs of word characters form
/// one token and every punctuation character stands alone, except that a
/// `@` or `#` directly followed by word characters stays attached
/// (`@yahoo`, `#solar`), and a chunk that starts with a URL prefix
/// (`scheme://` or `www.`) is kept whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        if is_url(&lower) {
            tokens.push(lower);
        } else {
            split_chunk(&lower, &mut tokens);
        }
    }
    tokens
}

fn is_url(chunk: &str) -> bool {
    if chunk.starts_with("www.") {
        return true;
    }
    match chunk.find("://") {
        Some(pos) if pos > 0 => {
            let scheme = &chunk[..pos];
            scheme.starts_with(|c: char| c.is_ascii_alphabetic())
                && scheme
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        }
        _ => false,
    }
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let mut current = String::new();
    let mut chars = chunk.chars().peekable();
    while let Some(c) = chars.next() {
        if is_punct(c) {
            if (c == '@' || c == '#') && current.is_empty() {
                if let Some(&next) = chars.peek() {
                    if !is_punct(next) {
                        current.push(c);
                        continue;
                    }
                }
            }
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            out.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
}

/// ASCII punctuation (minus `_`, which belongs to words) plus the common
/// typographic marks found in social-media text. Everything else that is
/// not whitespace, including combining marks, counts as a word character.
fn is_punct(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation() && c != '_';
    }
    matches!(
        c,
        '\u{2010}'..='\u{2027}'
            | '\u{2030}'..='\u{205E}'
            | '\u{00A1}'
            | '\u{00A7}'
            | '\u{00AB}'
            | '\u{00B6}'
            | '\u{00B7}'
            | '\u{00BB}'
            | '\u{00BF}'
            | '\u{3001}'..='\u{3003}'
            | '\u{3008}'..='\u{3011}'
            | '\u{FF01}'..='\u{FF0F}'
            | '\u{FF1A}'..='\u{FF20}'
    )
}
