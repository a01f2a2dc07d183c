/// Lowercases and splits on whitespace. Transcript markup (`{F`, `}`, `/`,
/// `+`, `[`, `]`, `<laughter>.`, partial words like `ca-,`) and punctuation
/// stay attached exactly as they appear.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}
