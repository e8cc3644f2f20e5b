//! Word-level tokenizer with marker tokens for case and character repetition.
//!
//! Rules, fixed so downstream behavior is fully deterministic:
//! - words split on whitespace; punctuation characters become their own tokens
//! - a token with a leading uppercase letter (or in all-caps form) is emitted
//!   as a single `<up>` marker followed by its lowercased form
//! - a run of k >= 3 identical consecutive characters is emitted as
//!   `<rep>`, the decimal run length, and the single character
//! - the whole sequence is wrapped in `<bos>` ... `<eos>`

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UP: &str = "<up>";
pub const REP: &str = "<rep>";

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = vec![BOS.to_string()];
    for word in text.split_whitespace() {
        tokenize_word(word, &mut out);
    }
    out.push(EOS.to_string());
    out
}

fn tokenize_word(word: &str, out: &mut Vec<String>) {
    // Split into alphanumeric segments and punctuation runs first.
    let chars: Vec<char> = word.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            emit_word_segment(&chars[start..i], out);
        } else {
            let c = chars[i];
            let start = i;
            while i < chars.len() && chars[i] == c {
                i += 1;
            }
            emit_run(c, i - start, out);
        }
    }
}

fn emit_word_segment(chars: &[char], out: &mut Vec<String>) {
    let leading_upper = chars[0].is_uppercase();
    let all_caps = chars.iter().any(|c| c.is_uppercase()) && !chars.iter().any(|c| c.is_lowercase());
    if leading_upper || all_caps {
        out.push(UP.to_string());
    }
    let lowered: Vec<char> = chars
        .iter()
        .flat_map(|c| c.to_lowercase())
        .collect();

    let mut i = 0;
    let mut pending = String::new();
    while i < lowered.len() {
        let c = lowered[i];
        let start = i;
        while i < lowered.len() && lowered[i] == c {
            i += 1;
        }
        let run = i - start;
        if run >= 3 {
            if !pending.is_empty() {
                out.push(std::mem::take(&mut pending));
            }
            out.push(REP.to_string());
            out.push(run.to_string());
            out.push(c.to_string());
        } else {
            for _ in 0..run {
                pending.push(c);
            }
        }
    }
    if !pending.is_empty() {
        out.push(pending);
    }
}

fn emit_run(c: char, run: usize, out: &mut Vec<String>) {
    if run >= 3 {
        out.push(REP.to_string());
        out.push(run.to_string());
        out.push(c.to_string());
    } else {
        for _ in 0..run {
            out.push(c.to_string());
        }
    }
}

/// Inverse up to spacing: reconstructs capitalization and repetition runs as
/// standalone words so that re-tokenizing the output is a fixed point.
pub fn detokenize(tokens: &[String]) -> String {
    let mut words: Vec<String> = Vec::new();
    let mut capitalize_next = false;
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i].as_str();
        match t {
            BOS | EOS | PAD => {}
            UP => capitalize_next = true,
            REP => {
                // <rep> count char
                if i + 2 < tokens.len() {
                    let count: usize = tokens[i + 1].parse().unwrap_or(3);
                    let ch = &tokens[i + 2];
                    let mut w = String::new();
                    for _ in 0..count {
                        w.push_str(ch);
                    }
                    if capitalize_next {
                        w = capitalize(&w);
                        capitalize_next = false;
                    }
                    words.push(w);
                    i += 2;
                }
            }
            UNK => words.push(UNK.to_string()),
            _ => {
                let w = if capitalize_next {
                    capitalize_next = false;
                    capitalize(t)
                } else {
                    t.to_string()
                };
                words.push(w);
            }
        }
        i += 1;
    }
    words.join(" ")
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
