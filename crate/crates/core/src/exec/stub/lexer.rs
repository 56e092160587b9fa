//! Statement splitting and tokenization for the stub kernel's language.

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Num(String),
    Str(String),
    Ident(String),
    Op(&'static str),
}

const OPS: &[&str] = &[
    "**=", "//=", "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "+", "-", "*", "/", "%", "<", ">", "=",
    "(", ")", "[", "]", "{", "}", ",", ":", ".",
];

/// One logical statement with the 1-based line it starts on.
#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub line: usize,
    pub text: String,
    /// Whether the statement's first line is indented.
    pub indented: bool,
}

/// Splits source into statements on newlines and `;` outside strings and
/// brackets, dropping comments.
pub fn split_statements(code: &str) -> Result<Vec<Statement>, (usize, String)> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut line = 1;
    let mut start_line = 1;
    let mut at_line_start = true;
    let mut indented = false;
    let mut depth: i32 = 0;
    let mut quote: Option<char> = None;
    let mut chars = code.chars().peekable();

    let flush = |cur: &mut String, start_line: usize, indented: bool, out: &mut Vec<Statement>| {
        let t = cur.trim();
        if !t.is_empty() {
            out.push(Statement {
                line: start_line,
                text: t.to_string(),
                indented,
            });
        }
        cur.clear();
    };

    while let Some(c) = chars.next() {
        if let Some(q) = quote {
            cur.push(c);
            if c == '\\' {
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            } else if c == q {
                quote = None;
            } else if c == '\n' {
                return Err((line, "unterminated string literal".into()));
            }
            continue;
        }
        if cur.trim().is_empty() && at_line_start && depth == 0 {
            if c == ' ' || c == '\t' {
                indented = true;
                continue;
            }
            if c != '\n' {
                start_line = line;
            }
        }
        match c {
            '#' => {
                while chars.peek().is_some_and(|&n| n != '\n') {
                    chars.next();
                }
            }
            '\'' | '"' => {
                quote = Some(c);
                cur.push(c);
                at_line_start = false;
            }
            '(' | '[' | '{' => {
                depth += 1;
                cur.push(c);
                at_line_start = false;
            }
            ')' | ']' | '}' => {
                depth -= 1;
                cur.push(c);
                at_line_start = false;
            }
            '\n' => {
                line += 1;
                if depth > 0 {
                    cur.push(' ');
                } else {
                    flush(&mut cur, start_line, indented, &mut out);
                    at_line_start = true;
                    indented = false;
                }
            }
            ';' if depth == 0 => {
                flush(&mut cur, start_line, indented, &mut out);
                at_line_start = false;
                indented = false;
                start_line = line;
            }
            c => {
                cur.push(c);
                if !c.is_whitespace() {
                    at_line_start = false;
                }
            }
        }
    }
    if quote.is_some() {
        return Err((line, "unterminated string literal".into()));
    }
    if depth != 0 {
        return Err((start_line, "unbalanced brackets".into()));
    }
    flush(&mut cur, start_line, indented, &mut out);
    Ok(out)
}

pub fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '_') {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == '.' && !(i + 1 < bytes.len() && bytes[i + 1].is_alphabetic()) {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == '+' || bytes[j] == '-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push(Tok::Num(bytes[start..i].iter().filter(|c| **c != '_').collect()));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_alphanumeric() || bytes[i] == '_') {
                i += 1;
            }
            let word: String = bytes[start..i].iter().collect();
            if i < bytes.len() && (bytes[i] == '\'' || bytes[i] == '"') {
                match word.as_str() {
                    "r" | "R" => {
                        let (s, next) = read_string(&bytes, i, true)?;
                        out.push(Tok::Str(s));
                        i = next;
                        continue;
                    }
                    _ => return Err(format!("unsupported string prefix {word:?}")),
                }
            }
            out.push(Tok::Ident(word));
            continue;
        }
        if c == '\'' || c == '"' {
            let (s, next) = read_string(&bytes, i, false)?;
            out.push(Tok::Str(s));
            i = next;
            continue;
        }
        let rest: String = bytes[i..bytes.len().min(i + 3)].iter().collect();
        match OPS.iter().find(|op| rest.starts_with(**op)) {
            Some(op) => {
                out.push(Tok::Op(op));
                i += op.chars().count();
            }
            None => return Err(format!("invalid character {c:?}")),
        }
    }
    Ok(out)
}

fn read_string(chars: &[char], start: usize, raw: bool) -> Result<(String, usize), String> {
    let q = chars[start];
    let mut i = start + 1;
    let mut s = String::new();
    while i < chars.len() {
        let c = chars[i];
        if c == q {
            return Ok((s, i + 1));
        }
        if c == '\\' && i + 1 < chars.len() {
            let n = chars[i + 1];
            if raw {
                s.push('\\');
                s.push(n);
            } else {
                match n {
                    'n' => s.push('\n'),
                    't' => s.push('\t'),
                    'r' => s.push('\r'),
                    '0' => s.push('\0'),
                    '\\' | '\'' | '"' => s.push(n),
                    other => {
                        s.push('\\');
                        s.push(other);
                    }
                }
            }
            i += 2;
            continue;
        }
        s.push(c);
        i += 1;
    }
    Err("unterminated string literal".into())
}
