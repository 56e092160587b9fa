//! Runtime values and their Python-style text forms.

use crate::exec::protocol::{Preview, VarKind, VariableSnapshot, PREVIEW_ROWS};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Frame {
    pub fn head(&self, n: usize) -> Frame {
        Frame {
            columns: self.columns.clone(),
            rows: self.rows.iter().take(n).cloned().collect(),
        }
    }

    pub fn tail(&self, n: usize) -> Frame {
        let skip = self.rows.len().saturating_sub(n);
        Frame {
            columns: self.columns.clone(),
            rows: self.rows[skip..].to_vec(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Value>),
    Tuple(Vec<Value>),
    Dict(Vec<(Value, Value)>),
    Frame(Frame),
    Module(String),
    Builtin(&'static str),
    Method(Box<Value>, String),
    ModuleFn(String, String),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::None => "NoneType",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Tuple(_) => "tuple",
            Value::Dict(_) => "dict",
            Value::Frame(_) => "DataFrame",
            Value::Module(_) => "module",
            Value::Builtin(_) => "builtin_function_or_method",
            Value::Method(..) | Value::ModuleFn(..) => "method",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Float(f) => *f != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::List(v) | Value::Tuple(v) => !v.is_empty(),
            Value::Dict(d) => !d.is_empty(),
            Value::Frame(f) => !f.rows.is_empty(),
            _ => true,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Bool(b) => Some(f64::from(u8::from(*b))),
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Python `str()`.
    pub fn py_str(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            Value::Frame(f) => frame_text(f),
            other => other.py_repr(),
        }
    }

    /// Python `repr()`.
    pub fn py_repr(&self) -> String {
        match self {
            Value::None => "None".into(),
            Value::Bool(true) => "True".into(),
            Value::Bool(false) => "False".into(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => float_repr(*f),
            Value::Str(s) => str_repr(s),
            Value::List(v) => format!("[{}]", join_repr(v)),
            Value::Tuple(v) if v.len() == 1 => format!("({},)", v[0].py_repr()),
            Value::Tuple(v) => format!("({})", join_repr(v)),
            Value::Dict(d) => format!(
                "{{{}}}",
                d.iter()
                    .map(|(k, v)| format!("{}: {}", k.py_repr(), v.py_repr()))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            Value::Frame(f) => frame_text(f),
            Value::Module(m) => format!("<module '{m}'>"),
            Value::Builtin(n) => format!("<built-in function {n}>"),
            Value::Method(_, n) | Value::ModuleFn(_, n) => format!("<bound method {n}>"),
        }
    }

    /// Snapshot for the variable inspector; `None` for values that are never shown.
    pub fn snapshot(&self, name: &str) -> Option<VariableSnapshot> {
        let (kind, shape, preview) = match self {
            Value::Module(_) | Value::Builtin(_) | Value::Method(..) | Value::ModuleFn(..) => return None,
            Value::None | Value::Bool(_) | Value::Int(_) | Value::Float(_) | Value::Str(_) => {
                (VarKind::Scalar, None, Preview::Text(self.py_str()))
            }
            Value::List(_) | Value::Tuple(_) => (VarKind::Sequence, None, Preview::Text(self.py_repr())),
            Value::Dict(_) => (VarKind::Other, None, Preview::Text(self.py_repr())),
            Value::Frame(f) => (
                VarKind::Dataframe,
                Some((f.rows.len() as u64, f.columns.len() as u64)),
                Preview::Table {
                    columns: f.columns.clone(),
                    rows: f.rows.iter().take(PREVIEW_ROWS).cloned().collect(),
                },
            ),
        };
        Some(VariableSnapshot {
            name: name.to_string(),
            kind,
            type_label: self.type_name().to_string(),
            shape,
            preview,
        })
    }
}

fn join_repr(v: &[Value]) -> String {
    v.iter().map(Value::py_repr).collect::<Vec<_>>().join(", ")
}

/// Python's float repr: shortest round-trip digits, exponent form outside
/// `1e-4 <= |x| < 1e16`.
pub fn float_repr(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e16).contains(&a) {
        let s = format!("{x:e}");
        let (mant, exp) = s.split_once('e').expect("exponent form");
        let exp: i32 = exp.parse().expect("integer exponent");
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", exp.abs());
    }
    let s = format!("{x}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

fn frame_text(f: &Frame) -> String {
    let mut widths: Vec<usize> = f.columns.iter().map(|c| c.chars().count()).collect();
    let index_width = f.rows.len().saturating_sub(1).to_string().len();
    for r in &f.rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut lines = Vec::with_capacity(f.rows.len() + 1);
    let mut header = " ".repeat(index_width);
    for (c, w) in f.columns.iter().zip(&widths) {
        header.push_str(&format!("  {c:>w$}"));
    }
    lines.push(header);
    for (i, r) in f.rows.iter().enumerate() {
        let mut line = format!("{i:<index_width$}");
        for (c, w) in r.iter().zip(&widths) {
            line.push_str(&format!("  {c:>w$}"));
        }
        lines.push(line);
    }
    lines.join("\n")
}

/// Reads a cell as the most specific scalar it parses as.
pub fn cell_value(s: &str) -> Value {
    if let Ok(i) = s.trim().parse::<i64>() {
        return Value::Int(i);
    }
    if let Some(f) = crate::profile::infer::parse_decimal(s) {
        return Value::Float(f);
    }
    Value::Str(s.to_string())
}
