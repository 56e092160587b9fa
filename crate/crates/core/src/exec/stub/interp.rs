//! Evaluator for the stub kernel language.

use std::path::{Path, PathBuf};

use super::parser::{BinOp, CmpOp, Expr, Stmt};
use super::value::{cell_value, Frame, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct PyErr {
    pub error_type: String,
    pub message: String,
}

pub fn err(t: &str, m: impl Into<String>) -> PyErr {
    PyErr {
        error_type: t.to_string(),
        message: m.into(),
    }
}

type R<T> = Result<T, PyErr>;

const BUILTINS: &[&str] = &[
    "print", "len", "str", "int", "float", "bool", "abs", "round", "sum", "min", "max", "sorted", "list", "range",
    "type",
];

/// Interpreter state that persists across executions.
#[derive(Debug, Default)]
pub struct Interp {
    /// Bindings in creation order; reassignment keeps the original position.
    pub bindings: Vec<(String, Value)>,
    pub base_dir: PathBuf,
    pub stdout: String,
    pub figure_open: bool,
    pub plots: usize,
}

impl Interp {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_dir: base_dir.into(),
            ..Self::default()
        }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn set(&mut self, name: &str, value: Value) {
        match self.bindings.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.bindings.push((name.to_string(), value)),
        }
    }

    pub fn exec(&mut self, stmt: &Stmt) -> R<()> {
        match stmt {
            Stmt::Pass => {}
            Stmt::Plot => self.plots += 1,
            Stmt::Import(pairs) => {
                for (bind, module) in pairs {
                    self.set(bind, Value::Module(module.clone()));
                }
            }
            Stmt::Assign(targets, e) => {
                let v = self.eval(e)?;
                if targets.len() == 1 {
                    self.set(&targets[0], v);
                } else {
                    let items = match v {
                        Value::List(i) | Value::Tuple(i) => i,
                        other => {
                            return Err(err(
                                "TypeError",
                                format!("cannot unpack non-iterable {} object", other.type_name()),
                            ))
                        }
                    };
                    if items.len() != targets.len() {
                        return Err(err(
                            "ValueError",
                            format!("expected {} values to unpack, got {}", targets.len(), items.len()),
                        ));
                    }
                    for (t, v) in targets.iter().zip(items) {
                        self.set(t, v);
                    }
                }
            }
            Stmt::AugAssign(name, op, e) => {
                let cur = self.lookup(name)?;
                let rhs = self.eval(e)?;
                let v = binop(&cur, *op, &rhs)?;
                self.set(name, v);
            }
            Stmt::Del(names) => {
                for n in names {
                    self.lookup(n)?;
                    self.bindings.retain(|(b, _)| b != n);
                }
            }
            Stmt::Raise(t, msg) => {
                let m = match msg {
                    Some(e) => self.eval(e)?.py_str(),
                    None => String::new(),
                };
                return Err(err(t, m));
            }
            Stmt::Expr(e) => {
                self.eval(e)?;
            }
        }
        Ok(())
    }

    fn lookup(&self, name: &str) -> R<Value> {
        if let Some(v) = self.get(name) {
            return Ok(v.clone());
        }
        if let Some(b) = BUILTINS.iter().find(|b| **b == name) {
            return Ok(Value::Builtin(b));
        }
        Err(err("NameError", format!("name '{name}' is not defined")))
    }

    pub fn eval(&mut self, e: &Expr) -> R<Value> {
        Ok(match e {
            Expr::None => Value::None,
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Int(i) => Value::Int(*i),
            Expr::Float(f) => Value::Float(*f),
            Expr::Str(s) => Value::Str(s.clone()),
            Expr::Name(n) => self.lookup(n)?,
            Expr::List(items) => Value::List(self.eval_all(items)?),
            Expr::Tuple(items) => Value::Tuple(self.eval_all(items)?),
            Expr::Dict(items) => {
                let mut out: Vec<(Value, Value)> = Vec::new();
                for (k, v) in items {
                    let k = self.eval(k)?;
                    let v = self.eval(v)?;
                    match out.iter_mut().find(|(ek, _)| values_eq(ek, &k)) {
                        Some(slot) => slot.1 = v,
                        None => out.push((k, v)),
                    }
                }
                Value::Dict(out)
            }
            Expr::Neg(x) => match self.eval(x)? {
                Value::Int(i) => Value::Int(i.checked_neg().ok_or_else(|| err("OverflowError", "integer overflow"))?),
                Value::Bool(b) => Value::Int(-i64::from(b)),
                Value::Float(f) => Value::Float(-f),
                other => {
                    return Err(err(
                        "TypeError",
                        format!("bad operand type for unary -: '{}'", other.type_name()),
                    ))
                }
            },
            Expr::Not(x) => Value::Bool(!self.eval(x)?.truthy()),
            Expr::And(a, b) => {
                let l = self.eval(a)?;
                if l.truthy() {
                    self.eval(b)?
                } else {
                    l
                }
            }
            Expr::Or(a, b) => {
                let l = self.eval(a)?;
                if l.truthy() {
                    l
                } else {
                    self.eval(b)?
                }
            }
            Expr::Bin(a, op, b) => {
                let l = self.eval(a)?;
                let r = self.eval(b)?;
                binop(&l, *op, &r)?
            }
            Expr::Cmp(a, op, b) => {
                let l = self.eval(a)?;
                let r = self.eval(b)?;
                Value::Bool(compare(&l, *op, &r)?)
            }
            Expr::Attr(obj, name) => {
                let o = self.eval(obj)?;
                attribute(o, name)?
            }
            Expr::Index(obj, idx) => {
                let o = self.eval(obj)?;
                let i = self.eval(idx)?;
                index(&o, &i)?
            }
            Expr::Call(f, args, kwargs) => {
                let callee = self.eval(f)?;
                let args = self.eval_all(args)?;
                let mut kw = Vec::with_capacity(kwargs.len());
                for (k, v) in kwargs {
                    kw.push((k.clone(), self.eval(v)?));
                }
                self.call(callee, args, kw)?
            }
        })
    }

    fn eval_all(&mut self, items: &[Expr]) -> R<Vec<Value>> {
        items.iter().map(|e| self.eval(e)).collect()
    }

    fn call(&mut self, callee: Value, args: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        match callee {
            Value::Builtin(name) => self.builtin(name, args, kw),
            Value::ModuleFn(module, name) => self.module_fn(&module, &name, args, kw),
            Value::Method(recv, name) => self.method(*recv, &name, args, kw),
            other => Err(err(
                "TypeError",
                format!("'{}' object is not callable", other.type_name()),
            )),
        }
    }

    fn builtin(&mut self, name: &str, args: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        let arity = |n: usize| -> R<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(err(
                    "TypeError",
                    format!("{name}() takes exactly {n} argument(s) ({} given)", args.len()),
                ))
            }
        };
        match name {
            "print" => {
                let sep = kwarg(&kw, "sep").map(Value::py_str).unwrap_or_else(|| " ".into());
                let end = kwarg(&kw, "end").map(Value::py_str).unwrap_or_else(|| "\n".into());
                let line = args.iter().map(Value::py_str).collect::<Vec<_>>().join(&sep);
                self.stdout.push_str(&line);
                self.stdout.push_str(&end);
                Ok(Value::None)
            }
            "len" => {
                arity(1)?;
                let n = match &args[0] {
                    Value::Str(s) => s.chars().count(),
                    Value::List(v) | Value::Tuple(v) => v.len(),
                    Value::Dict(d) => d.len(),
                    Value::Frame(f) => f.rows.len(),
                    other => {
                        return Err(err(
                            "TypeError",
                            format!("object of type '{}' has no len()", other.type_name()),
                        ))
                    }
                };
                Ok(Value::Int(n as i64))
            }
            "str" => {
                arity(1)?;
                Ok(Value::Str(args[0].py_str()))
            }
            "type" => {
                arity(1)?;
                Ok(Value::Str(format!("<class '{}'>", args[0].type_name())))
            }
            "bool" => {
                arity(1)?;
                Ok(Value::Bool(args[0].truthy()))
            }
            "int" => {
                arity(1)?;
                match &args[0] {
                    Value::Int(i) => Ok(Value::Int(*i)),
                    Value::Bool(b) => Ok(Value::Int(i64::from(*b))),
                    Value::Float(f) if f.is_finite() => Ok(Value::Int(f.trunc() as i64)),
                    Value::Float(_) => Err(err("ValueError", "cannot convert float NaN or infinity to integer")),
                    Value::Str(s) => s.trim().parse().map(Value::Int).map_err(|_| {
                        err("ValueError", format!("invalid literal for int() with base 10: {}", super::value::str_repr(s)))
                    }),
                    other => Err(err(
                        "TypeError",
                        format!("int() argument must be a string or a number, not '{}'", other.type_name()),
                    )),
                }
            }
            "float" => {
                arity(1)?;
                match &args[0] {
                    Value::Str(s) => {
                        let t = s.trim().to_ascii_lowercase();
                        match t.as_str() {
                            "nan" => Ok(Value::Float(f64::NAN)),
                            "inf" | "infinity" => Ok(Value::Float(f64::INFINITY)),
                            "-inf" | "-infinity" => Ok(Value::Float(f64::NEG_INFINITY)),
                            _ => crate::profile::infer::parse_decimal(s).map(Value::Float).ok_or_else(|| {
                                err("ValueError", format!("could not convert string to float: {}", super::value::str_repr(s)))
                            }),
                        }
                    }
                    v => v.as_f64().map(Value::Float).ok_or_else(|| {
                        err(
                            "TypeError",
                            format!("float() argument must be a string or a real number, not '{}'", v.type_name()),
                        )
                    }),
                }
            }
            "abs" => {
                arity(1)?;
                match &args[0] {
                    Value::Int(i) => Ok(Value::Int(i.checked_abs().ok_or_else(|| err("OverflowError", "integer overflow"))?)),
                    Value::Bool(b) => Ok(Value::Int(i64::from(*b))),
                    Value::Float(f) => Ok(Value::Float(f.abs())),
                    other => Err(err(
                        "TypeError",
                        format!("bad operand type for abs(): '{}'", other.type_name()),
                    )),
                }
            }
            "round" => {
                let x = args
                    .first()
                    .and_then(Value::as_f64)
                    .ok_or_else(|| err("TypeError", "round() needs a number"))?;
                match args.get(1) {
                    None | Some(Value::None) => {
                        if let Value::Int(i) = args[0] {
                            return Ok(Value::Int(i));
                        }
                        Ok(Value::Int(x.round_ties_even() as i64))
                    }
                    Some(Value::Int(n)) => {
                        if let Value::Int(i) = args[0] {
                            return Ok(Value::Int(i));
                        }
                        let p = 10f64.powi(*n as i32);
                        Ok(Value::Float((x * p).round_ties_even() / p))
                    }
                    Some(other) => Err(err(
                        "TypeError",
                        format!("'{}' object cannot be interpreted as an integer", other.type_name()),
                    )),
                }
            }
            "sum" => {
                arity(1)?;
                let mut acc = Value::Int(0);
                for v in iterate(&args[0])? {
                    acc = binop(&acc, BinOp::Add, &v)?;
                }
                Ok(acc)
            }
            "min" | "max" => {
                let items = if args.len() == 1 { iterate(&args[0])? } else { args };
                let mut it = items.into_iter();
                let mut best = it
                    .next()
                    .ok_or_else(|| err("ValueError", format!("{name}() arg is an empty sequence")))?;
                for v in it {
                    let better = if name == "min" {
                        compare(&v, CmpOp::Lt, &best)?
                    } else {
                        compare(&v, CmpOp::Gt, &best)?
                    };
                    if better {
                        best = v;
                    }
                }
                Ok(best)
            }
            "sorted" => {
                arity(1)?;
                let mut items = iterate(&args[0])?;
                let mut failure = None;
                items.sort_by(|a, b| match (compare(a, CmpOp::Lt, b), compare(b, CmpOp::Lt, a)) {
                    (Ok(true), _) => std::cmp::Ordering::Less,
                    (_, Ok(true)) => std::cmp::Ordering::Greater,
                    (Err(e), _) | (_, Err(e)) => {
                        failure.get_or_insert(e);
                        std::cmp::Ordering::Equal
                    }
                    _ => std::cmp::Ordering::Equal,
                });
                if let Some(e) = failure {
                    return Err(e);
                }
                if kwarg(&kw, "reverse").is_some_and(Value::truthy) {
                    items.reverse();
                }
                Ok(Value::List(items))
            }
            "list" => {
                if args.is_empty() {
                    return Ok(Value::List(Vec::new()));
                }
                arity(1)?;
                Ok(Value::List(iterate(&args[0])?))
            }
            "range" => {
                let ints: Vec<i64> = args
                    .iter()
                    .map(|a| match a {
                        Value::Int(i) => Ok(*i),
                        other => Err(err(
                            "TypeError",
                            format!("'{}' object cannot be interpreted as an integer", other.type_name()),
                        )),
                    })
                    .collect::<R<_>>()?;
                let (start, stop) = match ints.as_slice() {
                    [n] => (0, *n),
                    [a, b] => (*a, *b),
                    _ => return Err(err("TypeError", "range expected 1 or 2 arguments")),
                };
                if stop.saturating_sub(start) > 1_000_000 {
                    return Err(err("MemoryError", "range too large for the stub kernel"));
                }
                Ok(Value::List((start..stop).map(Value::Int).collect()))
            }
            _ => Err(err("NameError", format!("name '{name}' is not defined"))),
        }
    }

    fn module_fn(&mut self, module: &str, name: &str, args: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        if module.contains("pyplot") || module == "seaborn" {
            self.figure_open = true;
            return Ok(Value::None);
        }
        match (module, name) {
            ("pandas", "read_csv") => {
                let path = match args.first().or_else(|| kwarg(&kw, "filepath_or_buffer")) {
                    Some(Value::Str(p)) => p.clone(),
                    _ => return Err(err("TypeError", "read_csv() needs a path")),
                };
                read_csv(&self.base_dir, &path).map(Value::Frame)
            }
            ("pandas", "DataFrame") => {
                let data = args.into_iter().next().unwrap_or(Value::Dict(Vec::new()));
                frame_from_dict(data).map(Value::Frame)
            }
            _ => Err(err(
                "AttributeError",
                format!("module '{module}' has no attribute '{name}'"),
            )),
        }
    }

    fn method(&mut self, recv: Value, name: &str, args: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        let n_arg = |default: i64| -> R<usize> {
            match args.first().or_else(|| kwarg(&kw, "n")) {
                None => Ok(default as usize),
                Some(Value::Int(n)) => Ok((*n).max(0) as usize),
                Some(other) => Err(err(
                    "TypeError",
                    format!("'{}' object cannot be interpreted as an integer", other.type_name()),
                )),
            }
        };
        match (&recv, name) {
            (Value::Frame(f), "head") => Ok(Value::Frame(f.head(n_arg(5)?))),
            (Value::Frame(f), "tail") => Ok(Value::Frame(f.tail(n_arg(5)?))),
            (Value::Frame(f), "copy") => Ok(Value::Frame(f.clone())),
            (Value::Frame(_), "plot" | "hist") => {
                self.figure_open = true;
                Ok(Value::None)
            }
            (Value::Str(s), "upper") => Ok(Value::Str(s.to_uppercase())),
            (Value::Str(s), "lower") => Ok(Value::Str(s.to_lowercase())),
            (Value::Str(s), "strip") => Ok(Value::Str(s.trim().to_string())),
            (Value::Str(s), "split") => Ok(Value::List(match args.first() {
                Some(Value::Str(sep)) if !sep.is_empty() => s.split(sep.as_str()).map(|p| Value::Str(p.into())).collect(),
                Some(Value::Str(_)) => return Err(err("ValueError", "empty separator")),
                _ => s.split_whitespace().map(|p| Value::Str(p.into())).collect(),
            })),
            (Value::Str(s), "replace") => match (args.first(), args.get(1)) {
                (Some(Value::Str(a)), Some(Value::Str(b))) => Ok(Value::Str(s.replace(a.as_str(), b))),
                _ => Err(err("TypeError", "replace() takes two string arguments")),
            },
            (Value::Str(s), "startswith") => match args.first() {
                Some(Value::Str(p)) => Ok(Value::Bool(s.starts_with(p.as_str()))),
                _ => Err(err("TypeError", "startswith() takes a string argument")),
            },
            (Value::Dict(d), "keys") => Ok(Value::List(d.iter().map(|(k, _)| k.clone()).collect())),
            (Value::Dict(d), "values") => Ok(Value::List(d.iter().map(|(_, v)| v.clone()).collect())),
            _ => Err(err(
                "AttributeError",
                format!("'{}' object has no attribute '{name}'", recv.type_name()),
            )),
        }
    }
}

fn kwarg<'a>(kw: &'a [(String, Value)], name: &str) -> Option<&'a Value> {
    kw.iter().find(|(k, _)| k == name).map(|(_, v)| v)
}

fn iterate(v: &Value) -> R<Vec<Value>> {
    match v {
        Value::List(i) | Value::Tuple(i) => Ok(i.clone()),
        Value::Str(s) => Ok(s.chars().map(|c| Value::Str(c.to_string())).collect()),
        Value::Dict(d) => Ok(d.iter().map(|(k, _)| k.clone()).collect()),
        Value::Frame(f) => Ok(f.columns.iter().map(|c| Value::Str(c.clone())).collect()),
        other => Err(err(
            "TypeError",
            format!("'{}' object is not iterable", other.type_name()),
        )),
    }
}

fn attribute(o: Value, name: &str) -> R<Value> {
    match (&o, name) {
        (Value::Module(m), _) => Ok(Value::ModuleFn(m.clone(), name.to_string())),
        (Value::Frame(f), "shape") => Ok(Value::Tuple(vec![
            Value::Int(f.rows.len() as i64),
            Value::Int(f.columns.len() as i64),
        ])),
        (Value::Frame(f), "columns") => Ok(Value::List(f.columns.iter().map(|c| Value::Str(c.clone())).collect())),
        (Value::Frame(_), "head" | "tail" | "copy" | "plot" | "hist")
        | (Value::Str(_), "upper" | "lower" | "strip" | "split" | "replace" | "startswith")
        | (Value::Dict(_), "keys" | "values") => Ok(Value::Method(Box::new(o), name.to_string())),
        _ => Err(err(
            "AttributeError",
            format!("'{}' object has no attribute '{name}'", o.type_name()),
        )),
    }
}

fn seq_index(len: usize, i: &Value, what: &str) -> R<usize> {
    let Value::Int(i) = i else {
        return Err(err(
            "TypeError",
            format!("{what} indices must be integers, not {}", i.type_name()),
        ));
    };
    let len = len as i64;
    let j = if *i < 0 { i + len } else { *i };
    if j < 0 || j >= len {
        return Err(err("IndexError", format!("{what} index out of range")));
    }
    Ok(j as usize)
}

fn index(o: &Value, i: &Value) -> R<Value> {
    match o {
        Value::List(v) => Ok(v[seq_index(v.len(), i, "list")?].clone()),
        Value::Tuple(v) => Ok(v[seq_index(v.len(), i, "tuple")?].clone()),
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            Ok(Value::Str(chars[seq_index(chars.len(), i, "string")?].to_string()))
        }
        Value::Dict(d) => d
            .iter()
            .find(|(k, _)| values_eq(k, i))
            .map(|(_, v)| v.clone())
            .ok_or_else(|| err("KeyError", i.py_repr())),
        Value::Frame(f) => match i {
            Value::Str(c) => {
                let ci = f.column_index(c).ok_or_else(|| err("KeyError", super::value::str_repr(c)))?;
                Ok(Value::List(f.rows.iter().map(|r| cell_value(&r[ci])).collect()))
            }
            Value::List(cols) => {
                let mut idx = Vec::with_capacity(cols.len());
                for c in cols {
                    let name = c.py_str();
                    idx.push(
                        f.column_index(&name)
                            .ok_or_else(|| err("KeyError", format!("\"['{name}'] not in index\"")))?,
                    );
                }
                Ok(Value::Frame(Frame {
                    columns: idx.iter().map(|&k| f.columns[k].clone()).collect(),
                    rows: f.rows.iter().map(|r| idx.iter().map(|&k| r[k].clone()).collect()).collect(),
                }))
            }
            other => Err(err("KeyError", other.py_repr())),
        },
        other => Err(err(
            "TypeError",
            format!("'{}' object is not subscriptable", other.type_name()),
        )),
    }
}

fn values_eq(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => match (a, b) {
            (Value::List(x), Value::List(y)) | (Value::Tuple(x), Value::Tuple(y)) => {
                x.len() == y.len() && x.iter().zip(y).all(|(p, q)| values_eq(p, q))
            }
            _ => a == b,
        },
    }
}

fn compare(a: &Value, op: CmpOp, b: &Value) -> R<bool> {
    use std::cmp::Ordering;
    match op {
        CmpOp::Eq => return Ok(values_eq(a, b)),
        CmpOp::Ne => return Ok(!values_eq(a, b)),
        CmpOp::In | CmpOp::NotIn => {
            let found = match b {
                Value::Str(s) => match a {
                    Value::Str(n) => s.contains(n.as_str()),
                    other => {
                        return Err(err(
                            "TypeError",
                            format!("'in <string>' requires string as left operand, not {}", other.type_name()),
                        ))
                    }
                },
                other => iterate(other)?.iter().any(|v| values_eq(v, a)),
            };
            return Ok(found == (op == CmpOp::In));
        }
        _ => {}
    }
    let ord = match (a, b) {
        (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => x.partial_cmp(&y),
            _ => {
                let sym = match op {
                    CmpOp::Lt => "<",
                    CmpOp::Le => "<=",
                    CmpOp::Gt => ">",
                    _ => ">=",
                };
                return Err(err(
                    "TypeError",
                    format!(
                        "'{sym}' not supported between instances of '{}' and '{}'",
                        a.type_name(),
                        b.type_name()
                    ),
                ));
            }
        },
    };
    Ok(match (op, ord) {
        (_, None) => false,
        (CmpOp::Lt, Some(o)) => o == Ordering::Less,
        (CmpOp::Le, Some(o)) => o != Ordering::Greater,
        (CmpOp::Gt, Some(o)) => o == Ordering::Greater,
        (_, Some(o)) => o != Ordering::Less,
    })
}

fn int_of(v: &Value) -> Option<i64> {
    match v {
        Value::Int(i) => Some(*i),
        Value::Bool(b) => Some(i64::from(*b)),
        _ => None,
    }
}

pub fn binop(a: &Value, op: BinOp, b: &Value) -> R<Value> {
    let overflow = || err("OverflowError", "integer result too large for the stub kernel");
    if let (Some(x), Some(y)) = (int_of(a), int_of(b)) {
        return match op {
            BinOp::Add => x.checked_add(y).map(Value::Int).ok_or_else(overflow),
            BinOp::Sub => x.checked_sub(y).map(Value::Int).ok_or_else(overflow),
            BinOp::Mul => x.checked_mul(y).map(Value::Int).ok_or_else(overflow),
            BinOp::Div if y == 0 => Err(err("ZeroDivisionError", "division by zero")),
            BinOp::Div => Ok(Value::Float(x as f64 / y as f64)),
            BinOp::FloorDiv if y == 0 => Err(err("ZeroDivisionError", "integer division or modulo by zero")),
            BinOp::FloorDiv => Ok(Value::Int(x.div_euclid(y) - i64::from(y < 0 && x.rem_euclid(y) != 0))),
            BinOp::Mod if y == 0 => Err(err("ZeroDivisionError", "integer modulo by zero")),
            BinOp::Mod => {
                let r = x.rem_euclid(y);
                Ok(Value::Int(if y < 0 && r != 0 { r + y } else { r }))
            }
            BinOp::Pow if y < 0 => Ok(Value::Float((x as f64).powf(y as f64))),
            BinOp::Pow => u32::try_from(y)
                .ok()
                .and_then(|e| x.checked_pow(e))
                .map(Value::Int)
                .ok_or_else(overflow),
        };
    }
    if let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) {
        return match op {
            BinOp::Add => Ok(Value::Float(x + y)),
            BinOp::Sub => Ok(Value::Float(x - y)),
            BinOp::Mul => Ok(Value::Float(x * y)),
            BinOp::Div if y == 0.0 => Err(err("ZeroDivisionError", "float division by zero")),
            BinOp::Div => Ok(Value::Float(x / y)),
            BinOp::FloorDiv if y == 0.0 => Err(err("ZeroDivisionError", "float floor division by zero")),
            BinOp::FloorDiv => Ok(Value::Float((x / y).floor())),
            BinOp::Mod if y == 0.0 => Err(err("ZeroDivisionError", "float modulo")),
            BinOp::Mod => {
                let r = x % y;
                Ok(Value::Float(if r != 0.0 && (r < 0.0) != (y < 0.0) { r + y } else { r }))
            }
            BinOp::Pow if x == 0.0 && y < 0.0 => Err(err(
                "ZeroDivisionError",
                "0.0 cannot be raised to a negative power",
            )),
            BinOp::Pow => Ok(Value::Float(x.powf(y))),
        };
    }
    match (a, op, b) {
        (Value::Str(x), BinOp::Add, Value::Str(y)) => Ok(Value::Str(format!("{x}{y}"))),
        (Value::List(x), BinOp::Add, Value::List(y)) => Ok(Value::List(x.iter().chain(y).cloned().collect())),
        (Value::Tuple(x), BinOp::Add, Value::Tuple(y)) => Ok(Value::Tuple(x.iter().chain(y).cloned().collect())),
        (Value::Str(s), BinOp::Mul, n) | (n, BinOp::Mul, Value::Str(s)) if int_of(n).is_some() => {
            Ok(Value::Str(s.repeat(int_of(n).unwrap_or(0).max(0) as usize)))
        }
        (Value::List(v), BinOp::Mul, n) | (n, BinOp::Mul, Value::List(v)) if int_of(n).is_some() => {
            let k = int_of(n).unwrap_or(0).max(0) as usize;
            Ok(Value::List(v.iter().cloned().cycle().take(v.len() * k).collect()))
        }
        _ => Err(err(
            "TypeError",
            format!(
                "unsupported operand type(s) for {}: '{}' and '{}'",
                op.symbol(),
                a.type_name(),
                b.type_name()
            ),
        )),
    }
}

fn read_csv(base: &Path, path: &str) -> R<Frame> {
    let full = base.join(path);
    let bytes = std::fs::read(&full).map_err(|_| {
        err(
            "FileNotFoundError",
            format!("[Errno 2] No such file or directory: '{path}'"),
        )
    })?;
    let text = String::from_utf8_lossy(&bytes);
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let columns: Vec<String> = match records.next() {
        Some(Ok(h)) => h.iter().map(str::to_string).collect(),
        Some(Err(e)) => return Err(err("ParserError", e.to_string())),
        None => return Err(err("EmptyDataError", "No columns to parse from file")),
    };
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| err("ParserError", e.to_string()))?;
        let mut row: Vec<String> = rec.iter().take(columns.len()).map(str::to_string).collect();
        row.resize(columns.len(), String::new());
        rows.push(row);
    }
    Ok(Frame { columns, rows })
}

fn frame_from_dict(data: Value) -> R<Frame> {
    let Value::Dict(pairs) = data else {
        return Err(err("TypeError", "DataFrame() expects a dict of lists"));
    };
    let mut columns = Vec::new();
    let mut cols: Vec<Vec<Value>> = Vec::new();
    for (k, v) in pairs {
        columns.push(k.py_str());
        cols.push(match v {
            Value::List(items) | Value::Tuple(items) => items,
            scalar => vec![scalar],
        });
    }
    let n = cols.first().map_or(0, Vec::len);
    if cols.iter().any(|c| c.len() != n) {
        return Err(err("ValueError", "All arrays must be of the same length"));
    }
    let rows = (0..n).map(|i| cols.iter().map(|c| c[i].py_str()).collect()).collect();
    Ok(Frame { columns, rows })
}
