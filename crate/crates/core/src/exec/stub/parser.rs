//! Recursive-descent parser from tokens to statements and expressions.

use super::lexer::Tok;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
}

/// Positional and keyword arguments of a call.
type CallArgs = (Vec<Expr>, Vec<(String, Expr)>);

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Name(String),
    List(Vec<Expr>),
    Tuple(Vec<Expr>),
    Dict(Vec<(Expr, Expr)>),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Bin(Box<Expr>, BinOp, Box<Expr>),
    Cmp(Box<Expr>, CmpOp, Box<Expr>),
    Call(Box<Expr>, Vec<Expr>, Vec<(String, Expr)>),
    Attr(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// `(binding, module)` pairs.
    Import(Vec<(String, String)>),
    Assign(Vec<String>, Expr),
    AugAssign(String, BinOp, Expr),
    Expr(Expr),
    Raise(String, Option<Expr>),
    Plot,
    Del(Vec<String>),
    Pass,
}

const BLOCK_KEYWORDS: &[&str] = &[
    "if", "elif", "else", "for", "while", "def", "class", "with", "try", "except", "finally", "lambda", "return",
    "yield", "global", "async", "await",
];

pub fn parse_statement(toks: &[Tok]) -> Result<Stmt, String> {
    let mut p = Parser { toks, pos: 0 };
    let stmt = p.statement()?;
    if p.pos != toks.len() {
        return Err(format!("unexpected token {:?}", toks[p.pos]));
    }
    Ok(stmt)
}

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_op(&self, op: &str) -> bool {
        matches!(self.peek(), Some(Tok::Op(o)) if *o == op)
    }

    fn peek_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == word)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.peek_op(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_ident(&mut self, word: &str) -> bool {
        if self.peek_ident(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), String> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(format!("expected {op:?}"))
        }
    }

    fn ident(&mut self) -> Result<String, String> {
        match self.peek() {
            Some(Tok::Ident(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            other => Err(format!("expected a name, found {other:?}")),
        }
    }

    fn dotted(&mut self) -> Result<String, String> {
        let mut name = self.ident()?;
        while self.eat_op(".") {
            name.push('.');
            name.push_str(&self.ident()?);
        }
        Ok(name)
    }

    fn statement(&mut self) -> Result<Stmt, String> {
        if let Some(Tok::Ident(w)) = self.peek() {
            if BLOCK_KEYWORDS.contains(&w.as_str()) {
                return Err(format!("`{w}` statements are not supported"));
            }
        }
        if self.eat_ident("import") {
            let mut out = Vec::new();
            loop {
                let module = self.dotted()?;
                if self.eat_ident("as") {
                    out.push((self.ident()?, module));
                } else {
                    let top = module.split('.').next().unwrap_or_default().to_string();
                    out.push((top.clone(), top));
                }
                if !self.eat_op(",") {
                    break;
                }
            }
            return Ok(Stmt::Import(out));
        }
        if self.eat_ident("from") {
            let module = self.dotted()?;
            if !self.eat_ident("import") {
                return Err("expected `import`".into());
            }
            let mut out = Vec::new();
            loop {
                let name = self.ident()?;
                let bind = if self.eat_ident("as") { self.ident()? } else { name.clone() };
                out.push((bind, format!("{module}.{name}")));
                if !self.eat_op(",") {
                    break;
                }
            }
            return Ok(Stmt::Import(out));
        }
        if self.eat_ident("PLOT") {
            return Ok(Stmt::Plot);
        }
        if self.eat_ident("pass") {
            return Ok(Stmt::Pass);
        }
        if self.eat_ident("RAISE") {
            return Ok(Stmt::Raise(self.ident()?, None));
        }
        if self.eat_ident("raise") {
            let ty = self.ident()?;
            let msg = if self.eat_op("(") {
                let m = if self.peek_op(")") { None } else { Some(self.expr()?) };
                self.expect_op(")")?;
                m
            } else {
                None
            };
            return Ok(Stmt::Raise(ty, msg));
        }
        if self.eat_ident("del") {
            let mut names = vec![self.ident()?];
            while self.eat_op(",") {
                names.push(self.ident()?);
            }
            return Ok(Stmt::Del(names));
        }

        // name [, name]* = expr
        let save = self.pos;
        let mut targets = Vec::new();
        while let Some(Tok::Ident(w)) = self.peek() {
            targets.push(w.clone());
            self.pos += 1;
            if !self.eat_op(",") {
                break;
            }
        }
        if !targets.is_empty() {
            if self.eat_op("=") {
                let value = self.expr_list()?;
                return Ok(Stmt::Assign(targets, value));
            }
            if targets.len() == 1 {
                for (op, bin) in [
                    ("+=", BinOp::Add),
                    ("-=", BinOp::Sub),
                    ("*=", BinOp::Mul),
                    ("/=", BinOp::Div),
                    ("//=", BinOp::FloorDiv),
                    ("**=", BinOp::Pow),
                ] {
                    if self.eat_op(op) {
                        let value = self.expr()?;
                        return Ok(Stmt::AugAssign(targets.remove(0), bin, value));
                    }
                }
            }
        }
        self.pos = save;
        let e = self.expr_list()?;
        if self.peek_op("=") {
            return Err("only simple names can be assigned".into());
        }
        Ok(Stmt::Expr(e))
    }

    /// Expression, or a bare tuple of expressions separated by commas.
    fn expr_list(&mut self) -> Result<Expr, String> {
        let first = self.expr()?;
        if !self.peek_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.peek().is_none() {
                break;
            }
            items.push(self.expr()?);
        }
        Ok(Expr::Tuple(items))
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut left = self.and_expr()?;
        while self.eat_ident("or") {
            let right = self.and_expr()?;
            left = Expr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, String> {
        let mut left = self.not_expr()?;
        while self.eat_ident("and") {
            let right = self.not_expr()?;
            left = Expr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, String> {
        if self.eat_ident("not") {
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, String> {
        let left = self.additive()?;
        let op = if self.eat_op("==") {
            CmpOp::Eq
        } else if self.eat_op("!=") {
            CmpOp::Ne
        } else if self.eat_op("<=") {
            CmpOp::Le
        } else if self.eat_op(">=") {
            CmpOp::Ge
        } else if self.eat_op("<") {
            CmpOp::Lt
        } else if self.eat_op(">") {
            CmpOp::Gt
        } else if self.eat_ident("in") {
            CmpOp::In
        } else if self.peek_ident("not") && matches!(self.toks.get(self.pos + 1), Some(Tok::Ident(w)) if w == "in") {
            self.pos += 2;
            CmpOp::NotIn
        } else {
            return Ok(left);
        };
        let right = self.additive()?;
        Ok(Expr::Cmp(Box::new(left), op, Box::new(right)))
    }

    fn additive(&mut self) -> Result<Expr, String> {
        let mut left = self.term()?;
        loop {
            let op = if self.eat_op("+") {
                BinOp::Add
            } else if self.eat_op("-") {
                BinOp::Sub
            } else {
                return Ok(left);
            };
            let right = self.term()?;
            left = Expr::Bin(Box::new(left), op, Box::new(right));
        }
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut left = self.unary()?;
        loop {
            let op = if self.eat_op("*") {
                BinOp::Mul
            } else if self.eat_op("//") {
                BinOp::FloorDiv
            } else if self.eat_op("/") {
                BinOp::Div
            } else if self.eat_op("%") {
                BinOp::Mod
            } else {
                return Ok(left);
            };
            let right = self.unary()?;
            left = Expr::Bin(Box::new(left), op, Box::new(right));
        }
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if self.eat_op("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op("+") {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, String> {
        let base = self.postfix()?;
        if self.eat_op("**") {
            let exp = self.unary()?;
            return Ok(Expr::Bin(Box::new(base), BinOp::Pow, Box::new(exp)));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr, String> {
        let mut e = self.atom()?;
        loop {
            if self.eat_op("(") {
                let (args, kwargs) = self.call_args()?;
                e = Expr::Call(Box::new(e), args, kwargs);
            } else if self.eat_op("[") {
                let idx = self.expr_list()?;
                self.expect_op("]")?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else if self.eat_op(".") {
                let name = self.ident()?;
                e = Expr::Attr(Box::new(e), name);
            } else {
                return Ok(e);
            }
        }
    }

    fn call_args(&mut self) -> Result<CallArgs, String> {
        let mut args = Vec::new();
        let mut kwargs = Vec::new();
        while !self.peek_op(")") {
            if let (Some(Tok::Ident(name)), Some(Tok::Op("="))) = (self.peek(), self.toks.get(self.pos + 1)) {
                let name = name.clone();
                self.pos += 2;
                kwargs.push((name, self.expr()?));
            } else {
                if !kwargs.is_empty() {
                    return Err("positional argument follows keyword argument".into());
                }
                args.push(self.expr()?);
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok((args, kwargs))
    }

    fn atom(&mut self) -> Result<Expr, String> {
        let tok = self.peek().cloned().ok_or("unexpected end of statement")?;
        self.pos += 1;
        match tok {
            Tok::Num(n) => {
                if n.contains(['.', 'e', 'E']) {
                    n.parse().map(Expr::Float).map_err(|_| format!("invalid number {n}"))
                } else {
                    n.parse().map(Expr::Int).map_err(|_| format!("integer {n} is too large"))
                }
            }
            Tok::Str(s) => {
                let mut s = s;
                while let Some(Tok::Str(more)) = self.peek() {
                    s.push_str(more);
                    self.pos += 1;
                }
                Ok(Expr::Str(s))
            }
            Tok::Ident(w) => Ok(match w.as_str() {
                "True" => Expr::Bool(true),
                "False" => Expr::Bool(false),
                "None" => Expr::None,
                _ => Expr::Name(w),
            }),
            Tok::Op("(") => {
                if self.eat_op(")") {
                    return Ok(Expr::Tuple(Vec::new()));
                }
                let first = self.expr()?;
                if self.eat_op(")") {
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.peek_op(")") {
                        break;
                    }
                    items.push(self.expr()?);
                }
                self.expect_op(")")?;
                Ok(Expr::Tuple(items))
            }
            Tok::Op("[") => {
                let mut items = Vec::new();
                while !self.peek_op("]") {
                    items.push(self.expr()?);
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op("]")?;
                Ok(Expr::List(items))
            }
            Tok::Op("{") => {
                let mut items = Vec::new();
                while !self.peek_op("}") {
                    let k = self.expr()?;
                    self.expect_op(":")?;
                    let v = self.expr()?;
                    items.push((k, v));
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op("}")?;
                Ok(Expr::Dict(items))
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }
}
