//! In-process stub kernel.
//!
//! Runs a small deterministic subset of Python: imports, assignments,
//! arithmetic, strings, lists, dicts, `print`, a handful of builtins, and
//! `pd.read_csv`/`pd.DataFrame` backed by string-celled frames. Two
//! directives exist for tests: `PLOT` emits a fixed 1x1 PNG and
//! `RAISE <Type>` raises an error of that type. Any `plt.*` call or
//! `DataFrame.plot` also yields one image per execution.

mod interp;
mod lexer;
mod parser;
mod value;

use std::path::PathBuf;
use std::time::Instant;

use base64::Engine as _;

use super::protocol::{codes, filter_page, ExecError, ExecutionResult, Request, Response, Status, VarPage, VariableSnapshot};
pub use value::{float_repr, Frame, Value};

/// A valid 1x1 PNG.
pub const PNG_1X1: &[u8] = &[
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00, 0x00, 0x00,
    0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x06, 0x00, 0x00, 0x00, 0x1f, 0x15, 0xc4, 0x89, 0x00, 0x00, 0x00, 0x0d, 0x49,
    0x44, 0x41, 0x54, 0x78, 0xda, 0x63, 0x64, 0x60, 0xf8, 0x5f, 0x0f, 0x00, 0x02, 0x87, 0x01, 0x80, 0xeb, 0x47, 0xba,
    0x92, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82,
];

#[derive(Debug)]
pub struct StubKernel {
    interp: interp::Interp,
    cell: u64,
}

impl StubKernel {
    /// `base_dir` resolves relative paths given to `read_csv`.
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self {
            interp: interp::Interp::new(base_dir),
            cell: 0,
        }
    }

    pub fn execute(&mut self, code: &str) -> ExecutionResult {
        let started = Instant::now();
        self.cell += 1;
        self.interp.stdout.clear();
        self.interp.figure_open = false;
        self.interp.plots = 0;
        let error = self.run(code).err();
        let mut images = Vec::new();
        let n_images = self.interp.plots + usize::from(self.interp.figure_open);
        for _ in 0..n_images {
            images.push(base64::engine::general_purpose::STANDARD.encode(PNG_1X1));
        }
        ExecutionResult {
            status: if error.is_some() { Status::Error } else { Status::Ok },
            stdout: std::mem::take(&mut self.interp.stdout),
            error,
            images,
            variables: self.variables(),
            duration_ms: started.elapsed().as_millis() as u64,
        }
    }

    fn run(&mut self, code: &str) -> Result<(), ExecError> {
        let cell = self.cell;
        let source_lines: Vec<&str> = code.lines().collect();
        let fail = |line: usize, t: &str, msg: String| {
            let src = source_lines.get(line.saturating_sub(1)).map_or("", |s| s.trim());
            ExecError {
                error_type: t.to_string(),
                traceback: format!(
                    "Traceback (most recent call last):\n  Cell In[{cell}], line {line}\n    {src}\n{t}: {msg}"
                ),
                message: msg,
            }
        };
        let stmts = lexer::split_statements(code).map_err(|(line, m)| fail(line, "SyntaxError", m))?;
        for st in stmts {
            if st.indented {
                return Err(fail(st.line, "IndentationError", "unexpected indent".into()));
            }
            let toks = lexer::lex(&st.text).map_err(|m| fail(st.line, "SyntaxError", m))?;
            let stmt = parser::parse_statement(&toks).map_err(|m| fail(st.line, "SyntaxError", m))?;
            self.interp
                .exec(&stmt)
                .map_err(|e| fail(st.line, &e.error_type, e.message))?;
        }
        Ok(())
    }

    /// Snapshots of user bindings in creation order.
    pub fn variables(&self) -> Vec<VariableSnapshot> {
        self.interp
            .bindings
            .iter()
            .filter(|(n, _)| !n.starts_with('_'))
            .filter_map(|(n, v)| v.snapshot(n))
            .collect()
    }

    pub fn value(&self, name: &str) -> Option<&Value> {
        self.interp.get(name)
    }

    pub fn reset(&mut self) {
        self.interp.bindings.clear();
        self.cell = 0;
    }

    pub fn fetch(&self, name: &str, filter: Option<&str>, page: u64, page_size: u64) -> Result<VarPage, (&'static str, String)> {
        let visible = !name.starts_with('_');
        match self.interp.get(name).filter(|_| visible) {
            None | Some(Value::Module(_)) => Err((codes::UNKNOWN_VARIABLE, format!("no variable named {name:?}"))),
            Some(Value::Frame(f)) => {
                let (rows, total) = filter_page(&f.rows, filter, page, page_size);
                Ok(VarPage {
                    name: name.to_string(),
                    columns: f.columns.clone(),
                    rows,
                    total_matches: total,
                    page,
                    page_size,
                })
            }
            Some(v) => Err((codes::NOT_TABULAR, format!("{name} is a {}, not a dataframe", v.type_name()))),
        }
    }

    /// Handles one protocol request.
    pub fn handle(&mut self, req: Request) -> Response {
        match req {
            Request::Execute { id, code } => Response::Result {
                id,
                result: self.execute(&code),
            },
            Request::FetchVar {
                id,
                name,
                filter,
                page,
                page_size,
            } => match self.fetch(&name, filter.as_deref(), page, page_size) {
                Ok(page) => Response::VarPage { id, page },
                Err((code, message)) => Response::Error {
                    id: Some(id),
                    code: code.into(),
                    message,
                },
            },
            Request::ListVars { id } => Response::Vars {
                id,
                variables: self.variables(),
            },
            Request::Ping => Response::Pong,
            Request::Interrupt { id } => Response::Ack { id },
            Request::Reset { id } => {
                self.reset();
                Response::Ack { id }
            }
        }
    }

    /// Serves the protocol over a line-oriented reader and writer until EOF.
    pub fn serve(&mut self, input: impl std::io::BufRead, mut output: impl std::io::Write) -> std::io::Result<()> {
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let resp = match serde_json::from_str::<Request>(&line) {
                Ok(req) => self.handle(req),
                Err(e) => Response::Error {
                    id: serde_json::from_str::<serde_json::Value>(&line)
                        .ok()
                        .and_then(|v| v.get("id").and_then(serde_json::Value::as_u64)),
                    code: codes::MALFORMED.into(),
                    message: e.to_string(),
                },
            };
            serde_json::to_writer(&mut output, &resp)?;
            output.write_all(b"\n")?;
            output.flush()?;
        }
        Ok(())
    }
}
