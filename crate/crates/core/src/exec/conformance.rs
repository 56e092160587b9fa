//! Black-box protocol checks any kernel backend must pass.
//!
//! Every check uses code that is valid Python, so the same suite runs
//! against the in-process stub and against a real sidecar.

use std::time::Duration;

use super::kernel::{Backend, KernelError};
use super::protocol::{codes, Preview, Request, Response, Status, VarKind, PREVIEW_ROWS};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(&mut dyn Backend, Duration) -> Result<(), String>;

const CHECKS: &[(&str, Check)] = &[
    ("ping", check_ping),
    ("execute_scalar", check_scalar),
    ("stdout_capture", check_stdout),
    ("error_containment", check_error),
    ("variable_listing", check_listing),
    ("variable_overwrite", check_overwrite),
    ("dataframe_snapshot", check_dataframe),
    ("fetch_var_paging", check_paging),
    ("fetch_var_errors", check_fetch_errors),
    ("plot_capture", check_plot),
    ("reset", check_reset),
    ("interrupt_idle", check_interrupt),
    ("malformed_message", check_malformed),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check, each on a fresh backend from `factory`.
pub fn run(
    factory: &mut dyn FnMut() -> Result<Box<dyn Backend>, KernelError>,
    timeout: Duration,
) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, check)| {
            let outcome = factory()
                .map_err(|e| format!("backend failed to start: {e}"))
                .and_then(|mut b| check(b.as_mut(), timeout));
            CheckResult {
                name,
                passed: outcome.is_ok(),
                detail: outcome.err().unwrap_or_default(),
            }
        })
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn send(b: &mut dyn Backend, req: Request, t: Duration) -> Result<Response, String> {
    b.request(&req, t).map_err(|e| e.to_string())
}

fn exec(b: &mut dyn Backend, id: u64, code: &str, t: Duration) -> Result<super::protocol::ExecutionResult, String> {
    match send(b, Request::Execute { id, code: code.into() }, t)? {
        Response::Result { id: got, result } => {
            ensure(got == id, || format!("id {got} echoed for request {id}"))?;
            Ok(result)
        }
        other => Err(format!("expected result, got {other:?}")),
    }
}

fn exec_ok(b: &mut dyn Backend, id: u64, code: &str, t: Duration) -> Result<super::protocol::ExecutionResult, String> {
    let r = exec(b, id, code, t)?;
    ensure(r.is_ok(), || format!("{code:?} failed: {:?}", r.error))?;
    Ok(r)
}

fn check_ping(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    match send(b, Request::Ping, t)? {
        Response::Pong => Ok(()),
        other => Err(format!("expected pong, got {other:?}")),
    }
}

fn check_scalar(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    let r = exec_ok(b, 7, "x = 1 + 1", t)?;
    let x = r.variable("x").ok_or("x missing from snapshot")?;
    ensure(x.kind == VarKind::Scalar, || format!("x kind {:?}", x.kind))?;
    ensure(x.preview_text() == Some("2"), || format!("x preview {:?}", x.preview))?;
    ensure(r.error.is_none(), || "error set on success".into())
}

fn check_stdout(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    let r = exec_ok(b, 1, "print('hello')\nprint(1, 2)", t)?;
    ensure(r.stdout == "hello\n1 2\n", || format!("stdout {:?}", r.stdout))
}

fn check_error(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    let r = exec(b, 1, "y = 1\nz = y / 0", t)?;
    ensure(r.status == Status::Error, || "expected error status".into())?;
    let e = r.error.as_ref().ok_or("error missing")?;
    ensure(e.error_type == "ZeroDivisionError", || format!("error type {}", e.error_type))?;
    ensure(!e.traceback.is_empty(), || "empty traceback".into())?;
    ensure(r.variable("y").is_some(), || "state before the error was lost".into())?;
    let r = exec_ok(b, 2, "w = y + 1", t)?;
    ensure(r.variable("w").and_then(|v| v.preview_text()) == Some("2"), || {
        "kernel unusable after error".into()
    })
}

fn check_listing(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    match send(b, Request::ListVars { id: 1 }, t)? {
        Response::Vars { variables, .. } => ensure(variables.is_empty(), || format!("fresh kernel has {variables:?}"))?,
        other => return Err(format!("expected vars, got {other:?}")),
    }
    exec_ok(b, 2, "import math\n_hidden = 1\nb = 2\na = 'text'", t)?;
    match send(b, Request::ListVars { id: 3 }, t)? {
        Response::Vars { id, variables } => {
            ensure(id == 3, || "id not echoed".into())?;
            let mut names: Vec<_> = variables.iter().map(|v| v.name.as_str()).collect();
            names.sort();
            ensure(names == ["a", "b"], || format!("listed {names:?}"))
        }
        other => Err(format!("expected vars, got {other:?}")),
    }
}

fn check_overwrite(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    exec_ok(b, 1, "v = 1", t)?;
    let r = exec_ok(b, 2, "v = [1, 2]", t)?;
    let hits: Vec<_> = r.variables.iter().filter(|s| s.name == "v").collect();
    ensure(hits.len() == 1, || format!("{} snapshots of v", hits.len()))?;
    ensure(hits[0].kind == VarKind::Sequence, || format!("v kind {:?}", hits[0].kind))
}

fn check_dataframe(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    let r = exec_ok(
        b,
        1,
        "import pandas as pd\nframe = pd.DataFrame({'v': list(range(25)), 'w': list(range(25))})",
        t,
    )?;
    let f = r.variable("frame").ok_or("frame missing")?;
    ensure(f.kind == VarKind::Dataframe, || format!("kind {:?}", f.kind))?;
    ensure(f.shape == Some((25, 2)), || format!("shape {:?}", f.shape))?;
    match &f.preview {
        Preview::Table { columns, rows } => {
            ensure(columns == &["v", "w"], || format!("columns {columns:?}"))?;
            ensure(rows.len() == PREVIEW_ROWS, || format!("{} preview rows", rows.len()))?;
            ensure(rows[3] == ["3", "3"], || format!("row 3 {:?}", rows[3]))
        }
        other => Err(format!("preview {other:?}")),
    }
}

fn check_paging(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    exec_ok(
        b,
        1,
        "import pandas as pd\ndf = pd.DataFrame({'country': ['US', 'DE', 'us-east', 'FR', 'USA'], 'n': [1, 2, 3, 4, 5]})",
        t,
    )?;
    let mut fetch = |id, filter: Option<&str>, page, size| -> Result<(Vec<Vec<String>>, u64), String> {
        let req = Request::FetchVar {
            id,
            name: "df".into(),
            filter: filter.map(str::to_string),
            page,
            page_size: size,
        };
        match send(b, req, t)? {
            Response::VarPage { id: got, page: p } => {
                ensure(got == id, || "id not echoed".into())?;
                ensure(p.columns == ["country", "n"], || format!("columns {:?}", p.columns))?;
                Ok((p.rows, p.total_matches))
            }
            other => Err(format!("expected var_page, got {other:?}")),
        }
    };
    let (rows, total) = fetch(2, Some("us"), 0, 2)?;
    ensure(total == 3 && rows.len() == 2, || format!("page 0: {rows:?} of {total}"))?;
    ensure(rows[0][0] == "US" && rows[1][0] == "us-east", || format!("page 0 rows {rows:?}"))?;
    let (rows, total) = fetch(3, Some("us"), 1, 2)?;
    ensure(total == 3 && rows == [["USA", "5"]], || format!("page 1: {rows:?}"))?;
    let (rows, total) = fetch(4, Some("us"), 5, 2)?;
    ensure(total == 3 && rows.is_empty(), || format!("page 5: {rows:?}"))?;
    let (rows, total) = fetch(5, None, 0, 100)?;
    ensure(total == 5 && rows.len() == 5, || format!("unfiltered: {total}"))
}

fn check_fetch_errors(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    exec_ok(b, 1, "s = 3", t)?;
    let mut expect = |id, name: &str, code: &str| -> Result<(), String> {
        let req = Request::FetchVar {
            id,
            name: name.into(),
            filter: None,
            page: 0,
            page_size: 10,
        };
        match send(b, req, t)? {
            Response::Error { id: got, code: c, .. } => {
                ensure(got == Some(id), || "id not echoed".into())?;
                ensure(c == code, || format!("code {c}, wanted {code}"))
            }
            other => Err(format!("expected error, got {other:?}")),
        }
    };
    expect(2, "s", codes::NOT_TABULAR)?;
    expect(3, "missing_name", codes::UNKNOWN_VARIABLE)
}

fn check_plot(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    let r = exec_ok(b, 1, "import matplotlib.pyplot as plt\nplt.plot([1, 2, 3])", t)?;
    ensure(!r.images.is_empty(), || "no image captured".into())?;
    use base64::Engine;
    for img in &r.images {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(img)
            .map_err(|e| format!("image is not base64: {e}"))?;
        ensure(bytes.starts_with(PNG_MAGIC), || "image is not a PNG".into())?;
    }
    let r = exec_ok(b, 2, "q = 1", t)?;
    ensure(r.images.is_empty(), || "figure leaked into the next execution".into())
}

fn check_reset(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    exec_ok(b, 1, "k = 1", t)?;
    for id in [2, 3] {
        match send(b, Request::Reset { id }, t)? {
            Response::Ack { id: got } => ensure(got == id, || "id not echoed".into())?,
            other => return Err(format!("expected ack, got {other:?}")),
        }
    }
    match send(b, Request::ListVars { id: 4 }, t)? {
        Response::Vars { variables, .. } => ensure(variables.is_empty(), || format!("after reset {variables:?}")),
        other => Err(format!("expected vars, got {other:?}")),
    }
}

fn check_interrupt(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    match send(b, Request::Interrupt { id: 9 }, t)? {
        Response::Ack { id } => ensure(id == 9, || "id not echoed".into())?,
        other => return Err(format!("expected ack, got {other:?}")),
    }
    exec_ok(b, 10, "after = 1", t).map(|_| ())
}

fn check_malformed(b: &mut dyn Backend, t: Duration) -> Result<(), String> {
    for line in ["this is not json", r#"{"op":"launch","id":4}"#] {
        match b.request_raw(line, t).map_err(|e| e.to_string())? {
            Response::Error { code, .. } => ensure(code == codes::MALFORMED, || format!("code {code}"))?,
            other => return Err(format!("expected error, got {other:?}")),
        }
    }
    check_ping(b, t)
}
