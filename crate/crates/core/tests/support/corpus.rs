//! Seeded generator for the parser corpus in `fixtures/parser`.
//!
//! Valid responses carry the noise real models add (bullets, blank lines,
//! CRLF, prose around fences, header variants). Each malformed response
//! carries one targeted defect.

use std::path::{Path, PathBuf};

use decomp_core::llm::BlockKind;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEED: u64 = 0x5eed_2024;
pub const VALID: usize = 150;
pub const MALFORMED: usize = 50;

const WORDS: &[&str] = &[
    "rating", "brand", "values", "contain", "text", "suffixes", "drop", "rows", "keep", "numeric", "convert", "split",
    "commas", "lowercase", "group", "by", "mean", "salary", "filter", "remote", "sort", "descending", "top", "five",
    "missing", "fill", "zero", "outliers", "rank", "votes", "sum", "points", "per", "game",
];
const COLUMNS: &[&str] = &[
    "Rating", "Brand", "Themes", "Tags", "votes", "genres", "Country Code", "Remote Ratio", "budget", "Revenue",
    "Points", "a - b", "job_title",
];
const KINDS: [BlockKind; 6] = [
    BlockKind::AssumptionList,
    BlockKind::ColumnAssumptions,
    BlockKind::PlanSteps,
    BlockKind::CodeBlock,
    BlockKind::AnswerText,
    BlockKind::CompletionSignal,
];

pub struct Case {
    pub name: String,
    pub kind: BlockKind,
    pub text: String,
}

pub fn dir() -> PathBuf {
    super::fixtures_dir().join("parser")
}

fn phrase(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..7);
    let mut words: Vec<String> = (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
    if rng.random_bool(0.5) {
        let at = rng.random_range(0..words.len());
        words[at] = format!("`{}`", COLUMNS.choose(rng).unwrap());
    }
    words.join(" ")
}

fn item(rng: &mut ChaCha8Rng) -> String {
    let bullet = ["", "", "- ", "* ", "  "].choose(rng).unwrap();
    format!("{bullet}{} - {}", phrase(rng), phrase(rng))
}

fn join(rng: &mut ChaCha8Rng, lines: Vec<String>) -> String {
    let mut out = Vec::new();
    for l in lines {
        out.push(l);
        if rng.random_bool(0.15) {
            out.push(String::new());
        }
    }
    let sep = if rng.random_bool(0.2) { "\r\n" } else { "\n" };
    out.join(sep)
}

fn valid(rng: &mut ChaCha8Rng, kind: BlockKind) -> String {
    match kind {
        BlockKind::AssumptionList => {
            let mut lines = Vec::new();
            if rng.random_bool(0.5) {
                lines.push(format!("Objective: {}", phrase(rng)));
            }
            lines.extend((0..rng.random_range(1..6)).map(|_| item(rng)));
            join(rng, lines)
        }
        BlockKind::ColumnAssumptions => {
            let mut lines = Vec::new();
            let mut cols: Vec<&str> = COLUMNS.to_vec();
            for _ in 0..rng.random_range(1..4) {
                let c = cols.remove(rng.random_range(0..cols.len()));
                let header = ["### Column: `{}`", "## column: `{}`", "### Column: {}"].choose(rng).unwrap();
                lines.push(header.replace("{}", c));
                lines.extend((0..rng.random_range(0..4)).map(|_| item(rng)));
            }
            if rng.random_bool(0.7) {
                lines.push(["### Output", "### Output assumptions", "## output"].choose(rng).unwrap().to_string());
                lines.extend((0..rng.random_range(1..3)).map(|_| item(rng)));
            }
            join(rng, lines)
        }
        BlockKind::PlanSteps => {
            let lines = (1..=rng.random_range(1..8))
                .map(|i| {
                    let opt = if rng.random_bool(0.25) { "[optional] " } else { "" };
                    format!("{i}. {opt}{}", phrase(rng))
                })
                .collect();
            join(rng, lines)
        }
        BlockKind::CodeBlock => {
            let tag = ["python", "py", ""].choose(rng).unwrap();
            let body: Vec<String> = (0..rng.random_range(0..6))
                .map(|i| match rng.random_range(0..4) {
                    0 => format!("x{i} = df['{}']", COLUMNS.choose(rng).unwrap()),
                    1 => String::new(),
                    2 => format!("    print(x{i})"),
                    _ => format!("# {}", phrase(rng)),
                })
                .collect();
            let mut text = format!("```{tag}\n{}\n```", body.join("\n"));
            if body.is_empty() {
                text = format!("```{tag}\n```");
            }
            if rng.random_bool(0.3) {
                text = format!("Here is the code:\n{text}");
            }
            if rng.random_bool(0.2) {
                text.push_str("\nIt prints the result.");
            }
            text
        }
        BlockKind::AnswerText => {
            let n = rng.random_range(1..4);
            let lines: Vec<String> = (0..n).map(|_| phrase(rng)).collect();
            format!("{}{}", if rng.random_bool(0.3) { "\n  " } else { "" }, lines.join("\n"))
        }
        BlockKind::CompletionSignal => {
            let pre = ["", "\n", "  \n"].choose(rng).unwrap();
            let post = ["", "\n", "\nThe question is answered."].choose(rng).unwrap();
            format!("{pre}TASK COMPLETE{post}")
        }
    }
}

/// One targeted defect per malformed case; the kind cycles so every
/// parser sees malformed input.
fn malformed(rng: &mut ChaCha8Rng, i: usize) -> (BlockKind, String) {
    match i % 10 {
        0 => (BlockKind::AssumptionList, format!("{} {}", phrase(rng), phrase(rng))),
        1 => (BlockKind::AssumptionList, format!("Objective: {}\n{} - ", phrase(rng), phrase(rng))),
        2 => (BlockKind::AssumptionList, format!("- - {} - {}", phrase(rng), phrase(rng))),
        3 => (BlockKind::ColumnAssumptions, format!("{}\n### Column: `Rating`", item(rng))),
        4 => (BlockKind::ColumnAssumptions, format!("### Column: `Tags`\n{}\n### Columns\n{}", item(rng), item(rng))),
        5 => (BlockKind::PlanSteps, format!("1. {}\n3. {}", phrase(rng), phrase(rng))),
        6 => (BlockKind::PlanSteps, format!("{}\n{}", phrase(rng), phrase(rng))),
        7 => (BlockKind::CodeBlock, format!("```python\nx = df['{}']\nprint(x)", COLUMNS.choose(rng).unwrap())),
        8 => (BlockKind::CodeBlock, format!("x = 1\nprint({})", rng.random_range(0..100))),
        _ => {
            let kind = *[BlockKind::CompletionSignal, BlockKind::AnswerText].choose(rng).unwrap();
            let text = if kind == BlockKind::AnswerText { " \n\t\n".to_string() } else { phrase(rng) };
            (kind, text)
        }
    }
}

pub fn generate() -> (Vec<Case>, Vec<Case>) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let valid_cases = (0..VALID)
        .map(|i| {
            let kind = KINDS[i % KINDS.len()];
            Case {
                name: format!("{i:03}-{kind}"),
                kind,
                text: valid(&mut rng, kind),
            }
        })
        .collect();
    let bad = (0..MALFORMED)
        .map(|i| {
            let (kind, text) = malformed(&mut rng, i);
            Case {
                name: format!("{i:03}-{kind}"),
                kind,
                text,
            }
        })
        .collect();
    (valid_cases, bad)
}

fn kind_from_name(name: &str) -> BlockKind {
    let k = name.split_once('-').map(|(_, k)| k.trim_end_matches(".txt")).unwrap_or("");
    *KINDS.iter().find(|b| b.as_str() == k).unwrap_or_else(|| panic!("bad corpus file name {name}"))
}

fn read_dir(dir: &Path) -> Vec<Case> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".txt"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| Case {
            kind: kind_from_name(&n),
            text: std::fs::read_to_string(dir.join(&n)).unwrap(),
            name: n.trim_end_matches(".txt").to_string(),
        })
        .collect()
}

/// The committed corpus: `(valid, malformed)`.
pub fn load() -> (Vec<Case>, Vec<Case>) {
    (read_dir(&dir().join("valid")), read_dir(&dir().join("malformed")))
}

pub fn write() -> std::io::Result<()> {
    let (good, bad) = generate();
    for (sub, cases) in [("valid", good), ("malformed", bad)] {
        let d = dir().join(sub);
        if d.exists() {
            std::fs::remove_dir_all(&d)?;
        }
        std::fs::create_dir_all(&d)?;
        for c in cases {
            std::fs::write(d.join(format!("{}.txt", c.name)), c.text)?;
        }
    }
    Ok(())
}
