use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ParsedQuestion, Token, TreeError};

/// A sentence block that could not be turned into a tree.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("sentence starting at line {line}{}: {kind}", qid.as_ref().map(|q| format!(" (qid {q})")).unwrap_or_default())]
pub struct ConlluBlockError {
    pub line: usize,
    pub qid: Option<String>,
    pub kind: ConlluErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConlluErrorKind {
    #[error("line {line}: {message}")]
    Field { line: usize, message: String },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, thiserror::Error)]
pub enum ConlluError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Block(#[from] ConlluBlockError),
}

struct Block {
    start: usize,
    qid: Option<String>,
    text: Option<String>,
    lines: Vec<(usize, String)>,
}

fn blocks(src: &str) -> Vec<Block> {
    let mut out = Vec::new();
    let mut cur: Option<Block> = None;
    for (i, raw) in src.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(b) = cur.take() {
                out.push(b);
            }
            continue;
        }
        let b = cur.get_or_insert_with(|| Block {
            start: lineno,
            qid: None,
            text: None,
            lines: Vec::new(),
        });
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                let value = value.trim().to_string();
                match key.trim() {
                    "qid" => b.qid = Some(value),
                    "sent_id" if b.qid.is_none() => b.qid = Some(value),
                    "text" => b.text = Some(value),
                    _ => {}
                }
            }
        } else {
            b.lines.push((lineno, line.to_string()));
        }
    }
    out.extend(cur);
    out
}

fn token_line(lineno: usize, line: &str) -> Result<Option<Token>, ConlluErrorKind> {
    let field_err = |message: String| ConlluErrorKind::Field { line: lineno, message };
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(field_err(format!("expected 10 tab-separated columns, found {}", cols.len())));
    }
    let id = cols[0];
    if id.contains('-') || id.contains('.') {
        return Ok(None);
    }
    let index: usize = id
        .parse()
        .map_err(|_| field_err(format!("ID {id:?} is not an integer")))?;
    let head: usize = cols[6]
        .parse()
        .map_err(|_| field_err(format!("HEAD {:?} is not an integer", cols[6])))?;
    let pos = if cols[4] != "_" { cols[4] } else { cols[3] };
    Ok(Some(Token::new(index, cols[1], pos, cols[7], head)))
}

fn parse_block(b: Block) -> Result<ParsedQuestion, ConlluBlockError> {
    let wrap = |kind: ConlluErrorKind| ConlluBlockError {
        line: b.start,
        qid: b.qid.clone(),
        kind,
    };
    let mut tokens = Vec::with_capacity(b.lines.len());
    for (lineno, line) in &b.lines {
        if let Some(t) = token_line(*lineno, line).map_err(wrap)? {
            tokens.push(t);
        }
    }
    ParsedQuestion::new(b.qid.clone(), b.text.clone(), tokens).map_err(|e| wrap(e.into()))
}

/// One result per sentence block, in file order.
pub fn parse_conllu(src: &str) -> Vec<Result<ParsedQuestion, ConlluBlockError>> {
    blocks(src)
        .into_iter()
        .filter(|b| !b.lines.is_empty())
        .map(parse_block)
        .collect()
}

/// Fails on the first malformed sentence.
pub fn read_conllu(path: &Path) -> Result<Vec<ParsedQuestion>, ConlluError> {
    let src = std::fs::read_to_string(path).map_err(|source| ConlluError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_conllu(&src).into_iter().collect::<Result<_, _>>()?)
}

/// Keeps good sentences and returns the rejected ones separately.
pub fn read_conllu_lenient(
    path: &Path,
) -> Result<(Vec<ParsedQuestion>, Vec<ConlluBlockError>), ConlluError> {
    let src = std::fs::read_to_string(path).map_err(|source| ConlluError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for r in parse_conllu(&src) {
        match r {
            Ok(q) => good.push(q),
            Err(e) => {
                log::warn!("rejected parse: {e}");
                bad.push(e);
            }
        }
    }
    Ok((good, bad))
}

pub fn write_conllu(questions: &[ParsedQuestion]) -> String {
    let mut out = String::new();
    for q in questions {
        if let Some(qid) = &q.qid {
            let _ = writeln!(out, "# qid = {qid}");
        }
        let _ = writeln!(out, "# text = {}", q.text);
        for t in q.tree.nodes() {
            let _ = writeln!(
                out,
                "{}\t{}\t_\t_\t{}\t_\t{}\t{}\t_\t_",
                t.index, t.surface, t.pos, t.head, t.rel
            );
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "# qid = q1\n# text = Who founded Intel ?\n\
1\tWho\twho\tPRON\tWP\t_\t2\tnsubj\t_\t_\n\
2\tfounded\tfound\tVERB\tVBD\t_\t0\troot\t_\t_\n\
3\tIntel\tIntel\tPROPN\tNNP\t_\t2\tobj\t_\t_\n\
4\t?\t?\tPUNCT\t.\t_\t2\tpunct\t_\t_\n\
\n\
# sent_id = q2\n\
1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tdo\tdo\tAUX\t_\t_\t0\troot\t_\t_\n\
1.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n\
2\tn't\tnot\tPART\tRB\t_\t1\tadvmod\t_\t_\n";

    #[test]
    fn reads_blocks_and_metadata() {
        let qs: Vec<_> = parse_conllu(TWO).into_iter().map(Result::unwrap).collect();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].qid.as_deref(), Some("q1"));
        assert_eq!(qs[0].text, "Who founded Intel ?");
        assert_eq!(qs[0].tree.len(), 4);
        assert_eq!(qs[0].tree.nodes()[2].pos, "NNP");
        assert_eq!(qs[1].qid.as_deref(), Some("q2"));
        assert_eq!(qs[1].tree.len(), 2);
        assert_eq!(qs[1].tree.nodes()[0].pos, "AUX", "UPOS fallback");
    }

    #[test]
    fn sentence_level_errors() {
        let src = "# qid = a\n1\tx\t_\t_\tNN\t_\t1\troot\t_\t_\n\n\
# qid = b\n1\tx\t_\t_\tNN\t_\tzero\troot\t_\t_\n\n\
# qid = c\n1\tx\t_\t_\tNN\t_\t0\troot\t_\t_\n";
        let rs = parse_conllu(src);
        assert_eq!(rs.len(), 3);
        let e = rs[0].as_ref().unwrap_err();
        assert_eq!(e.kind, ConlluErrorKind::Tree(TreeError::Cycle(1)));
        assert_eq!(e.qid.as_deref(), Some("a"));
        let e = rs[1].as_ref().unwrap_err();
        assert!(matches!(&e.kind, ConlluErrorKind::Field { line: 5, .. }), "{e}");
        assert!(rs[2].is_ok());
    }

    #[test]
    fn round_trip() {
        let qs: Vec<_> = parse_conllu(TWO).into_iter().map(Result::unwrap).collect();
        let again: Vec<_> = parse_conllu(&write_conllu(&qs)).into_iter().map(Result::unwrap).collect();
        assert_eq!(qs, again);
    }

    #[test]
    fn lenient_file_reading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.conllu");
        std::fs::write(&p, format!("{TWO}\n# qid = bad\n1\tx\t_\t_\tNN\t_\t2\troot\t_\t_\n")).unwrap();
        let (good, bad) = read_conllu_lenient(&p).unwrap();
        assert_eq!((good.len(), bad.len()), (2, 1));
        assert!(read_conllu(&p).is_err());
        assert!(matches!(read_conllu(&dir.path().join("none")), Err(ConlluError::Io { .. })));
    }
}
