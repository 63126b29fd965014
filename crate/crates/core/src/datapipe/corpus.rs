use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawComment {
    pub text: String,
    pub score: Option<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// One comment per line.
    Plain,
    /// `score<TAB>text`, score in [0, 1].
    Scored,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedCorpus {
    pub comments: Vec<RawComment>,
    pub blank_lines: usize,
}

pub fn parse_corpus(text: &str, format: CorpusFormat, path: &Path) -> Result<LoadedCorpus> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut comments = Vec::new();
    let mut blank_lines = 0;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            blank_lines += 1;
            continue;
        }
        let comment = match format {
            CorpusFormat::Plain => RawComment {
                text: line.trim().to_string(),
                score: None,
            },
            CorpusFormat::Scored => {
                let (score, body) = line
                    .split_once('\t')
                    .ok_or_else(|| parse_err(line_no, "expected score<TAB>text".into()))?;
                let score: f32 = score
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("malformed score {score:?}")))?;
                if !(0.0..=1.0).contains(&score) {
                    return Err(parse_err(line_no, format!("score {score} outside [0, 1]")));
                }
                let body = body.trim();
                if body.is_empty() {
                    return Err(parse_err(line_no, "empty comment text".into()));
                }
                RawComment {
                    text: body.to_string(),
                    score: Some(score),
                }
            }
        };
        comments.push(comment);
    }
    if comments.is_empty() {
        return Err(Error::Data(format!("{} contains no comments", path.display())));
    }
    Ok(LoadedCorpus {
        comments,
        blank_lines,
    })
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<LoadedCorpus> {
    let text = fs::read_to_string(path)?;
    parse_corpus(&text, format, path)
}
