//! CoNLL-X reading and writing, plus the structural checks every tree
//! has to pass before it is handed to the learner.

use std::fmt;

use thiserror::Error;

/// Form of the artificial token at index 0.
pub const ROOT_FORM: &str = "<root>";
/// Part-of-speech tag of the artificial token at index 0.
pub const ROOT_POS: &str = "<root-pos>";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sentence ending at line {line}: {message}")]
    Structure { line: usize, message: String },
    #[error("invalid sentence: {0}")]
    InvalidSentence(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Token {
    pub form: String,
    pub pos: String,
}

impl Token {
    pub fn new(form: impl Into<String>, pos: impl Into<String>) -> Self {
        Token {
            form: form.into(),
            pos: pos.into(),
        }
    }
}

/// A tokenized sentence. Index 0 always holds the ROOT sentinel, real
/// tokens are at `1..=len()`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    /// Builds a sentence from its real tokens; the ROOT token is prepended.
    pub fn new(tokens: Vec<Token>) -> Result<Self, CorpusError> {
        if tokens.is_empty() {
            return Err(CorpusError::InvalidSentence(
                "a sentence needs at least one token".into(),
            ));
        }
        if let Some(i) = tokens.iter().position(|t| t.form.is_empty()) {
            return Err(CorpusError::InvalidSentence(format!(
                "token {} has an empty form",
                i + 1
            )));
        }
        let mut all = Vec::with_capacity(tokens.len() + 1);
        all.push(Token::new(ROOT_FORM, ROOT_POS));
        all.extend(tokens);
        Ok(Sentence { tokens: all })
    }

    pub fn from_pairs<F, P>(pairs: impl IntoIterator<Item = (F, P)>) -> Result<Self, CorpusError>
    where
        F: Into<String>,
        P: Into<String>,
    {
        Sentence::new(pairs.into_iter().map(|(f, p)| Token::new(f, p)).collect())
    }

    /// Number of real tokens (ROOT excluded).
    pub fn len(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All tokens including ROOT at index 0.
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token(&self, i: usize) -> &Token {
        &self.tokens[i]
    }

    pub fn form(&self, i: usize) -> &str {
        &self.tokens[i].form
    }

    pub fn pos(&self, i: usize) -> &str {
        &self.tokens[i].pos
    }

    /// Sentence with the real tokens in reverse order.
    pub fn mirrored(&self) -> Sentence {
        let mut tokens = self.tokens[1..].to_vec();
        tokens.reverse();
        Sentence::new(tokens).expect("mirroring preserves validity")
    }
}

/// Head assignment for tokens `1..=n`. `head(j)` lies in `0..=n`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DependencyTree {
    heads: Vec<usize>,
}

impl fmt::Debug for DependencyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "heads=[_")?;
        for h in &self.heads {
            write!(f, ",{h}")?;
        }
        write!(f, "]")
    }
}

impl DependencyTree {
    /// Validates and wraps a head array; `heads[j - 1]` is the head of token `j`.
    pub fn new(heads: Vec<usize>) -> Result<Self, CorpusError> {
        check_heads(&heads).map_err(CorpusError::InvalidTree)?;
        Ok(DependencyTree { heads })
    }

    /// Wraps a head array the caller already knows to be a valid tree.
    pub(crate) fn from_heads_unchecked(heads: Vec<usize>) -> Self {
        debug_assert!(check_heads(&heads).is_ok(), "{heads:?}");
        DependencyTree { heads }
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Head of token `j` (1-based).
    pub fn head(&self, j: usize) -> usize {
        self.heads[j - 1]
    }

    /// Heads of tokens `1..=n`, in order.
    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    /// Edges as `(head, child)` pairs in child order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.heads.iter().enumerate().map(|(i, &h)| (h, i + 1))
    }

    /// Dependents of `head` in increasing position order.
    pub fn children(&self, head: usize) -> Vec<usize> {
        self.edges()
            .filter(|&(h, _)| h == head)
            .map(|(_, c)| c)
            .collect()
    }

    pub fn is_projective(&self) -> bool {
        is_projective(self)
    }
}

/// Checks ranges, self loops and reachability from ROOT.
fn check_heads(heads: &[usize]) -> Result<(), String> {
    let n = heads.len();
    if n == 0 {
        return Err("tree has no tokens".into());
    }
    for (i, &h) in heads.iter().enumerate() {
        let j = i + 1;
        if h > n {
            return Err(format!("head {h} of token {j} is out of range 0..={n}"));
        }
        if h == j {
            return Err(format!("token {j} is its own head"));
        }
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    let mut path = Vec::new();
    for start in 1..=n {
        let mut cur = start;
        while state[cur] == 0 {
            state[cur] = 1;
            path.push(cur);
            cur = heads[cur - 1];
        }
        if state[cur] == 1 {
            return Err(format!("cycle through token {cur}"));
        }
        for p in path.drain(..) {
            state[p] = 2;
        }
    }
    Ok(())
}

/// True iff every token strictly between a head and its child is a
/// descendant of that head.
pub fn is_projective(tree: &DependencyTree) -> bool {
    for (h, c) in tree.edges() {
        let (lo, hi) = if h < c { (h, c) } else { (c, h) };
        for k in lo + 1..hi {
            // walk k up to the root; a projective edge dominates k
            let mut cur = k;
            while cur != 0 && cur != h {
                cur = tree.head(cur);
            }
            if cur != h {
                return false;
            }
        }
    }
    true
}

/// Parses CoNLL-X text into validated (sentence, tree) pairs.
pub fn parse_conll(text: &str) -> Result<Vec<(Sentence, DependencyTree)>, CorpusError> {
    read_blocks(text, true).map(|blocks| {
        blocks
            .into_iter()
            .map(|(s, t)| (s, t.expect("heads requested")))
            .collect()
    })
}

/// Parses CoNLL-X text ignoring the HEAD column (input to the parser).
pub fn parse_sentences(text: &str) -> Result<Vec<Sentence>, CorpusError> {
    read_blocks(text, false).map(|blocks| blocks.into_iter().map(|(s, _)| s).collect())
}

type Block = (Sentence, Option<DependencyTree>);

fn read_blocks(text: &str, with_heads: bool) -> Result<Vec<Block>, CorpusError> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut heads = Vec::new();
    let mut last_line = 0;

    let finish = |tokens: &mut Vec<Token>,
                  heads: &mut Vec<(usize, usize)>,
                  line: usize,
                  out: &mut Vec<Block>|
     -> Result<(), CorpusError> {
        if tokens.is_empty() {
            return Ok(());
        }
        let n = tokens.len();
        let sentence = Sentence::new(std::mem::take(tokens))
            .map_err(|e| CorpusError::Structure { line, message: e.to_string() })?;
        let tree = if with_heads {
            let mut resolved = Vec::with_capacity(n);
            for (h, source_line) in heads.drain(..) {
                if h > n {
                    return Err(CorpusError::Parse {
                        line: source_line,
                        message: format!("HEAD {h} out of range 0..={n}"),
                    });
                }
                resolved.push(h);
            }
            let tree = DependencyTree::new(resolved)
                .map_err(|e| CorpusError::Structure { line, message: e.to_string() })?;
            Some(tree)
        } else {
            heads.clear();
            None
        };
        out.push((sentence, tree));
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            finish(&mut tokens, &mut heads, line_no, &mut out)?;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id: usize = cols[0].parse().map_err(|_| CorpusError::Parse {
            line: line_no,
            message: format!("non-integer ID {:?}", cols[0]),
        })?;
        if id != tokens.len() + 1 {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("expected ID {}, found {id}", tokens.len() + 1),
            });
        }
        if cols[1].is_empty() {
            return Err(CorpusError::Parse {
                line: line_no,
                message: "empty FORM".into(),
            });
        }
        if with_heads {
            let head: usize = cols[6].parse().map_err(|_| CorpusError::Parse {
                line: line_no,
                message: format!("non-integer HEAD {:?}", cols[6]),
            })?;
            heads.push((head, line_no));
        }
        tokens.push(Token::new(cols[1], cols[4]));
    }
    finish(&mut tokens, &mut heads, last_line, &mut out)?;
    Ok(out)
}

/// Serializes pairs as CoNLL-X; columns this crate does not model are `_`.
pub fn write_conll(pairs: &[(Sentence, DependencyTree)]) -> String {
    let mut out = String::new();
    for (sentence, tree) in pairs {
        write_block(&mut out, sentence, tree);
    }
    out
}

fn write_block(out: &mut String, sentence: &Sentence, tree: &DependencyTree) {
    use std::fmt::Write;
    for j in 1..=sentence.len() {
        let t = sentence.token(j);
        let _ = writeln!(
            out,
            "{j}\t{}\t_\t_\t{}\t_\t{}\t_\t_\t_",
            t.form,
            t.pos,
            tree.head(j)
        );
    }
    out.push('\n');
}

/// Splits a treebank into projective pairs and a count of dropped ones.
pub fn filter_projective(
    pairs: Vec<(Sentence, DependencyTree)>,
) -> (Vec<(Sentence, DependencyTree)>, usize) {
    let before = pairs.len();
    let kept: Vec<_> = pairs.into_iter().filter(|(_, t)| is_projective(t)).collect();
    let dropped = before - kept.len();
    if dropped > 0 {
        log::warn!("dropped {dropped} non-projective sentence(s) of {before}");
    }
    (kept, dropped)
}

/// Reads a treebank for training: parse, then drop non-projective trees.
pub fn load_training_corpus(text: &str) -> Result<(Vec<(Sentence, DependencyTree)>, usize), CorpusError> {
    Ok(filter_projective(parse_conll(text)?))
}
