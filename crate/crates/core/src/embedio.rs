//! Embedding sets, trial lists, score sets and their on-disk formats.
//!
//! Two embedding formats are supported:
//!
//! * TSV: a `#EVEC v1 dim=D` header line followed by one record per line,
//!   `id \t label \t domain \t v1 ... vD`. A missing speaker label is written
//!   as `-`. Values are emitted with 17 significant digits.
//! * Binary: magic `EVB1`, `u32` record count, `u32` dimension, then per
//!   record three `u16`-length-prefixed UTF-8 strings (id, label, domain)
//!   followed by `dim` little-endian `f64` values. A missing label is the
//!   empty string.
//!
//! Trial lists are `enroll \t test [\t target|nontarget]` without a header;
//! score files are `enroll \t test \t score`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub const TSV_MAGIC: &str = "#EVEC v1";
pub const BINARY_MAGIC: &[u8; 4] = b"EVB1";
const MISSING_LABEL_TSV: &str = "-";

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn format_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Binary,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(Format::Tsv),
            "binary" | "bin" => Ok(Format::Binary),
            other => Err(format!("unknown format '{other}' (expected tsv or binary)")),
        }
    }
}

/// A set of N labeled (or unlabeled) D-dimensional embeddings from one domain.
///
/// Rows of `vectors` align with `ids`. The set is validated at construction
/// and immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    labels: Option<Vec<String>>,
    domain: String,
    vectors: DMatrix<f64>,
}

impl EmbeddingSet {
    pub fn new(
        ids: Vec<String>,
        labels: Option<Vec<String>>,
        domain: impl Into<String>,
        vectors: DMatrix<f64>,
    ) -> Result<Self> {
        let n = vectors.nrows();
        if n == 0 || vectors.ncols() == 0 {
            return Err(Error::Validation(format!(
                "embedding set must have N >= 1 and D >= 1, got {}x{}",
                n,
                vectors.ncols()
            )));
        }
        if ids.len() != n {
            return Err(Error::Validation(format!(
                "{} ids for {} vectors",
                ids.len(),
                n
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if id.is_empty() {
                return Err(Error::Validation("empty utterance id".into()));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate id '{id}'")));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Validation(format!(
                    "{} labels for {} vectors",
                    labels.len(),
                    n
                )));
            }
            if labels.iter().any(|l| l.is_empty()) {
                return Err(Error::Validation("empty speaker label".into()));
            }
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            // column-major storage
            let (row, col) = (pos % n, pos / n);
            return Err(Error::Validation(format!(
                "non-finite value in '{}' at component {}",
                ids[row], col
            )));
        }
        Ok(Self {
            ids,
            labels,
            domain: domain.into(),
            vectors,
        })
    }

    /// Builds a set from row vectors.
    pub fn from_rows(
        ids: Vec<String>,
        labels: Option<Vec<String>>,
        domain: impl Into<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Validation(format!(
                "row {bad} has dimension {} (expected {dim})",
                rows[bad].len()
            )));
        }
        let m = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Self::new(ids, labels, domain, m)
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.vectors.row(i).transpose()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Same ids, labels and domain with new vectors of the same shape.
    pub fn with_vectors(&self, vectors: DMatrix<f64>) -> Result<Self> {
        if vectors.shape() != self.vectors.shape() {
            return Err(Error::Validation(format!(
                "replacement vectors are {:?}, expected {:?}",
                vectors.shape(),
                self.vectors.shape()
            )));
        }
        Self::new(
            self.ids.clone(),
            self.labels.clone(),
            self.domain.clone(),
            vectors,
        )
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = domain.into();
        self
    }

    /// Drops speaker labels, as for unlabeled in-domain adaptation data.
    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Validation(format!(
                "subset index {bad} out of range for {} rows",
                self.len()
            )));
        }
        let vectors = self.vectors.select_rows(indices.iter());
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i].clone()).collect());
        Self::new(ids, labels, self.domain.clone(), vectors)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialList {
    pairs: Vec<(String, String)>,
    keys: Option<Vec<bool>>,
}

impl TrialList {
    pub fn new(pairs: Vec<(String, String)>, keys: Option<Vec<bool>>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Validation("trial list is empty".into()));
        }
        if let Some(k) = &keys {
            if k.len() != pairs.len() {
                return Err(Error::Validation(format!(
                    "{} keys for {} trials",
                    k.len(),
                    pairs.len()
                )));
            }
        }
        Ok(Self { pairs, keys })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn keys(&self) -> Option<&[bool]> {
        self.keys.as_deref()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pairs: Vec<(String, String)>,
    scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(pairs: Vec<(String, String)>, scores: Vec<f64>) -> Result<Self> {
        if pairs.len() != scores.len() {
            return Err(Error::Validation(format!(
                "{} scores for {} trials",
                scores.len(),
                pairs.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite score for trial {} ({} {})",
                i, pairs[i].0, pairs[i].1
            )));
        }
        Ok(Self { pairs, scores })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Embedding files

pub fn read_embeddings(path: impl AsRef<Path>, format: Format) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Binary => decode_embeddings_binary(&bytes),
        Format::Tsv => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| Error::parse(format!("byte {}", e.valid_up_to()), "invalid UTF-8"))?;
            parse_embeddings_tsv(text)
        }
    }
}

pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        Format::Binary => encode_embeddings_binary(set)?,
        Format::Tsv => format_embeddings_tsv(set).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn format_embeddings_tsv(set: &EmbeddingSet) -> String {
    let mut out = format!("{TSV_MAGIC} dim={}\n", set.dim());
    for i in 0..set.len() {
        out.push_str(&set.ids[i]);
        out.push('\t');
        match &set.labels {
            Some(l) => out.push_str(&l[i]),
            None => out.push_str(MISSING_LABEL_TSV),
        }
        out.push('\t');
        out.push_str(&set.domain);
        for j in 0..set.dim() {
            out.push('\t');
            out.push_str(&format_sig17(set.vectors[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Collects per-record labels into the set-level representation: all present
/// or all missing.
fn collect_labels(labels: Vec<Option<String>>) -> Result<Option<Vec<String>>> {
    let present = labels.iter().filter(|l| l.is_some()).count();
    if present == 0 {
        Ok(None)
    } else if present == labels.len() {
        Ok(Some(labels.into_iter().flatten().collect()))
    } else {
        Err(Error::Validation(format!(
            "{present} of {} records carry a speaker label; labels must be all present or all missing",
            labels.len()
        )))
    }
}

fn check_domain(domain: &mut Option<String>, record: &str, at: &str) -> Result<()> {
    match domain {
        None => *domain = Some(record.to_string()),
        Some(d) if d != record => {
            return Err(Error::Validation(format!(
                "{at}: domain '{record}' differs from '{d}' of earlier records"
            )))
        }
        Some(_) => {}
    }
    Ok(())
}

pub fn parse_embeddings_tsv(text: &str) -> Result<EmbeddingSet> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse("line 1", "empty file, expected header"))?;
    let dim = header
        .strip_prefix(TSV_MAGIC)
        .and_then(|rest| rest.strip_prefix(" dim="))
        .ok_or_else(|| Error::parse("line 1", format!("expected '{TSV_MAGIC} dim=D' header")))?
        .parse::<usize>()
        .map_err(|e| Error::parse("line 1", format!("bad dimension: {e}")))?;
    if dim == 0 {
        return Err(Error::Validation("dimension must be >= 1".into()));
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut domain = None;
    let mut values = Vec::new();
    for (idx, line) in lines {
        let at = format!("line {}", idx + 1);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != dim + 3 {
            return Err(Error::parse(
                at,
                format!("expected {} fields, found {}", dim + 3, fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(Error::parse(at, "empty id"));
        }
        ids.push(fields[0].to_string());
        labels.push(match fields[1] {
            MISSING_LABEL_TSV => None,
            "" => return Err(Error::parse(at, "empty label (use '-' for unlabeled)")),
            l => Some(l.to_string()),
        });
        check_domain(&mut domain, fields[2], &at)?;
        for (j, f) in fields[3..].iter().enumerate() {
            let v = f
                .parse::<f64>()
                .map_err(|e| Error::parse(&at, format!("component {j}: {e}")))?;
            if !v.is_finite() {
                return Err(Error::Validation(format!("{at}: non-finite value at component {j}")));
            }
            values.push(v);
        }
    }
    if ids.is_empty() {
        return Err(Error::Validation("no records after header".into()));
    }
    let n = ids.len();
    let vectors = DMatrix::from_row_slice(n, dim, &values);
    EmbeddingSet::new(ids, collect_labels(labels)?, domain.unwrap_or_default(), vectors)
}

fn push_str16(out: &mut Vec<u8>, s: &str, what: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::Validation(format!("{what} longer than 65535 bytes")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn encode_embeddings_binary(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let n = u32::try_from(set.len()).map_err(|_| Error::Validation("too many records".into()))?;
    let d = u32::try_from(set.dim()).map_err(|_| Error::Validation("dimension too large".into()))?;
    let mut out = Vec::with_capacity(12 + set.len() * (set.dim() * 8 + 32));
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for i in 0..set.len() {
        push_str16(&mut out, &set.ids[i], "id")?;
        let label = set.labels.as_ref().map_or("", |l| l[i].as_str());
        push_str16(&mut out, label, "label")?;
        push_str16(&mut out, &set.domain, "domain")?;
        for j in 0..set.dim() {
            out.extend_from_slice(&set.vectors[(i, j)].to_le_bytes());
        }
    }
    Ok(out)
}

/// Little-endian cursor over a byte buffer whose errors carry the offset.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::parse(
                format!("offset {}", self.pos),
                format!("unexpected end of data reading {what}"),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub(crate) fn str16(&mut self, what: &str) -> Result<String> {
        let at = self.pos;
        let len = self.u16(what)? as usize;
        let b = self.take(len, what)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| Error::parse(format!("offset {at}"), format!("{what} is not valid UTF-8")))
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        let got = self.take(magic.len(), "magic")?;
        if got != magic {
            return Err(Error::parse(
                "offset 0",
                format!("bad magic {:?}, expected {:?}", got, String::from_utf8_lossy(magic)),
            ));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::parse(
                format!("offset {}", self.pos),
                format!("{} trailing bytes", self.remaining()),
            ));
        }
        Ok(())
    }
}

pub fn decode_embeddings_binary(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(BINARY_MAGIC)?;
    let n = r.u32("record count")? as usize;
    let dim = r.u32("dimension")? as usize;
    if n == 0 || dim == 0 {
        return Err(Error::Validation(format!(
            "binary header declares {n} records of dimension {dim}"
        )));
    }
    // Every record needs at least 6 length bytes plus 8 bytes per component.
    let min_record = dim.saturating_mul(8).saturating_add(6);
    if n.saturating_mul(min_record) > r.remaining() {
        return Err(Error::parse(
            format!("offset {}", r.offset()),
            format!("header declares {n}x{dim} but only {} bytes follow", r.remaining()),
        ));
    }

    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut domain = None;
    let mut values = Vec::with_capacity(n * dim);
    for rec in 0..n {
        let at = format!("record {rec} (offset {})", r.offset());
        ids.push(r.str16("id")?);
        let label = r.str16("label")?;
        labels.push((!label.is_empty()).then_some(label));
        let d = r.str16("domain")?;
        check_domain(&mut domain, &d, &at)?;
        for j in 0..dim {
            let v = r.f64("vector component")?;
            if !v.is_finite() {
                return Err(Error::Validation(format!("{at}: non-finite value at component {j}")));
            }
            values.push(v);
        }
    }
    r.finish()?;
    let vectors = DMatrix::from_row_slice(n, dim, &values);
    EmbeddingSet::new(ids, collect_labels(labels)?, domain.unwrap_or_default(), vectors)
}

// ---------------------------------------------------------------------------
// Trials and scores

pub fn parse_trials(text: &str) -> Result<TrialList> {
    let mut pairs = Vec::new();
    let mut keys = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let at = format!("line {}", idx + 1);
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::parse(
                at,
                format!("expected 2 or 3 fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(at, "empty id"));
        }
        pairs.push((fields[0].to_string(), fields[1].to_string()));
        keys.push(match fields.get(2) {
            None => None,
            Some(&"target") => Some(true),
            Some(&"nontarget") => Some(false),
            Some(other) => {
                return Err(Error::parse(
                    at,
                    format!("unknown key '{other}' (expected target or nontarget)"),
                ))
            }
        });
    }
    if pairs.is_empty() {
        return Err(Error::parse("line 1", "empty trial list"));
    }
    let keyed = keys.iter().filter(|k| k.is_some()).count();
    let keys = if keyed == 0 {
        None
    } else if keyed == keys.len() {
        Some(keys.into_iter().flatten().collect())
    } else {
        return Err(Error::parse(
            "trial list",
            format!("{keyed} of {} trials carry a key; keys must be all present or all missing", keys.len()),
        ));
    };
    TrialList::new(pairs, keys)
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<TrialList> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trials(&text)
}

pub fn format_trials(trials: &TrialList) -> String {
    let mut out = String::new();
    for (i, (e, t)) in trials.pairs.iter().enumerate() {
        out.push_str(e);
        out.push('\t');
        out.push_str(t);
        if let Some(k) = &trials.keys {
            out.push_str(if k[i] { "\ttarget" } else { "\tnontarget" });
        }
        out.push('\n');
    }
    out
}

pub fn write_trials(trials: &TrialList, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_trials(trials)).map_err(|e| Error::io(path, e))
}

pub fn format_scores(scores: &ScoreSet) -> String {
    let mut out = String::new();
    for ((e, t), s) in scores.pairs.iter().zip(&scores.scores) {
        out.push_str(&format!("{e}\t{t}\t{}\n", format_sig17(*s)));
    }
    out
}

pub fn write_scores(scores: &ScoreSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_scores(scores)).map_err(|e| Error::io(path, e))
}

pub fn parse_scores(text: &str) -> Result<ScoreSet> {
    let mut pairs = Vec::new();
    let mut scores = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let at = format!("line {}", idx + 1);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(at, format!("expected 3 fields, found {}", fields.len())));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(at, "empty id"));
        }
        let s = fields[2]
            .parse::<f64>()
            .map_err(|e| Error::parse(&at, format!("bad score: {e}")))?;
        pairs.push((fields[0].to_string(), fields[1].to_string()));
        scores.push(s);
    }
    if pairs.is_empty() {
        return Err(Error::parse("line 1", "empty score file"));
    }
    ScoreSet::new(pairs, scores)
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text)
}
