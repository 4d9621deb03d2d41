//! Sparse labeled classification data in LIBSVM text format.
//!
//! Feature indices are one-based on disk and zero-based in memory.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, ParseErrorKind, Result};

/// Sparse vector with strictly increasing zero-based indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a sparse vector from zero-based `(index, value)` pairs.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values = Vec::with_capacity(pairs.len());
        for (pos, &(idx, val)) in pairs.iter().enumerate() {
            if pos > 0 && idx <= indices[pos - 1] as usize {
                return Err(Error::invalid(format!(
                    "sparse indices must be strictly increasing ({} after {})",
                    idx,
                    indices[pos - 1]
                )));
            }
            indices.push(u32::try_from(idx).map_err(|_| Error::invalid("index too large"))?);
            values.push(val);
        }
        Ok(SparseVector { indices, values })
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Zero-based `(index, value)` pairs in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    /// Largest zero-based index, if any.
    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().map(|&i| i as usize)
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// `Σ value·x[index]` without bounds checks beyond slice indexing.
    #[inline]
    pub(crate) fn dot_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            acc += v * x[i as usize];
        }
        acc
    }

    /// `out += scale · self`.
    #[inline]
    pub(crate) fn axpy_into(&self, scale: f64, out: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] += scale * v;
        }
    }
}

/// Dot product of a sparse vector with a dense one, summed in ascending index order.
pub fn sparse_dot(features: &SparseVector, x: &[f64]) -> Result<f64> {
    if let Some(max) = features.max_index() {
        if max >= x.len() {
            return Err(Error::IndexOutOfRange {
                index: max,
                len: x.len(),
            });
        }
    }
    Ok(features.dot_unchecked(x))
}

/// One labeled example; the label is exactly `+1.0` or `-1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub label: f64,
    pub features: SparseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(dim: usize, examples: Vec<Example>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for ex in &examples {
            if ex.label != 1.0 && ex.label != -1.0 {
                return Err(Error::invalid(format!("label {} is not ±1", ex.label)));
            }
            if let Some(max) = ex.features.max_index() {
                if max >= dim {
                    return Err(Error::IndexOutOfRange { index: max, len: dim });
                }
            }
        }
        Ok(Dataset { dim, examples })
    }

    /// Number of examples `n`.
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn example(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    /// The regularization used throughout the experiments, `1/n`.
    pub fn default_lambda(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn max_squared_norm(&self) -> f64 {
        self.examples
            .iter()
            .map(|e| e.features.squared_norm())
            .fold(0.0, f64::max)
    }
}

/// Parses LIBSVM text. `d` is `declared_dimension` when given, else the largest index seen.
pub fn parse_libsvm<R: BufRead>(reader: R, declared_dimension: Option<usize>) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.map_err(|e| Error::io("<stream>", e))?;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = content.split_ascii_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let err = |kind| Error::Parse { line: line_no, kind };

        let label = match label_tok.parse::<f64>() {
            Ok(v) if v == 1.0 || v == -1.0 => v,
            _ => return Err(err(ParseErrorKind::InvalidLabel(label_tok.to_string()))),
        };

        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut previous = 0usize;
        for tok in tokens {
            let (idx_str, val_str) = tok
                .split_once(':')
                .ok_or_else(|| err(ParseErrorKind::MalformedToken(tok.to_string())))?;
            let idx: usize = idx_str
                .parse()
                .map_err(|_| err(ParseErrorKind::MalformedToken(tok.to_string())))?;
            if idx == 0 {
                return Err(err(ParseErrorKind::MalformedToken(tok.to_string())));
            }
            let val: f64 = val_str
                .parse()
                .map_err(|_| err(ParseErrorKind::MalformedToken(tok.to_string())))?;
            if !val.is_finite() {
                return Err(err(ParseErrorKind::NonFiniteValue(val_str.to_string())));
            }
            if idx <= previous {
                return Err(err(ParseErrorKind::NonIncreasingIndex { previous, index: idx }));
            }
            if let Some(dim) = declared_dimension {
                if idx > dim {
                    return Err(err(ParseErrorKind::IndexBeyondDimension {
                        index: idx,
                        dimension: dim,
                    }));
                }
            }
            previous = idx;
            indices.push((idx - 1) as u32);
            values.push(val);
        }
        max_index = max_index.max(previous);
        examples.push(Example {
            label,
            features: SparseVector { indices, values },
        });
    }

    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = declared_dimension.unwrap_or(max_index);
    Ok(Dataset { dim, examples })
}

pub fn parse_libsvm_str(text: &str, declared_dimension: Option<usize>) -> Result<Dataset> {
    parse_libsvm(text.as_bytes(), declared_dimension)
}

pub fn read_libsvm(path: impl AsRef<Path>, declared_dimension: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    BufReader::new(file)
        .read_to_string(&mut text)
        .map_err(|e| Error::io(path, e))?;
    parse_libsvm_str(&text, declared_dimension)
}

/// Serializes in LIBSVM format with one-based indices and shortest round-trip floats.
pub fn write_libsvm(dataset: &Dataset) -> String {
    let mut out = String::new();
    for ex in dataset.examples() {
        out.push_str(if ex.label > 0.0 { "+1" } else { "-1" });
        for (i, v) in ex.features.iter() {
            let _ = write!(out, " {}:{}", i + 1, v);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_basic_line() {
        let ds = parse_libsvm_str("+1 3:1 11:0.5\n", None).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dim(), 11);
        let ex = ds.example(0);
        assert_eq!(ex.label, 1.0);
        let pairs: Vec<_> = ex.features.iter().collect();
        assert_eq!(pairs, vec![(2, 1.0), (10, 0.5)]);
    }

    #[test]
    fn accepts_label_spellings_comments_and_crlf() {
        let text = "1 1:2 # trailing comment\r\n\r\n# whole-line comment\n-1 2:1\r\n+1\n";
        let ds = parse_libsvm_str(text, Some(4)).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.example(1).label, -1.0);
        assert!(ds.example(2).features.is_empty());
        assert_eq!(ds.default_lambda(), 1.0 / 3.0);
    }

    #[test]
    fn rejects_non_increasing_index_with_line() {
        let err = parse_libsvm_str("+1 1:1\n-1 5:2 5:3\n", None).unwrap_err();
        match err {
            Error::Parse { line, kind } => {
                assert_eq!(line, 2);
                assert_eq!(kind, ParseErrorKind::NonIncreasingIndex { previous: 5, index: 5 });
                assert!(kind.to_string().contains("non-increasing index"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_labels_tokens_and_dimension() {
        let cases = [
            ("0 1:1\n", ParseErrorKind::InvalidLabel("0".into())),
            ("2 1:1\n", ParseErrorKind::InvalidLabel("2".into())),
            ("+1 1-1\n", ParseErrorKind::MalformedToken("1-1".into())),
            ("+1 0:1\n", ParseErrorKind::MalformedToken("0:1".into())),
            ("+1 a:1\n", ParseErrorKind::MalformedToken("a:1".into())),
            ("+1 1:x\n", ParseErrorKind::MalformedToken("1:x".into())),
            ("+1 1:inf\n", ParseErrorKind::NonFiniteValue("inf".into())),
            (
                "+1 9:1\n",
                ParseErrorKind::IndexBeyondDimension { index: 9, dimension: 8 },
            ),
        ];
        for (text, expected) in cases {
            match parse_libsvm_str(text, Some(8)) {
                Err(Error::Parse { line: 1, kind }) => assert_eq!(kind, expected, "{text:?}"),
                other => panic!("{text:?}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_libsvm_str("", None), Err(Error::EmptyDataset)));
        assert!(matches!(
            parse_libsvm_str("# only a comment\n\n", None),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn sparse_dot_basics() {
        let empty = SparseVector::default();
        assert_eq!(sparse_dot(&empty, &[1.0, 2.0]).unwrap(), 0.0);
        let v = SparseVector::from_pairs(&[(0, 2.0)]).unwrap();
        assert_eq!(sparse_dot(&v, &[3.0, 5.0]).unwrap(), 6.0);
        let far = SparseVector::from_pairs(&[(4, 1.0)]).unwrap();
        assert!(matches!(
            sparse_dot(&far, &[1.0; 3]),
            Err(Error::IndexOutOfRange { index: 4, len: 3 })
        ));
    }

    #[test]
    fn sparse_dot_matches_densified_dot() {
        use rand::seq::index::sample;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let dim = 400;
        let mut idx = sample(&mut rng, dim, 50).into_vec();
        idx.sort_unstable();
        let pairs: Vec<_> = idx.iter().map(|&i| (i, rng.random_range(-2.0..2.0))).collect();
        let sv = SparseVector::from_pairs(&pairs).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dense = sv.to_dense(dim);
        let oracle: f64 = dense.iter().zip(&x).map(|(a, b)| a * b).sum();
        let got = sparse_dot(&sv, &x).unwrap();
        assert!((got - oracle).abs() <= 1e-14 * oracle.abs().max(1.0));
    }
}
