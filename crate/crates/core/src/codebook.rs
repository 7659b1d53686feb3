//! Sylvester-Hadamard class codebooks.
//!
//! Class `c` is encoded as row `c` of the `K×K` Sylvester matrix. Any two
//! distinct rows are orthogonal, so every pair of codewords differs in exactly
//! `K/2` positions. Codewords are bipolar (`±1`); the binary training targets
//! used by the detection head are the same bits remapped through `b ↦ (b+1)/2`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Builds the `k×k` Sylvester-Hadamard matrix: `H₁ = [1]`, `H₂ₖ = [[Hₖ, Hₖ], [Hₖ, −Hₖ]]`.
pub fn build_sylvester(k: usize) -> Result<Vec<Vec<i8>>> {
    if k == 0 || !k.is_power_of_two() {
        return Err(Error::config(format!(
            "Hadamard order must be a power of two, got {k}"
        )));
    }
    let mut h = vec![vec![1i8]];
    while h.len() < k {
        let n = h.len();
        let mut next = vec![vec![0i8; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                let v = h[i][j];
                next[i][j] = v;
                next[i][j + n] = v;
                next[i + n][j] = v;
                next[i + n][j + n] = -v;
            }
        }
        h = next;
    }
    Ok(h)
}

/// Number of positions at which two codewords differ.
pub fn hamming_distance(a: &[i8], b: &[i8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HadamardCodebook {
    bits: usize,
    classes: usize,
    codewords: Vec<Vec<i8>>,
    targets: Vec<Vec<f64>>,
}

impl HadamardCodebook {
    /// Smallest power of two that is at least `max(16, 2·classes)`.
    pub fn default_bits(classes: usize) -> usize {
        (2 * classes).max(16).next_power_of_two()
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn codewords(&self) -> &[Vec<i8>] {
        &self.codewords
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    /// Codeword and `{0,1}` target for `label`.
    pub fn encode(&self, label: usize) -> Result<(&[i8], &[f64])> {
        if label >= self.classes {
            return Err(Error::Label(format!(
                "class {label} not in codebook of {} classes",
                self.classes
            )));
        }
        Ok((&self.codewords[label], &self.targets[label]))
    }

    /// Stacks the `{0,1}` targets of `labels` into an `n×K` matrix.
    pub fn target_matrix(&self, labels: &[usize]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(labels.len() * self.bits);
        for &y in labels {
            data.extend_from_slice(self.encode(y)?.1);
        }
        Matrix::new(labels.len(), self.bits, data)
    }

    /// Smallest Hamming distance over all codeword pairs (`None` with one class).
    pub fn min_distance(&self) -> Option<usize> {
        let mut best = None;
        for i in 0..self.classes {
            for j in i + 1..self.classes {
                let d = hamming_distance(&self.codewords[i], &self.codewords[j]);
                best = Some(best.map_or(d, |b: usize| b.min(d)));
            }
        }
        best
    }

    /// One line per class, entries `1` or `-1`, comma-separated.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        for word in &self.codewords {
            let line: Vec<String> = word.iter().map(|b| b.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_csv(&mut buf)?;
        buf.flush()?;
        Ok(())
    }
}

/// Takes rows `0..classes` of the `bits×bits` Sylvester matrix as codewords and
/// verifies the `bits/2` pairwise distance exhaustively.
pub fn derive_codebook(bits: usize, classes: usize) -> Result<HadamardCodebook> {
    if bits < 2 || !bits.is_power_of_two() {
        return Err(Error::config(format!(
            "codebook length must be a power of two of at least 2, got {bits}"
        )));
    }
    if classes > bits {
        return Err(Error::Capacity { bits, classes });
    }
    if classes == 0 {
        return Err(Error::config("codebook needs at least one class"));
    }
    let mut codewords = build_sylvester(bits)?;
    codewords.truncate(classes);
    let targets = codewords
        .iter()
        .map(|w| w.iter().map(|&b| f64::from(b + 1) / 2.0).collect())
        .collect();
    let cb = HadamardCodebook {
        bits,
        classes,
        codewords,
        targets,
    };
    for i in 0..classes {
        for j in i + 1..classes {
            let d = hamming_distance(&cb.codewords[i], &cb.codewords[j]);
            if d != bits / 2 {
                return Err(Error::Encoding(format!(
                    "codewords {i} and {j} are {d} apart, expected {}",
                    bits / 2
                )));
            }
        }
    }
    Ok(cb)
}

/// Free-function form of [`HadamardCodebook::encode`].
pub fn encode_label(cb: &HadamardCodebook, label: usize) -> Result<(&[i8], &[f64])> {
    cb.encode(label)
}
