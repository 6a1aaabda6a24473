//! The unified block form of bilinear scoring functions and its scoring
//! kernels.
//!
//! Embeddings of dimension `d` (divisible by 4) are read as four chunks of
//! width `d/4`. A scoring function is a 4x4 grid of signed labels: entry
//! `(i, j) = ±k` contributes `±<h_i, r_k, t_j>` to the score, entry `0`
//! contributes nothing. DistMult, ComplEx, Analogy and SimplE are particular
//! grids ([`KnownSf`]).

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of chunks an embedding splits into.
pub const CHUNKS: usize = 4;

/// A bilinear scoring function as a 4x4 grid of signed relation-chunk
/// labels, each in `{0, ±1, ±2, ±3, ±4}`.
///
/// The textual form is the canonical wire format: nonzero cells listed as
/// `i,j,±k` (1-based), sorted by `(i, j)`, joined with `;`. DistMult is
/// `"1,1,+1;2,2,+2;3,3,+3;4,4,+4"`, the empty string is the all-zero grid.
/// `Ord` matches byte order of that encoding, so minimizing over a set of
/// grids and minimizing over their strings agree.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockSF {
    cells: [[i8; CHUNKS]; CHUNKS],
}

impl BlockSF {
    /// The all-zero grid (scores everything 0).
    pub fn zero() -> Self {
        BlockSF {
            cells: [[0; CHUNKS]; CHUNKS],
        }
    }

    /// Build from a full cell grid, validating the label range.
    pub fn from_cells(cells: [[i8; CHUNKS]; CHUNKS]) -> Result<Self> {
        for row in &cells {
            for &c in row {
                if c.abs() > 4 {
                    return Err(Error::argument(format!("cell value {c} outside {{0,±1..±4}}")));
                }
            }
        }
        Ok(BlockSF { cells })
    }

    /// Signed label at 0-based block position.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.cells[i][j]
    }

    /// Set a 0-based block position to a signed label.
    pub fn set(&mut self, i: usize, j: usize, value: i8) -> Result<()> {
        if i >= CHUNKS || j >= CHUNKS {
            return Err(Error::argument(format!("block index ({i},{j}) outside 4x4 grid")));
        }
        if value.abs() > 4 {
            return Err(Error::argument(format!("cell value {value} outside {{0,±1..±4}}")));
        }
        self.cells[i][j] = value;
        Ok(())
    }

    /// Number of nonzero blocks.
    pub fn block_count(&self) -> usize {
        self.cells
            .iter()
            .flatten()
            .filter(|&&c| c != 0)
            .count()
    }

    /// Nonzero cells as `(i, j, signed_label)` in row-major order (0-based).
    pub fn nonzero_cells(&self) -> impl Iterator<Item = (usize, usize, i8)> + '_ {
        (0..CHUNKS).flat_map(move |i| {
            (0..CHUNKS).filter_map(move |j| {
                let c = self.cells[i][j];
                (c != 0).then_some((i, j, c))
            })
        })
    }

    /// The grid with rows and columns swapped, so that
    /// `score(sf, h, r, t) == score(sf.transpose(), t, r, h)`.
    pub fn transpose(&self) -> Self {
        let mut out = [[0i8; CHUNKS]; CHUNKS];
        for i in 0..CHUNKS {
            for j in 0..CHUNKS {
                out[j][i] = self.cells[i][j];
            }
        }
        BlockSF { cells: out }
    }
}

impl fmt::Debug for BlockSF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockSF(\"{self}\")")
    }
}

/// Terms compare as `(i, j, sign, k)` with `+` before `-`; this equals byte
/// order of the text encoding because every encoded term is six bytes.
impl Ord for BlockSF {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |c: i8| (c.signum() < 0, c.unsigned_abs());
        let mut lhs = self.nonzero_cells();
        let mut rhs = other.nonzero_cells();
        loop {
            match (lhs.next(), rhs.next()) {
                (None, None) => return std::cmp::Ordering::Equal,
                (None, Some(_)) => return std::cmp::Ordering::Less,
                (Some(_), None) => return std::cmp::Ordering::Greater,
                (Some((i, j, a)), Some((p, q, b))) => {
                    let ord = (i, j, key(a)).cmp(&(p, q, key(b)));
                    if ord != std::cmp::Ordering::Equal {
                        return ord;
                    }
                }
            }
        }
    }
}

impl PartialOrd for BlockSF {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BlockSF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, j, c) in self.nonzero_cells() {
            if !first {
                f.write_str(";")?;
            }
            first = false;
            let sign = if c > 0 { '+' } else { '-' };
            write!(f, "{},{},{}{}", i + 1, j + 1, sign, c.abs())?;
        }
        Ok(())
    }
}

impl FromStr for BlockSF {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut sf = BlockSF::zero();
        if s.is_empty() {
            return Ok(sf);
        }
        for term in s.split(';') {
            let mut parts = term.split(',');
            let (i, j, sk) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(i), Some(j), Some(sk), None) => (i, j, sk),
                _ => return Err(Error::SfParse(format!("term `{term}` is not of the form i,j,±k"))),
            };
            let parse_index = |txt: &str| -> Result<usize> {
                match txt {
                    "1" => Ok(0),
                    "2" => Ok(1),
                    "3" => Ok(2),
                    "4" => Ok(3),
                    _ => Err(Error::SfParse(format!("index `{txt}` outside 1..4 in term `{term}`"))),
                }
            };
            let i = parse_index(i)?;
            let j = parse_index(j)?;
            let (sign, digits) = match sk.as_bytes().first() {
                Some(b'+') => (1i8, &sk[1..]),
                Some(b'-') => (-1i8, &sk[1..]),
                _ => {
                    return Err(Error::SfParse(format!("label `{sk}` in term `{term}` must carry an explicit sign")))
                }
            };
            let k = parse_index(digits)? as i8 + 1;
            if sf.cells[i][j] != 0 {
                return Err(Error::SfParse(format!("duplicate block ({},{})", i + 1, j + 1)));
            }
            sf.cells[i][j] = sign * k;
        }
        Ok(sf)
    }
}

impl Serialize for BlockSF {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlockSF {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// The four classical bilinear scoring functions expressible in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnownSf {
    DistMult,
    ComplEx,
    Analogy,
    SimplE,
}

impl KnownSf {
    pub const ALL: [KnownSf; 4] = [
        KnownSf::DistMult,
        KnownSf::ComplEx,
        KnownSf::Analogy,
        KnownSf::SimplE,
    ];

    /// The block grid of this scoring function.
    ///
    /// Complex-valued models map real parts to chunks (1, 2) and imaginary
    /// parts to chunks (3, 4).
    pub fn sf(self) -> BlockSF {
        let terms: &[(usize, usize, i8)] = match self {
            KnownSf::DistMult => &[(1, 1, 1), (2, 2, 2), (3, 3, 3), (4, 4, 4)],
            KnownSf::ComplEx => &[
                (1, 1, 1),
                (1, 3, 3),
                (3, 1, -3),
                (3, 3, 1),
                (2, 2, 2),
                (2, 4, 4),
                (4, 2, -4),
                (4, 4, 2),
            ],
            KnownSf::Analogy => &[
                (1, 1, 1),
                (2, 2, 2),
                (3, 3, 3),
                (3, 4, 4),
                (4, 3, -4),
                (4, 4, 3),
            ],
            KnownSf::SimplE => &[(1, 3, 1), (2, 4, 2), (3, 1, 3), (4, 2, 4)],
        };
        let mut sf = BlockSF::zero();
        for &(i, j, c) in terms {
            sf.cells[i - 1][j - 1] = c;
        }
        sf
    }

    pub fn name(self) -> &'static str {
        match self {
            KnownSf::DistMult => "distmult",
            KnownSf::ComplEx => "complex",
            KnownSf::Analogy => "analogy",
            KnownSf::SimplE => "simple",
        }
    }
}

impl FromStr for KnownSf {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distmult" => Ok(KnownSf::DistMult),
            "complex" => Ok(KnownSf::ComplEx),
            "analogy" => Ok(KnownSf::Analogy),
            "simple" | "simple/cp" | "cp" => Ok(KnownSf::SimplE),
            other => Err(Error::argument(format!("unknown scoring function name `{other}`"))),
        }
    }
}

/// Resolve `--sf` style input: a known model name or a grid in text form.
pub fn resolve_sf(text: &str) -> Result<BlockSF> {
    if let Ok(known) = text.parse::<KnownSf>() {
        return Ok(known.sf());
    }
    text.parse()
}

/// Entity and relation embedding matrices with chunked dimension `d`.
#[derive(Debug, Clone)]
pub struct EmbeddingTable<S: Scalar> {
    pub entity: Array2<S>,
    pub relation: Array2<S>,
    d: usize,
}

impl<S: Scalar> EmbeddingTable<S> {
    pub fn new(entity: Array2<S>, relation: Array2<S>) -> Result<Self> {
        let d = entity.ncols();
        if d == 0 || d % CHUNKS != 0 {
            return Err(Error::config(format!("embedding dimension {d} must be a positive multiple of 4")));
        }
        if relation.ncols() != d {
            return Err(Error::argument(format!(
                "relation dimension {} does not match entity dimension {d}",
                relation.ncols()
            )));
        }
        Ok(EmbeddingTable { entity, relation, d })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Chunk width `d / 4`.
    pub fn chunk(&self) -> usize {
        self.d / CHUNKS
    }

    pub fn num_entities(&self) -> usize {
        self.entity.nrows()
    }

    pub fn num_relations(&self) -> usize {
        self.relation.nrows()
    }

    pub fn entity_row(&self, e: usize) -> ArrayView1<'_, S> {
        self.entity.row(e)
    }

    pub fn relation_row(&self, r: usize) -> ArrayView1<'_, S> {
        self.relation.row(r)
    }
}

fn check_len<S: Scalar>(name: &str, v: ArrayView1<'_, S>, d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::argument(format!("{name} has length {}, expected {d}", v.len())));
    }
    Ok(())
}

fn check_dims<S: Scalar>(
    h: ArrayView1<'_, S>,
    r: ArrayView1<'_, S>,
    t: Option<ArrayView1<'_, S>>,
) -> Result<usize> {
    let d = h.len();
    if d == 0 || d % CHUNKS != 0 {
        return Err(Error::argument(format!("vector length {d} is not a positive multiple of 4")));
    }
    check_len("r", r, d)?;
    if let Some(t) = t {
        check_len("t", t, d)?;
    }
    Ok(d)
}

/// Per-chunk combination `q` of `h` and `r` such that `q · t` equals the
/// score for every tail `t`: chunk `j` of `q` is
/// `sum_i sign(a_ij) * h_i ∘ r_|a_ij|`.
///
/// Accumulated and returned in `f64` so that downstream ranking is stable
/// for single-precision tables.
pub fn relation_row_vector<S: Scalar>(
    sf: &BlockSF,
    h: ArrayView1<'_, S>,
    r: ArrayView1<'_, S>,
) -> Result<Array1<f64>> {
    let d = check_dims(h, r, None)?;
    let c = d / CHUNKS;
    let mut q = Array1::<f64>::zeros(d);
    for (i, j, cell) in sf.nonzero_cells() {
        let k = cell.unsigned_abs() as usize - 1;
        let sign = f64::from(cell.signum());
        for m in 0..c {
            q[j * c + m] += sign * h[i * c + m].as_f64() * r[k * c + m].as_f64();
        }
    }
    Ok(q)
}

/// Head-side counterpart of [`relation_row_vector`]: `p · h` equals the
/// score for every head `h`; chunk `i` of `p` is
/// `sum_j sign(a_ij) * t_j ∘ r_|a_ij|`.
pub fn relation_col_vector<S: Scalar>(
    sf: &BlockSF,
    t: ArrayView1<'_, S>,
    r: ArrayView1<'_, S>,
) -> Result<Array1<f64>> {
    let d = check_dims(t, r, None)?;
    let c = d / CHUNKS;
    let mut p = Array1::<f64>::zeros(d);
    for (i, j, cell) in sf.nonzero_cells() {
        let k = cell.unsigned_abs() as usize - 1;
        let sign = f64::from(cell.signum());
        for m in 0..c {
            p[i * c + m] += sign * t[j * c + m].as_f64() * r[k * c + m].as_f64();
        }
    }
    Ok(p)
}

#[inline]
fn dot_f64<S: Scalar>(q: &Array1<f64>, v: ArrayView1<'_, S>) -> f64 {
    let mut acc = 0.0;
    for (a, b) in q.iter().zip(v.iter()) {
        acc += a * b.as_f64();
    }
    acc
}

/// Score of one triple: `sum over nonzero cells of sign * <h_i, r_k, t_j>`.
pub fn score<S: Scalar>(
    sf: &BlockSF,
    h: ArrayView1<'_, S>,
    r: ArrayView1<'_, S>,
    t: ArrayView1<'_, S>,
) -> Result<f64> {
    check_dims(h, r, Some(t))?;
    let q = relation_row_vector(sf, h, r)?;
    Ok(dot_f64(&q, t))
}

/// Scores of `(h, r, e)` for every entity `e` in the table; entry `e` is
/// bitwise equal to `score(sf, h, r, entity_e)`.
pub fn score_all_tails<S: Scalar>(
    sf: &BlockSF,
    h: ArrayView1<'_, S>,
    r: ArrayView1<'_, S>,
    table: &EmbeddingTable<S>,
) -> Result<Array1<f64>> {
    if h.len() != table.dim() {
        return Err(Error::argument(format!(
            "query dimension {} does not match table dimension {}",
            h.len(),
            table.dim()
        )));
    }
    let q = relation_row_vector(sf, h, r)?;
    let mut out = Array1::<f64>::zeros(table.num_entities());
    for (e, row) in table.entity.rows().into_iter().enumerate() {
        out[e] = dot_f64(&q, row);
    }
    Ok(out)
}

/// Scores of `(e, r, t)` for every entity `e` in the table; entry `e`
/// equals `score(sf, entity_e, r, t)` up to summation order (the head side
/// factorizes through [`relation_col_vector`] instead of the row vector).
pub fn score_all_heads<S: Scalar>(
    sf: &BlockSF,
    t: ArrayView1<'_, S>,
    r: ArrayView1<'_, S>,
    table: &EmbeddingTable<S>,
) -> Result<Array1<f64>> {
    if t.len() != table.dim() {
        return Err(Error::argument(format!(
            "query dimension {} does not match table dimension {}",
            t.len(),
            table.dim()
        )));
    }
    let p = relation_col_vector(sf, t, r)?;
    let mut out = Array1::<f64>::zeros(table.num_entities());
    for (e, row) in table.entity.rows().into_iter().enumerate() {
        out[e] = dot_f64(&p, row);
    }
    Ok(out)
}
