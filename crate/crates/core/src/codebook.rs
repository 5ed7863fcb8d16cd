//! Common codebook, message mapping and collision statistics.
//!
//! Codewords are indexed `1..=2^J` at the public boundary. Message sub-blocks are read
//! big-endian: the first bit of a sub-block is its most significant bit.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{Cx, Real};

const MAGIC: &[u8; 8] = b"URACBK01";
const MAX_BITS: u32 = 30;

#[derive(Clone)]
enum Operator<T: Real> {
    Dft {
        forward: Arc<dyn Fft<T>>,
        inverse: Arc<dyn Fft<T>>,
    },
    Dense(Arc<Array2<Cx<T>>>),
}

/// Operation counts accumulated by a codebook's matrix products.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    /// Length-`2^J` FFTs executed.
    pub transforms: u64,
    /// Complex multiply-accumulates spent in dense products.
    pub dense_macs: u64,
}

#[derive(Default)]
struct Counters {
    transforms: AtomicU64,
    dense_macs: AtomicU64,
}

/// Codebook `C` of `2^J` unit-norm columns of length `n0`.
///
/// The DFT construction keeps `n0` distinct rows of the `2^J`-point DFT matrix scaled by
/// `1/sqrt(n0)`, so `C C^H = (2^J/n0) I`. Products with `C` and `C^H` then run through FFTs.
pub struct Codebook<T: Real> {
    n0: usize,
    bits: u32,
    seed: u64,
    rows: Vec<usize>,
    op: Operator<T>,
    counters: Counters,
}

impl<T: Real> fmt::Debug for Codebook<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Codebook")
            .field("n0", &self.n0)
            .field("bits", &self.bits)
            .field("seed", &self.seed)
            .field("dft", &self.is_dft())
            .finish()
    }
}

impl<T: Real> Clone for Codebook<T> {
    fn clone(&self) -> Self {
        Self {
            n0: self.n0,
            bits: self.bits,
            seed: self.seed,
            rows: self.rows.clone(),
            op: self.op.clone(),
            counters: Counters::default(),
        }
    }
}

fn check_bits(bits: u32) -> Result<usize> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::InvalidDimensions(format!(
            "J = {bits} must lie in [1, {MAX_BITS}]"
        )));
    }
    Ok(1usize << bits)
}

impl<T: Real> Codebook<T> {
    /// DFT-row codebook with `n0` rows drawn uniformly without replacement from `seed`.
    pub fn dft(n0: usize, bits: u32, seed: u64) -> Result<Self> {
        let size = check_bits(bits)?;
        if n0 == 0 || n0 > size {
            return Err(Error::InvalidDimensions(format!(
                "n0 = {n0} must lie in [1, 2^J = {size}]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = index::sample(&mut rng, size, n0).into_vec();
        rows.sort_unstable();
        Self::from_rows(bits, seed, rows)
    }

    /// DFT codebook from an explicit row selection.
    pub fn from_rows(bits: u32, seed: u64, rows: Vec<usize>) -> Result<Self> {
        let size = check_bits(bits)?;
        let n0 = rows.len();
        if n0 == 0 || n0 > size {
            return Err(Error::InvalidDimensions(format!(
                "{n0} selected rows for a {size}-point DFT"
            )));
        }
        let mut seen = vec![false; size];
        for &r in &rows {
            if r >= size || std::mem::replace(&mut seen[r], true) {
                return Err(Error::InvalidDimensions(format!(
                    "row selection entry {r} is out of range or repeated"
                )));
            }
        }
        let mut planner = FftPlanner::new();
        let op = Operator::Dft {
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        };
        Ok(Self { n0, bits, seed, rows, op, counters: Counters::default() })
    }

    /// General codebook from an explicit `n0 x 2^J` matrix. Products use dense algebra and
    /// the detector takes its general LMMSE path.
    pub fn from_matrix(matrix: Array2<Cx<T>>) -> Result<Self> {
        let (n0, size) = matrix.dim();
        if !size.is_power_of_two() || n0 == 0 || n0 > size {
            return Err(Error::InvalidDimensions(format!(
                "codebook matrix is {n0} x {size}; need n0 <= 2^J columns"
            )));
        }
        Ok(Self {
            n0,
            bits: size.trailing_zeros(),
            seed: 0,
            rows: Vec::new(),
            op: Operator::Dense(Arc::new(matrix)),
            counters: Counters::default(),
        })
    }

    /// Same matrix with the structure forgotten: products become dense and the detector
    /// uses the general LMMSE path.
    pub fn to_general(&self) -> Self {
        Self {
            n0: self.n0,
            bits: self.bits,
            seed: self.seed,
            rows: self.rows.clone(),
            op: Operator::Dense(Arc::new(self.to_dense())),
            counters: Counters::default(),
        }
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    /// Bits per sub-block `J`.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Number of codewords `2^J`.
    pub fn size(&self) -> usize {
        1 << self.bits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Selected DFT rows (empty for general codebooks).
    pub fn row_selection(&self) -> &[usize] {
        &self.rows
    }

    pub fn is_dft(&self) -> bool {
        matches!(self.op, Operator::Dft { .. })
    }

    /// `c` with `C C^H = c I` when the fast path applies (`2^J/n0` for DFT codebooks).
    pub fn frame_bound(&self) -> Option<T> {
        match self.op {
            Operator::Dft { .. } => Some(T::of_usize(self.size()) / T::of_usize(self.n0)),
            Operator::Dense(_) => None,
        }
    }

    /// Squared Frobenius norm of `C`.
    pub fn energy(&self) -> T {
        match &self.op {
            Operator::Dft { .. } => T::of_usize(self.size()),
            Operator::Dense(c) => c.iter().map(|z| z.norm_sqr()).sum(),
        }
    }

    fn scale(&self) -> T {
        T::one() / T::of_usize(self.n0).sqrt()
    }

    fn dft_entry(&self, row: usize, col: usize) -> Cx<T> {
        let size = self.size();
        let phase = ((row as u128 * col as u128) % size as u128) as f64;
        let angle = T::of(-2.0 * std::f64::consts::PI * phase / size as f64);
        Complex::from_polar(self.scale(), angle)
    }

    /// Column `index` (1-based).
    pub fn codeword(&self, index: usize) -> Result<Vec<Cx<T>>> {
        if index == 0 || index > self.size() {
            return Err(Error::IndexOutOfRange { index, max: self.size() });
        }
        Ok(self.column(index - 1))
    }

    pub(crate) fn column(&self, col: usize) -> Vec<Cx<T>> {
        match &self.op {
            Operator::Dft { .. } => self.rows.iter().map(|&r| self.dft_entry(r, col)).collect(),
            Operator::Dense(m) => m.column(col).to_vec(),
        }
    }

    /// Materialized `n0 x 2^J` matrix.
    pub fn to_dense(&self) -> Array2<Cx<T>> {
        match &self.op {
            Operator::Dft { .. } => {
                Array2::from_shape_fn((self.n0, self.size()), |(k, i)| self.dft_entry(self.rows[k], i))
            }
            Operator::Dense(m) => (**m).clone(),
        }
    }

    /// `C X` for a `2^J x M` matrix.
    pub fn apply(&self, x: ArrayView2<Cx<T>>) -> Array2<Cx<T>> {
        assert_eq!(x.nrows(), self.size(), "apply: row count must be 2^J");
        let cols = x.ncols();
        match &self.op {
            Operator::Dft { forward, .. } => {
                let size = self.size();
                let scale = self.scale();
                let mut out = Array2::zeros((self.n0, cols));
                let mut buf = vec![Cx::<T>::default(); size];
                let mut scratch = vec![Cx::<T>::default(); forward.get_inplace_scratch_len()];
                for m in 0..cols {
                    buf.iter_mut().zip(x.column(m)).for_each(|(b, &v)| *b = v);
                    forward.process_with_scratch(&mut buf, &mut scratch);
                    for (k, &r) in self.rows.iter().enumerate() {
                        out[(k, m)] = buf[r] * scale;
                    }
                }
                self.counters.transforms.fetch_add(cols as u64, Ordering::Relaxed);
                out
            }
            Operator::Dense(c) => {
                self.counters
                    .dense_macs
                    .fetch_add((self.n0 * self.size() * cols) as u64, Ordering::Relaxed);
                c.dot(&x)
            }
        }
    }

    /// `C^H Y` for an `n0 x M` matrix.
    pub fn adjoint(&self, y: ArrayView2<Cx<T>>) -> Array2<Cx<T>> {
        assert_eq!(y.nrows(), self.n0, "adjoint: row count must be n0");
        let cols = y.ncols();
        match &self.op {
            Operator::Dft { inverse, .. } => {
                let size = self.size();
                let scale = self.scale();
                let mut out = Array2::zeros((size, cols));
                let mut buf = vec![Cx::<T>::default(); size];
                let mut scratch = vec![Cx::<T>::default(); inverse.get_inplace_scratch_len()];
                for m in 0..cols {
                    buf.fill(Cx::default());
                    for (k, &r) in self.rows.iter().enumerate() {
                        buf[r] = y[(k, m)];
                    }
                    inverse.process_with_scratch(&mut buf, &mut scratch);
                    for (o, &b) in out.column_mut(m).iter_mut().zip(&buf) {
                        *o = b * scale;
                    }
                }
                self.counters.transforms.fetch_add(cols as u64, Ordering::Relaxed);
                out
            }
            Operator::Dense(c) => {
                self.counters
                    .dense_macs
                    .fetch_add((self.n0 * self.size() * cols) as u64, Ordering::Relaxed);
                c.t().mapv(|z| z.conj()).dot(&y)
            }
        }
    }

    /// `C C^H` as a dense `n0 x n0` matrix.
    pub fn gram(&self) -> Array2<Cx<T>> {
        match self.frame_bound() {
            Some(c) => Array2::from_diag_elem(self.n0, Cx::new(c, T::zero())),
            None => {
                let d = self.to_dense();
                d.dot(&d.t().mapv(|z| z.conj()))
            }
        }
    }

    pub fn op_counts(&self) -> OpCounts {
        OpCounts {
            transforms: self.counters.transforms.load(Ordering::Relaxed),
            dense_macs: self.counters.dense_macs.load(Ordering::Relaxed),
        }
    }

    pub fn reset_op_counts(&self) {
        self.counters.transforms.store(0, Ordering::Relaxed);
        self.counters.dense_macs.store(0, Ordering::Relaxed);
    }

    fn header_bytes(&self) -> Result<Vec<u8>> {
        if !self.is_dft() && self.rows.is_empty() {
            return Err(Error::CodebookFormat(
                "only DFT-row codebooks have a header representation".into(),
            ));
        }
        let mut out = Vec::with_capacity(24 + 4 * self.n0);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n0 as u32).to_le_bytes());
        out.extend_from_slice(&self.bits.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for &r in &self.rows {
            out.extend_from_slice(&(r as u32).to_le_bytes());
        }
        Ok(out)
    }

    /// Writes the header `(magic, n0, J, seed, row_selection)`, all little-endian.
    /// The matrix is rebuilt from the rows on load.
    pub fn write_header<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.header_bytes()?)?;
        Ok(())
    }

    pub fn read_header<R: Read>(mut r: R) -> Result<Self> {
        let mut fixed = [0u8; 24];
        r.read_exact(&mut fixed)
            .map_err(|e| Error::CodebookFormat(format!("truncated header: {e}")))?;
        if &fixed[..8] != MAGIC {
            return Err(Error::CodebookFormat("bad magic".into()));
        }
        let n0 = u32::from_le_bytes(fixed[8..12].try_into().unwrap()) as usize;
        let bits = u32::from_le_bytes(fixed[12..16].try_into().unwrap());
        let seed = u64::from_le_bytes(fixed[16..24].try_into().unwrap());
        let size = check_bits(bits)?;
        if n0 == 0 || n0 > size {
            return Err(Error::CodebookFormat(format!("n0 = {n0} invalid for J = {bits}")));
        }
        let mut raw = vec![0u8; 4 * n0];
        r.read_exact(&mut raw)
            .map_err(|e| Error::CodebookFormat(format!("truncated row selection: {e}")))?;
        let rows = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        Self::from_rows(bits, seed, rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.header_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_header(std::fs::File::open(path)?)
    }

    /// Hex SHA-256 of the header bytes.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.header_bytes()?)))
    }
}

/// Maps a `L*J`-bit message to `L` codeword indices in `[1, 2^J]`.
pub fn encode_message(bits: &[bool], bits_per_block: u32, blocks: usize) -> Result<Vec<usize>> {
    check_bits(bits_per_block)?;
    let j = bits_per_block as usize;
    if bits.len() != j * blocks {
        return Err(Error::InvalidLength { len: bits.len(), expected: j * blocks });
    }
    Ok(bits
        .chunks_exact(j)
        .map(|block| 1 + block.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize))
        .collect())
}

/// Inverse of the per-block mapping of [`encode_message`].
pub fn demap_index(index: usize, bits_per_block: u32) -> Result<Vec<bool>> {
    let size = check_bits(bits_per_block)?;
    if index == 0 || index > size {
        return Err(Error::IndexOutOfRange { index, max: size });
    }
    let v = index - 1;
    Ok((0..bits_per_block).rev().map(|k| (v >> k) & 1 == 1).collect())
}

/// Probability that some other user shares a user's codeword in at least one of `L`
/// sub-slots: `1 - (1 - 2^-J)^((K_a - 1) L)`.
pub fn collision_probability(active: usize, bits_per_block: u32, blocks: usize) -> f64 {
    if active <= 1 {
        return 0.0;
    }
    let exponent = ((active - 1) * blocks) as f64;
    -(exponent * (-(0.5f64).powi(bits_per_block as i32)).ln_1p()).exp_m1()
}

/// Positions in `indices` whose codeword is also chosen by another position.
pub fn colliding_positions(indices: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_by_key(|&p| indices[p]);
    let mut hit = vec![false; indices.len()];
    for w in order.windows(2) {
        if indices[w[0]] == indices[w[1]] {
            hit[w[0]] = true;
            hit[w[1]] = true;
        }
    }
    (0..indices.len()).filter(|&p| hit[p]).collect()
}

/// Messages of a set of users together with their per-slot indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageSet {
    pub bits_per_block: u32,
    pub blocks: usize,
    pub bits: Vec<Vec<bool>>,
    /// `indices[k][l]`: codeword of user `k` in slot `l`, 1-based.
    pub indices: Vec<Vec<usize>>,
}

impl MessageSet {
    pub fn from_bits(bits: Vec<Vec<bool>>, bits_per_block: u32, blocks: usize) -> Result<Self> {
        let indices = bits
            .iter()
            .map(|b| encode_message(b, bits_per_block, blocks))
            .collect::<Result<_>>()?;
        Ok(Self { bits_per_block, blocks, bits, indices })
    }

    /// Uniformly random messages for `users` users.
    pub fn random<R: Rng>(users: usize, bits_per_block: u32, blocks: usize, rng: &mut R) -> Result<Self> {
        let len = bits_per_block as usize * blocks;
        let bits = (0..users).map(|_| (0..len).map(|_| rng.gen::<bool>()).collect()).collect();
        Self::from_bits(bits, bits_per_block, blocks)
    }

    /// Uniformly random messages conditioned on no two users sharing a codeword in any slot.
    /// Slots are independent, so each slot draws an ordered set of distinct indices.
    pub fn random_distinct<R: Rng>(users: usize, bits_per_block: u32, blocks: usize, rng: &mut R) -> Result<Self> {
        let size = check_bits(bits_per_block)?;
        if users > size {
            return Err(Error::TooManyActive { active: users, total: size });
        }
        let mut bits = vec![Vec::with_capacity(bits_per_block as usize * blocks); users];
        for _ in 0..blocks {
            for (k, i) in index::sample(rng, size, users).into_iter().enumerate() {
                bits[k].extend(demap_index(i + 1, bits_per_block)?);
            }
        }
        Self::from_bits(bits, bits_per_block, blocks)
    }

    /// Codeword indices of all users in slot `l` (0-based slot).
    pub fn slot(&self, l: usize) -> Vec<usize> {
        self.indices.iter().map(|ix| ix[l]).collect()
    }

    pub fn has_collision(&self) -> bool {
        (0..self.blocks).any(|l| !colliding_positions(&self.slot(l)).is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn distinct_messages_have_no_collisions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MessageSet::random_distinct(150, 12, 8, &mut rng).unwrap();
        assert!(!m.has_collision());
        assert_eq!(m.bits[0].len(), 96);
        assert!(MessageSet::random_distinct(5, 2, 1, &mut rng).is_err());
    }

    #[test]
    fn dft_frame_and_column_norms() {
        let cb = Codebook::<f64>::dft(64, 8, 7).unwrap();
        let c = cb.to_dense();
        let g = c.dot(&c.t().mapv(|z| z.conj()));
        for ((i, j), z) in g.indexed_iter() {
            let want = if i == j { 4.0 } else { 0.0 };
            assert!((z.re - want).abs() < 1e-9 && z.im.abs() < 1e-9);
        }
        for col in c.columns() {
            let n: f64 = col.iter().map(|z| z.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let mut rows = cb.row_selection().to_vec();
        rows.dedup();
        assert_eq!(rows.len(), 64);
    }

    #[test]
    fn default_dimensions_have_scaled_identity_gram() {
        let cb = Codebook::<f64>::dft(1024, 12, 7).unwrap();
        assert_eq!(cb.frame_bound(), Some(4.0));
        // spot-check C C^H through the fast operators on a few unit vectors
        for &k in &[0usize, 17, 1023] {
            let mut e = Array2::<Cx<f64>>::zeros((1024, 1));
            e[(k, 0)] = Cx::new(1.0, 0.0);
            let back = cb.apply(cb.adjoint(e.view()).view());
            for (i, z) in back.column(0).iter().enumerate() {
                let want = if i == k { 4.0 } else { 0.0 };
                assert!((z.re - want).abs() < 1e-9 && z.im.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn full_dft_is_unitary() {
        let cb = Codebook::<f64>::dft(32, 5, 1).unwrap();
        let c = cb.to_dense();
        let g = c.t().mapv(|z| z.conj()).dot(&c);
        for ((i, j), z) in g.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((z - Cx::new(want, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_oversized_n0() {
        assert!(matches!(Codebook::<f64>::dft(300, 8, 0), Err(Error::InvalidDimensions(_))));
    }

    #[test]
    fn fast_products_match_dense() {
        let cb = Codebook::<f64>::dft(24, 6, 3).unwrap();
        let dense = cb.to_general();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((64, 3), |_| Cx::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let y = Array2::from_shape_fn((24, 3), |_| Cx::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let d1 = &cb.apply(x.view()) - &dense.apply(x.view());
        let d2 = &cb.adjoint(y.view()) - &dense.adjoint(y.view());
        assert!(d1.iter().chain(d2.iter()).all(|z| z.norm() < 1e-12));
        assert_eq!(cb.op_counts().transforms, 6);
        assert_eq!(dense.op_counts().dense_macs, 2 * 24 * 64 * 3);
        assert_eq!(dense.op_counts().transforms, 0);
    }

    #[test]
    fn header_round_trip_and_hash() {
        let cb = Codebook::<f64>::dft(100, 9, 42).unwrap();
        let mut buf = Vec::new();
        cb.write_header(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 400);
        let back = Codebook::<f64>::read_header(buf.as_slice()).unwrap();
        assert_eq!(back.row_selection(), cb.row_selection());
        assert_eq!(back.seed(), 42);
        assert_eq!(back.content_hash().unwrap(), cb.content_hash().unwrap());
        assert_ne!(
            Codebook::<f64>::dft(100, 9, 43).unwrap().content_hash().unwrap(),
            cb.content_hash().unwrap()
        );
        buf[0] = b'X';
        assert!(Codebook::<f64>::read_header(buf.as_slice()).is_err());
    }

    #[test]
    fn header_rejects_repeated_rows() {
        let cb = Codebook::<f64>::dft(4, 4, 1).unwrap();
        let mut buf = Vec::new();
        cb.write_header(&mut buf).unwrap();
        let first = buf[24..28].to_vec();
        buf[28..32].copy_from_slice(&first);
        assert!(Codebook::<f64>::read_header(buf.as_slice()).is_err());
    }

    #[test]
    fn message_examples() {
        assert_eq!(encode_message(&[false; 96], 12, 8).unwrap(), vec![1; 8]);
        assert_eq!(encode_message(&[true; 96], 12, 8).unwrap(), vec![4096; 8]);
        assert!(matches!(encode_message(&[true; 95], 12, 8), Err(Error::InvalidLength { .. })));
        assert_eq!(demap_index(1, 12).unwrap(), vec![false; 12]);
        let two = demap_index(2, 12).unwrap();
        assert!(two[..11].iter().all(|b| !b) && two[11]);
        assert!(demap_index(0, 12).is_err());
        assert!(demap_index(4097, 12).is_err());
    }

    #[test]
    fn exhaustive_index_round_trip() {
        for i in 1..=4096 {
            let bits = demap_index(i, 12).unwrap();
            assert_eq!(encode_message(&bits, 12, 1).unwrap(), vec![i]);
        }
    }

    #[test]
    fn collision_values() {
        assert_eq!(collision_probability(1, 12, 8), 0.0);
        let want = 1.0 - (1.0 - 1.0 / 4096.0f64).powi(49 * 8);
        assert!((collision_probability(50, 12, 8) - want).abs() < 1e-12);
        assert!((collision_probability(50, 12, 8) - 0.0913).abs() < 5e-4);
        let mut prev = 1.0;
        for j in 4..30 {
            let p = collision_probability(50, j, 8);
            assert!(p <= prev);
            prev = p;
        }
        assert_eq!(colliding_positions(&[3, 1, 3, 2, 1]), vec![0, 1, 2, 4]);
    }

    proptest! {
        #[test]
        fn message_round_trip(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = MessageSet::random(1, 12, 8, &mut rng).unwrap();
            for (l, &ix) in set.indices[0].iter().enumerate() {
                prop_assert_eq!(demap_index(ix, 12).unwrap(), set.bits[0][12 * l..12 * (l + 1)].to_vec());
            }
        }

        #[test]
        fn collision_monotone(k in 1usize..500, j in 1u32..20, l in 1usize..16) {
            let p = collision_probability(k, j, l);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(collision_probability(k + 1, j, l) >= p);
            prop_assert!(collision_probability(k, j, l + 1) >= p);
            prop_assert!(collision_probability(k, j + 1, l) <= p);
        }
    }
}
