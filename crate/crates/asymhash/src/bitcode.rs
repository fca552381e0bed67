//! Packed binary code storage and the exact Hamming / inner-product kernels
//! used by every other module.
//!
//! Codes live in `{-1, +1}^k` but are stored one bit per entry (`1` encodes
//! `+1`), column-major, 64 bits to a word, so that a code pair is compared
//! with one XOR + popcount per word. For `u, v` in `{-1, +1}^k` the two
//! kernels are tied by `<u, v> = k - 2 * d_h(u, v)`.

use crate::{Error, Result};

const WORD_BITS: usize = 64;

/// Maximum supported code length in bits.
pub const MAX_BITS: usize = 1024;

#[inline]
fn words_for(k: usize) -> usize {
    k.div_ceil(WORD_BITS)
}

/// Packs a `{-1, +1}` code of length `k` into little-endian bit words.
///
/// Bit `j` is set iff `code[j] == +1`; bits at positions `>= k` stay zero.
pub fn pack(code: &[i8]) -> Result<Vec<u64>> {
    if code.is_empty() {
        return Err(Error::invalid("cannot pack an empty code (k = 0)"));
    }
    if code.len() > MAX_BITS {
        return Err(Error::invalid(format!(
            "code length {} exceeds the supported maximum {MAX_BITS}",
            code.len()
        )));
    }
    let mut words = vec![0u64; words_for(code.len())];
    for (j, &c) in code.iter().enumerate() {
        match c {
            1 => words[j / WORD_BITS] |= 1u64 << (j % WORD_BITS),
            -1 => {}
            other => {
                return Err(Error::invalid(format!(
                    "code entry {other} at position {j} is not in {{-1, +1}}"
                )))
            }
        }
    }
    Ok(words)
}

/// Inverse of [`pack`].
pub fn unpack(words: &[u64], k: usize) -> Vec<i8> {
    (0..k)
        .map(|j| {
            if words[j / WORD_BITS] >> (j % WORD_BITS) & 1 == 1 {
                1
            } else {
                -1
            }
        })
        .collect()
}

/// Hamming distance over the `k` live bits of two packed codes.
#[inline]
pub fn hamming_words(u: &[u64], v: &[u64]) -> u32 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| (a ^ b).count_ones()).sum()
}

/// Inner product `sum_j u_j v_j = k - 2 * d_h(u, v)` of two packed codes.
#[inline]
pub fn inner_product_words(u: &[u64], v: &[u64], k: usize) -> i64 {
    k as i64 - 2 * hamming_words(u, v) as i64
}

/// `k x n` binary codes in `{-1, +1}` semantics, bit-packed per column.
///
/// Immutable sharing across threads is safe; training-time bit flips go
/// through `set_row`/`push_row` on the single owning trainer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodeMatrix {
    k: usize,
    n: usize,
    words_per_code: usize,
    words: Vec<u64>,
}

impl PackedCodeMatrix {
    /// Packs `n` columns of a `{-1, +1}` code collection.
    pub fn from_columns(k: usize, columns: &[Vec<i8>]) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k = 0"));
        }
        let wpc = words_for(k);
        let mut words = Vec::with_capacity(wpc * columns.len());
        for col in columns {
            if col.len() != k {
                return Err(Error::dims(format!(
                    "column has {} bits, expected {k}",
                    col.len()
                )));
            }
            words.extend(pack(col)?);
        }
        Ok(PackedCodeMatrix {
            k,
            n: columns.len(),
            words_per_code: wpc,
            words,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn words_per_code(&self) -> usize {
        self.words_per_code
    }

    #[inline]
    pub fn column(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_code..(i + 1) * self.words_per_code]
    }

    pub fn column_signs(&self, i: usize) -> Vec<i8> {
        unpack(self.column(i), self.k)
    }

    /// Raw packed words, column-major; used by the code file writer.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Rebuilds a matrix from raw words (the code file reader).
    pub fn from_words(k: usize, n: usize, words: Vec<u64>) -> Result<Self> {
        if k == 0 || k > MAX_BITS {
            return Err(Error::invalid(format!("unsupported k = {k}")));
        }
        let wpc = words_for(k);
        if words.len() != wpc * n {
            return Err(Error::dims(format!(
                "expected {} words for k={k}, n={n}, got {}",
                wpc * n,
                words.len()
            )));
        }
        // Reject dirty padding up front so every downstream kernel can trust it.
        let tail = k % WORD_BITS;
        if tail != 0 {
            let mask = !0u64 << tail;
            for c in 0..n {
                if words[c * wpc + wpc - 1] & mask != 0 {
                    return Err(Error::Format(format!("nonzero padding bits in column {c}")));
                }
            }
        }
        Ok(PackedCodeMatrix {
            k,
            n,
            words_per_code: wpc,
            words,
        })
    }

    /// Inner product between column `i` of `self` and column `j` of `other`.
    pub fn inner_product(&self, i: usize, other: &Self, j: usize) -> Result<i64> {
        if self.k != other.k {
            return Err(Error::dims(format!(
                "k mismatch: {} vs {}",
                self.k, other.k
            )));
        }
        Ok(inner_product_words(self.column(i), other.column(j), self.k))
    }

    /// Hamming distance between column `i` of `self` and column `j` of `other`.
    pub fn hamming(&self, i: usize, other: &Self, j: usize) -> Result<u32> {
        if self.k != other.k {
            return Err(Error::dims(format!(
                "k mismatch: {} vs {}",
                self.k, other.k
            )));
        }
        Ok(hamming_words(self.column(i), other.column(j)))
    }

    pub fn to_sign_matrix(&self) -> SignMatrix {
        let mut m = SignMatrix::filled(self.k, self.n, -1);
        for i in 0..self.n {
            let col = self.column_signs(i);
            for (t, &c) in col.iter().enumerate() {
                m.set(t, i, c);
            }
        }
        m
    }
}

/// Dense `{-1, +1}` matrix, `k` code rows by `n` items, row-major.
///
/// This is the trainers' working representation; it converts losslessly to
/// and from [`PackedCodeMatrix`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMatrix {
    k: usize,
    n: usize,
    data: Vec<i8>,
}

impl SignMatrix {
    pub fn filled(k: usize, n: usize, value: i8) -> Self {
        assert!(value == 1 || value == -1);
        SignMatrix {
            k,
            n,
            data: vec![value; k * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<i8>>) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        for r in &rows {
            if r.len() != n {
                return Err(Error::dims("ragged rows".to_string()));
            }
            if r.iter().any(|&v| v != 1 && v != -1) {
                return Err(Error::invalid("entry not in {-1, +1}"));
            }
        }
        Ok(SignMatrix {
            k,
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize) -> i8 {
        self.data[t * self.n + i]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, v: i8) {
        debug_assert!(v == 1 || v == -1);
        self.data[t * self.n + i] = v;
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[i8] {
        &self.data[t * self.n..(t + 1) * self.n]
    }

    pub fn set_row(&mut self, t: usize, row: &[i8]) {
        assert_eq!(row.len(), self.n);
        self.data[t * self.n..(t + 1) * self.n].copy_from_slice(row);
    }

    /// Appends one more bit (row) to every code.
    pub fn push_row(&mut self, row: &[i8]) {
        assert_eq!(row.len(), self.n);
        self.data.extend_from_slice(row);
        self.k += 1;
    }

    /// Drops the last bit of every code.
    pub fn pop_row(&mut self) {
        assert!(self.k > 0);
        self.k -= 1;
        self.data.truncate(self.k * self.n);
    }

    /// Column `i` as a `{-1, +1}` vector of length `k`.
    pub fn column(&self, i: usize) -> Vec<i8> {
        (0..self.k).map(|t| self.get(t, i)).collect()
    }

    pub fn to_packed(&self) -> PackedCodeMatrix {
        let cols: Vec<Vec<i8>> = (0..self.n).map(|i| self.column(i)).collect();
        PackedCodeMatrix::from_columns(self.k, &cols).expect("sign matrix entries are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_code(rng: &mut impl Rng, k: usize) -> Vec<i8> {
        (0..k)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect()
    }

    /// Direct `{-1,+1}` dot product, the reference the kernels are checked against.
    fn dot_oracle(u: &[i8], v: &[i8]) -> i64 {
        u.iter().zip(v).map(|(&a, &b)| a as i64 * b as i64).sum()
    }

    #[test]
    fn pack_all_ones_sets_low_bits() {
        let w = pack(&[1, 1, 1, 1]).unwrap();
        assert_eq!(w, vec![0b1111]);
    }

    #[test]
    fn pack_all_minus_is_zero_word() {
        let w = pack(&[-1, -1]).unwrap();
        assert_eq!(w, vec![0u64]);
    }

    #[test]
    fn pack_rejects_bad_entries_and_empty() {
        assert!(pack(&[]).is_err());
        assert!(pack(&[1, 0, -1]).is_err());
        assert!(pack(&[2]).is_err());
    }

    #[test]
    fn pack_unpack_round_trip_across_word_boundaries() {
        let mut rng = crate::seed_stream(11, "test/bitcode");
        for &k in &[1usize, 63, 64, 65] {
            for _ in 0..250 {
                let code = random_code(&mut rng, k);
                let packed = pack(&code).unwrap();
                assert_eq!(unpack(&packed, k), code);
                assert_eq!(pack(&unpack(&packed, k)).unwrap(), packed);
            }
        }
    }

    #[test]
    fn padding_bits_stay_zero() {
        let code: Vec<i8> = (0..65).map(|j| if j % 2 == 0 { 1 } else { -1 }).collect();
        let w = pack(&code).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1] & (!0u64 << 1), 0);
    }

    #[test]
    fn inner_product_identical_and_complementary() {
        let u = pack(&[1, -1, 1, 1, -1, -1, 1, 1]).unwrap();
        let neg = pack(&[-1, 1, -1, -1, 1, 1, -1, -1]).unwrap();
        assert_eq!(inner_product_words(&u, &u, 8), 8);
        assert_eq!(inner_product_words(&u, &neg, 8), -8);
    }

    #[test]
    fn inner_product_orthogonal_example() {
        let u = pack(&[1, -1, 1, -1]).unwrap();
        let v = pack(&[1, 1, -1, -1]).unwrap();
        assert_eq!(inner_product_words(&u, &v, 4), 0);
        assert_eq!(dot_oracle(&[1, -1, 1, -1], &[1, 1, -1, -1]), 0);
    }

    #[test]
    fn hamming_identical_and_complementary() {
        let k = 16;
        let code: Vec<i8> = (0..k).map(|j| if j % 3 == 0 { 1 } else { -1 }).collect();
        let neg: Vec<i8> = code.iter().map(|&c| -c).collect();
        let u = pack(&code).unwrap();
        let v = pack(&neg).unwrap();
        assert_eq!(hamming_words(&u, &u), 0);
        assert_eq!(hamming_words(&u, &v), k as u32);
    }

    #[test]
    fn kernels_agree_with_dot_oracle_and_each_other() {
        let mut rng = crate::seed_stream(12, "test/bitcode");
        for trial in 0..1000 {
            let k = 1 + (trial % 130);
            let a = random_code(&mut rng, k);
            let b = random_code(&mut rng, k);
            let (pa, pb) = (pack(&a).unwrap(), pack(&b).unwrap());
            let ip = inner_product_words(&pa, &pb, k);
            assert_eq!(ip, dot_oracle(&a, &b));
            assert_eq!(ip, k as i64 - 2 * hamming_words(&pa, &pb) as i64);
            assert_eq!(ip, inner_product_words(&pb, &pa, k));
            assert_eq!(
                (ip % 2 != 0),
                (k % 2 != 0),
                "parity of <u,v> equals parity of k"
            );
        }
    }

    #[test]
    fn flipping_one_bit_moves_inner_product_by_two() {
        let mut rng = crate::seed_stream(13, "test/bitcode");
        let k = 70;
        let a = random_code(&mut rng, k);
        let b = random_code(&mut rng, k);
        let base = dot_oracle(&a, &b);
        for j in 0..k {
            let mut a2 = a.clone();
            a2[j] = -a2[j];
            let ip = inner_product_words(&pack(&a2).unwrap(), &pack(&b).unwrap(), k);
            assert_eq!((ip - base).abs(), 2);
        }
    }

    #[test]
    fn matrix_checks_k_and_self_inner_product() {
        let m = PackedCodeMatrix::from_columns(5, &[vec![1, 1, -1, 1, -1], vec![-1; 5]]).unwrap();
        let other = PackedCodeMatrix::from_columns(4, &[vec![1, 1, 1, 1]]).unwrap();
        assert!(m.inner_product(0, &other, 0).is_err());
        assert!(m.hamming(0, &other, 0).is_err());
        for i in 0..m.n() {
            assert_eq!(m.inner_product(i, &m, i).unwrap(), m.k() as i64);
        }
    }

    #[test]
    fn sign_matrix_round_trips_through_packed() {
        let mut rng = crate::seed_stream(14, "test/bitcode");
        let rows: Vec<Vec<i8>> = (0..9).map(|_| random_code(&mut rng, 23)).collect();
        let s = SignMatrix::from_rows(rows).unwrap();
        let p = s.to_packed();
        assert_eq!(p.to_sign_matrix(), s);
    }

    #[test]
    fn from_words_rejects_dirty_padding() {
        let mut words = pack(&[1, -1, 1]).unwrap();
        words[0] |= 1 << 20;
        assert!(PackedCodeMatrix::from_words(3, 1, words).is_err());
    }

    proptest! {
        #[test]
        fn prop_pack_round_trip(bits in proptest::collection::vec(any::<bool>(), 1..200)) {
            let code: Vec<i8> = bits.iter().map(|&b| if b { 1 } else { -1 }).collect();
            let packed = pack(&code).unwrap();
            prop_assert_eq!(unpack(&packed, code.len()), code);
        }

        #[test]
        fn prop_kernel_identity(
            a in proptest::collection::vec(any::<bool>(), 1..200),
            b in proptest::collection::vec(any::<bool>(), 1..200),
        ) {
            let k = a.len().min(b.len());
            let ca: Vec<i8> = a[..k].iter().map(|&x| if x { 1 } else { -1 }).collect();
            let cb: Vec<i8> = b[..k].iter().map(|&x| if x { 1 } else { -1 }).collect();
            let (pa, pb) = (pack(&ca).unwrap(), pack(&cb).unwrap());
            let ip = inner_product_words(&pa, &pb, k);
            prop_assert_eq!(ip, k as i64 - 2 * hamming_words(&pa, &pb) as i64);
            prop_assert_eq!(ip, dot_oracle(&ca, &cb));
        }
    }
}
