//! 2x2 Alamouti block algebra, M-PSK alphabets, differential encoding and
//! maximum-likelihood detection.
//!
//! Every 2x2 matrix that appears in the link model (codewords, received
//! blocks, channel blocks, compensation matrices) has the orthogonal
//! structure
//!
//! ```text
//!   [  x1   x2 ]
//!   [ -x2*  x1*]
//! ```
//!
//! which is closed under products, sums, Hermitian transpose, elementwise
//! conjugation and real scaling, and satisfies `A A^H = (|x1|^2 + |x2|^2) I`.
//! Representing a block by its defining pair `(x1, x2)` keeps all of the
//! block arithmetic to a handful of complex multiplies.

use crate::{Error, Result, C64};

/// Tolerance for the unit-power check in [`diff_encode`].
pub const POWER_TOL: f64 = 1e-9;

/// A 2x2 complex matrix with the Alamouti structure `[[x1, x2], [-x2*, x1*]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlamoutiMatrix {
    pub x1: C64,
    pub x2: C64,
}

impl AlamoutiMatrix {
    pub const ZERO: Self = Self {
        x1: C64::new(0.0, 0.0),
        x2: C64::new(0.0, 0.0),
    };

    pub const IDENTITY: Self = Self {
        x1: C64::new(1.0, 0.0),
        x2: C64::new(0.0, 0.0),
    };

    pub fn new(x1: C64, x2: C64) -> Self {
        Self { x1, x2 }
    }

    /// The diagonal Alamouti matrix `diag(c, c*)`.
    pub fn diag(c: C64) -> Self {
        Self {
            x1: c,
            x2: C64::new(0.0, 0.0),
        }
    }

    /// Matrix product; the result is again Alamouti.
    pub fn mul(&self, rhs: &Self) -> Self {
        Self {
            x1: self.x1 * rhs.x1 - self.x2 * rhs.x2.conj(),
            x2: self.x1 * rhs.x2 + self.x2 * rhs.x1.conj(),
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Self {
            x1: self.x1 + rhs.x1,
            x2: self.x2 + rhs.x2,
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        Self {
            x1: self.x1 - rhs.x1,
            x2: self.x2 - rhs.x2,
        }
    }

    /// Hermitian transpose, `A^H = [[x1*, -x2], [x2*, x1]]`.
    pub fn hermitian(&self) -> Self {
        Self {
            x1: self.x1.conj(),
            x2: -self.x2,
        }
    }

    /// Elementwise conjugate (still Alamouti).
    pub fn conj(&self) -> Self {
        Self {
            x1: self.x1.conj(),
            x2: self.x2.conj(),
        }
    }

    /// Real scaling. Complex scaling would break the structure.
    pub fn scale(&self, s: f64) -> Self {
        Self {
            x1: self.x1 * s,
            x2: self.x2 * s,
        }
    }

    /// `|x1|^2 + |x2|^2`, the scalar in `A A^H = power * I` (and the
    /// determinant).
    pub fn power(&self) -> f64 {
        self.x1.norm_sqr() + self.x2.norm_sqr()
    }

    /// Squared Frobenius norm (`2 * power`).
    pub fn frob_sq(&self) -> f64 {
        2.0 * self.power()
    }

    /// `A^{-1} = A^H / power`; errors on (numerically) singular blocks.
    pub fn inverse(&self) -> Result<Self> {
        let p = self.power();
        if p < 1e-300 {
            return Err(Error::SingularBlock(p));
        }
        Ok(self.hermitian().scale(1.0 / p))
    }

    /// Entry access with 0-based row/column, expanding the structure.
    pub fn entry(&self, row: usize, col: usize) -> C64 {
        match (row, col) {
            (0, 0) => self.x1,
            (0, 1) => self.x2,
            (1, 0) => -self.x2.conj(),
            (1, 1) => self.x1.conj(),
            _ => panic!("entry index out of range"),
        }
    }

    /// `max |[A A^H - I]_{ij}|`, which reduces to `|power - 1|`.
    pub fn unitarity_error(&self) -> f64 {
        (self.power() - 1.0).abs()
    }

    pub fn is_finite(&self) -> bool {
        self.x1.re.is_finite()
            && self.x1.im.is_finite()
            && self.x2.re.is_finite()
            && self.x2.im.is_finite()
    }
}

/// An M-PSK constellation with Gray bit labels.
///
/// Point `m` is `exp(j 2 pi m / M)`; the bit label of point `m` is the
/// binary-reflected Gray code `m ^ (m >> 1)`, so angularly adjacent points
/// differ in exactly one bit.
#[derive(Debug, Clone)]
pub struct PskAlphabet {
    order: usize,
    points: Vec<C64>,
    /// bit label -> point index
    label_to_point: Vec<usize>,
}

impl PskAlphabet {
    pub fn new(order: usize) -> Result<Self> {
        if !matches!(order, 2 | 4 | 8) {
            return Err(Error::UnsupportedModulation(order));
        }
        let points = (0..order)
            .map(|m| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / order as f64))
            .collect();
        let mut label_to_point = vec![0usize; order];
        for m in 0..order {
            label_to_point[m ^ (m >> 1)] = m;
        }
        Ok(Self {
            order,
            points,
            label_to_point,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.order.trailing_zeros()
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> C64 {
        self.points[index]
    }

    /// Gray label of a point index.
    pub fn label_of(&self, index: usize) -> usize {
        index ^ (index >> 1)
    }

    /// Point carrying the given bit group.
    pub fn map_bits(&self, bit_group: usize) -> C64 {
        debug_assert!(bit_group < self.order);
        self.points[self.label_to_point[bit_group]]
    }

    /// Index of the point maximizing `Re{p* z}` (nearest in angle); ties go
    /// to the lowest index.
    pub fn nearest(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_metric = (self.points[0].conj() * z).re;
        for (i, p) in self.points.iter().enumerate().skip(1) {
            let m = (p.conj() * z).re;
            if m > best_metric {
                best_metric = m;
                best = i;
            }
        }
        best
    }
}

/// Gray-coded bit-group-to-point mapping, `0 <= bit_group < m`.
pub fn psk_map(bit_group: usize, m: usize) -> Result<C64> {
    let alphabet = PskAlphabet::new(m)?;
    Ok(alphabet.map_bits(bit_group))
}

/// The Alamouti information matrix `[[u1, u2], [-u2*, u1*]]` from two
/// unit-modulus symbols. The caller scales by `1/sqrt(2)` at encoding time to
/// keep codewords unit power.
pub fn make_info_matrix(u1: C64, u2: C64) -> Result<AlamoutiMatrix> {
    let (n1, n2) = (u1.norm(), u2.norm());
    if (n1 - 1.0).abs() > 1e-9 || (n2 - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitSymbol(n1, n2));
    }
    Ok(AlamoutiMatrix::new(u1, u2))
}

/// The unit-power reference codeword that starts every differential burst:
/// the all-ones information matrix scaled by `1/sqrt(2)`.
pub fn reference_block() -> AlamoutiMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    AlamoutiMatrix::new(C64::new(h, 0.0), C64::new(h, 0.0))
}

/// Differential encoding step `S_{k+1} = S_k U_{k+1}`.
///
/// Both inputs must be unit power (`A A^H = I` within [`POWER_TOL`]); the
/// output then is as well.
pub fn diff_encode(s_k: &AlamoutiMatrix, u_next: &AlamoutiMatrix) -> Result<AlamoutiMatrix> {
    let es = s_k.unitarity_error();
    let eu = u_next.unitarity_error();
    if es > POWER_TOL || eu > POWER_TOL {
        return Err(Error::PowerConstraint(es.max(eu)));
    }
    Ok(s_k.mul(u_next))
}

/// Outcome of a block decision: the two point indices and the decided
/// information matrix (already scaled by `1/sqrt(2)`).
#[derive(Debug, Clone, Copy)]
pub struct Decision {
    pub idx1: usize,
    pub idx2: usize,
    pub info: AlamoutiMatrix,
}

fn decide(d: &AlamoutiMatrix, alphabet: &PskAlphabet) -> Decision {
    // By Alamouti orthogonality the exhaustive arg-max over all M^2
    // candidate matrices decouples into two independent nearest-point
    // decisions on d11 and d12.
    let idx1 = alphabet.nearest(d.x1);
    let idx2 = alphabet.nearest(d.x2);
    let info = AlamoutiMatrix::new(alphabet.point(idx1), alphabet.point(idx2))
        .scale(std::f64::consts::FRAC_1_SQRT_2);
    Decision { idx1, idx2, info }
}

/// ML differential detection from two consecutive received blocks:
/// decides on `D = Z_k^H Z_{k+1}`.
pub fn ml_diff_detect(
    z_k: &AlamoutiMatrix,
    z_next: &AlamoutiMatrix,
    alphabet: &PskAlphabet,
) -> Decision {
    decide(&z_k.hermitian().mul(z_next), alphabet)
}

/// Coherent ML detection with known channel block: decides on
/// `D = Lambda^H Z`.
pub fn coherent_detect(
    lambda: &AlamoutiMatrix,
    z: &AlamoutiMatrix,
    alphabet: &PskAlphabet,
) -> Decision {
    decide(&lambda.hermitian().mul(z), alphabet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rand_c64(rng: &mut impl Rng) -> C64 {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }

    fn rand_alamouti(rng: &mut impl Rng) -> AlamoutiMatrix {
        AlamoutiMatrix::new(rand_c64(rng), rand_c64(rng))
    }

    fn assert_close(a: C64, b: C64, tol: f64) {
        assert!((a - b).norm() < tol, "{a} vs {b}");
    }

    /// Brute-force ML search over all M^2 candidate information matrices,
    /// the independent oracle for the decoupled decision rule.
    fn exhaustive_detect(d: &AlamoutiMatrix, alphabet: &PskAlphabet) -> (usize, usize) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut best = (0, 0);
        let mut best_metric = f64::NEG_INFINITY;
        for i1 in 0..alphabet.order() {
            for i2 in 0..alphabet.order() {
                let u = AlamoutiMatrix::new(alphabet.point(i1), alphabet.point(i2)).scale(h);
                // Re tr(U^H D)
                let uh = u.hermitian();
                let m = uh.mul(d);
                let metric = (m.x1 + m.x1.conj()).re / 2.0 * 2.0; // trace of Alamouti = 2 Re{x1}
                if metric > best_metric {
                    best_metric = metric;
                    best = (i1, i2);
                }
            }
        }
        best
    }

    #[test]
    fn product_and_hermitian_stay_alamouti() {
        // Structural closure: expand to full 2x2, multiply, compare entries.
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = rand_alamouti(&mut rng);
            let b = rand_alamouti(&mut rng);
            let c = a.mul(&b);
            for r in 0..2 {
                for col in 0..2 {
                    let mut full = C64::new(0.0, 0.0);
                    for k in 0..2 {
                        full += a.entry(r, k) * b.entry(k, col);
                    }
                    assert_close(c.entry(r, col), full, 1e-12);
                }
            }
            let h = a.hermitian();
            for r in 0..2 {
                for col in 0..2 {
                    assert_close(h.entry(r, col), a.entry(col, r).conj(), 1e-12);
                }
            }
        }
    }

    #[test]
    fn a_times_a_hermitian_is_scaled_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a = rand_alamouti(&mut rng);
            let aah = a.mul(&a.hermitian());
            assert_close(aah.x1, C64::new(a.power(), 0.0), 1e-12);
            assert_close(aah.x2, C64::new(0.0, 0.0), 1e-12);
        }
    }

    #[test]
    fn inverse_roundtrip_and_singular_error() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a = rand_alamouti(&mut rng);
        let inv = a.inverse().unwrap();
        let id = a.mul(&inv);
        assert_close(id.x1, C64::new(1.0, 0.0), 1e-12);
        assert_close(id.x2, C64::new(0.0, 0.0), 1e-12);
        assert!(AlamoutiMatrix::ZERO.inverse().is_err());
    }

    #[test]
    fn psk_map_examples() {
        assert_close(psk_map(0, 4).unwrap(), C64::new(1.0, 0.0), 1e-15);
        assert_close(psk_map(1, 2).unwrap(), C64::new(-1.0, 0.0), 1e-15);
        // 8-PSK points are the eighth roots of unity, in some Gray order.
        let alph = PskAlphabet::new(8).unwrap();
        for b in 0..8 {
            let p = alph.map_bits(b);
            assert!((p.norm() - 1.0).abs() < 1e-12);
            let angle = p.arg().rem_euclid(2.0 * std::f64::consts::PI);
            let steps = angle / (std::f64::consts::PI / 4.0);
            assert!((steps - steps.round()).abs() < 1e-9);
        }
        assert!(psk_map(0, 16).is_err());
        assert!(psk_map(0, 3).is_err());
    }

    #[test]
    fn gray_labels_differ_in_one_bit_between_neighbors() {
        for m in [2usize, 4, 8] {
            let alph = PskAlphabet::new(m).unwrap();
            for i in 0..m {
                let l1 = alph.label_of(i);
                let l2 = alph.label_of((i + 1) % m);
                assert_eq!((l1 ^ l2).count_ones(), 1, "M={m} i={i}");
            }
        }
    }

    #[test]
    fn info_matrix_examples() {
        let u = make_info_matrix(C64::new(1.0, 0.0), C64::new(1.0, 0.0)).unwrap();
        assert_close(u.entry(1, 0), C64::new(-1.0, 0.0), 1e-15);
        assert_close(u.entry(1, 1), C64::new(1.0, 0.0), 1e-15);

        let u = make_info_matrix(C64::new(0.0, 1.0), C64::new(-1.0, 0.0)).unwrap();
        assert_close(u.entry(1, 0), C64::new(1.0, 0.0), 1e-15);
        assert_close(u.entry(1, 1), C64::new(0.0, -1.0), 1e-15);

        // determinant = |u1|^2 + |u2|^2 = 2 for unit symbols
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..20 {
            let u1 = C64::from_polar(1.0, rng.random::<f64>() * 7.0);
            let u2 = C64::from_polar(1.0, rng.random::<f64>() * 7.0);
            let u = make_info_matrix(u1, u2).unwrap();
            assert!((u.power() - 2.0).abs() < 1e-12);
        }

        assert!(make_info_matrix(C64::new(0.5, 0.0), C64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn diff_encode_keeps_unit_power() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let alph = PskAlphabet::new(4).unwrap();
        let mut s = reference_block();
        for _ in 0..500 {
            let u1 = alph.point(rng.random_range(0..4));
            let u2 = alph.point(rng.random_range(0..4));
            let u = make_info_matrix(u1, u2)
                .unwrap()
                .scale(std::f64::consts::FRAC_1_SQRT_2);
            s = diff_encode(&s, &u).unwrap();
            assert!(s.unitarity_error() < 1e-12);
        }
        // identity information block leaves the state unchanged
        let s2 = diff_encode(&s, &AlamoutiMatrix::IDENTITY).unwrap();
        assert_close(s2.x1, s.x1, 1e-15);
        assert_close(s2.x2, s.x2, 1e-15);
        // power violation is rejected
        let bad = AlamoutiMatrix::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0));
        assert!(diff_encode(&bad, &AlamoutiMatrix::IDENTITY).is_err());
    }

    #[test]
    fn noiseless_encode_decode_roundtrip_chain() {
        // K encodes followed by K differential decodes recover every U.
        for m in [2usize, 4, 8] {
            let alph = PskAlphabet::new(m).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(6 + m as u64);
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let lambda = rand_alamouti(&mut rng); // arbitrary channel block
            let mut s = reference_block();
            let mut z_prev = lambda.mul(&s);
            for _ in 0..50 {
                let i1 = rng.random_range(0..m);
                let i2 = rng.random_range(0..m);
                let u = AlamoutiMatrix::new(alph.point(i1), alph.point(i2)).scale(h);
                s = diff_encode(&s, &u).unwrap();
                let z = lambda.mul(&s);
                let dec = ml_diff_detect(&z_prev, &z, &alph);
                assert_eq!((dec.idx1, dec.idx2), (i1, i2));
                z_prev = z;
            }
        }
    }

    #[test]
    fn decoupled_detection_equals_exhaustive_search() {
        // 10^4 random noisy blocks per modulation order; decisions must be
        // identical to the brute-force M^2 search, including ties.
        for m in [2usize, 4, 8] {
            let alph = PskAlphabet::new(m).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(7);
            for _ in 0..10_000 {
                let zk = rand_alamouti(&mut rng);
                let zn = rand_alamouti(&mut rng);
                let d = zk.hermitian().mul(&zn);
                let dec = ml_diff_detect(&zk, &zn, &alph);
                assert_eq!((dec.idx1, dec.idx2), exhaustive_detect(&d, &alph));
            }
        }
    }

    #[test]
    fn zero_block_ties_break_to_index_zero() {
        let alph = PskAlphabet::new(8).unwrap();
        let z = AlamoutiMatrix::ZERO;
        let any = AlamoutiMatrix::new(C64::new(0.3, 0.1), C64::new(-0.2, 0.4));
        let dec = ml_diff_detect(&z, &any, &alph);
        assert_eq!((dec.idx1, dec.idx2), (0, 0));
        let dec = coherent_detect(&AlamoutiMatrix::ZERO, &any, &alph);
        assert_eq!((dec.idx1, dec.idx2), (0, 0));
    }

    #[test]
    fn coherent_detection_noiseless_and_vs_exhaustive() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let alph = PskAlphabet::new(4).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for _ in 0..200 {
            let lambda = rand_alamouti(&mut rng);
            let i1 = rng.random_range(0..4);
            let i2 = rng.random_range(0..4);
            let u = AlamoutiMatrix::new(alph.point(i1), alph.point(i2)).scale(h);
            let z = lambda.mul(&u);
            let dec = coherent_detect(&lambda, &z, &alph);
            assert_eq!((dec.idx1, dec.idx2), (i1, i2));
            // against brute force on a noisy copy
            let zn = z.add(&rand_alamouti(&mut rng).scale(0.5));
            let d = lambda.hermitian().mul(&zn);
            let dec = coherent_detect(&lambda, &zn, &alph);
            assert_eq!((dec.idx1, dec.idx2), exhaustive_detect(&d, &alph));
        }
    }
}
