//! Systematic Reed-Solomon line code at rate 1/2.
//!
//! A line of `k` data shares is the evaluation of a degree-`<k` polynomial at
//! points `0..k` (byte values as field elements, one independent polynomial
//! per byte position); the `k` parity shares are its evaluations at points
//! `k..2k`. Any `k` of the `2k` cells determine the line. Encoding goes
//! through a cached `k×k` generator matrix; decoding is Lagrange
//! interpolation from whichever cells survived.

use super::{gf, CodingError, MAX_SQUARE_SIDE};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Rate-1/2 erasure codec for lines of `2k` cells.
#[derive(Debug, Clone, Copy)]
pub struct LineCodec {
    k: usize,
}

fn generator_cache() -> &'static Mutex<BTreeMap<usize, Arc<Vec<Vec<u8>>>>> {
    static CACHE: OnceLock<Mutex<BTreeMap<usize, Arc<Vec<Vec<u8>>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(BTreeMap::new()))
}

/// Lagrange coefficients for evaluating at `target` the polynomial through
/// the distinct points `xs`.
fn lagrange_coeffs(xs: &[u8], target: u8) -> Vec<u8> {
    debug_assert!(!xs.contains(&target));
    let mut coeffs = Vec::with_capacity(xs.len());
    for (j, &xj) in xs.iter().enumerate() {
        let mut num = 1u8;
        let mut den = 1u8;
        for (m, &xm) in xs.iter().enumerate() {
            if m != j {
                num = gf::mul(num, target ^ xm);
                den = gf::mul(den, xj ^ xm);
            }
        }
        coeffs.push(gf::mul(num, gf::inv(den)));
    }
    coeffs
}

impl LineCodec {
    pub fn new(k: usize) -> Result<Self, CodingError> {
        if k == 0 || k > MAX_SQUARE_SIDE {
            return Err(CodingError::SquareTooLarge { needed: k });
        }
        Ok(LineCodec { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn generator(&self) -> Arc<Vec<Vec<u8>>> {
        let mut cache = generator_cache().lock().unwrap();
        cache
            .entry(self.k)
            .or_insert_with(|| {
                let xs: Vec<u8> = (0..self.k as u16).map(|x| x as u8).collect();
                let rows = (self.k..2 * self.k)
                    .map(|p| lagrange_coeffs(&xs, p as u8))
                    .collect();
                Arc::new(rows)
            })
            .clone()
    }

    /// Extends `k` equal-length data shares with `k` parity shares.
    pub fn extend(&self, data: &[impl AsRef<[u8]>]) -> Result<Vec<Vec<u8>>, CodingError> {
        if data.len() != self.k {
            return Err(CodingError::Invalid("extend needs exactly k data shares"));
        }
        let len = data[0].as_ref().len();
        if data.iter().any(|d| d.as_ref().len() != len) {
            return Err(CodingError::Invalid("shares must have identical size"));
        }
        let g = self.generator();
        let mut out = Vec::with_capacity(self.k);
        for row in g.iter() {
            let mut acc = vec![0u8; len];
            for (coeff, share) in row.iter().zip(data) {
                if *coeff == 0 {
                    continue;
                }
                let table = gf::mul_row(*coeff);
                for (a, &b) in acc.iter_mut().zip(share.as_ref()) {
                    *a ^= table[b as usize];
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Fills in the missing cells of a line given at least `k` survivors.
    /// Present cells are returned untouched.
    pub fn decode(&self, cells: &[Option<Vec<u8>>]) -> Result<Vec<Vec<u8>>, CodingError> {
        if cells.len() != 2 * self.k {
            return Err(CodingError::Invalid("decode needs a full line of 2k cells"));
        }
        let known: Vec<usize> = cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.is_some().then_some(i))
            .collect();
        if known.len() < self.k {
            return Err(CodingError::Incomplete);
        }
        let len = cells[known[0]].as_ref().unwrap().len();
        if known.iter().any(|&i| cells[i].as_ref().unwrap().len() != len) {
            return Err(CodingError::Invalid("shares must have identical size"));
        }
        let xs: Vec<u8> = known[..self.k].iter().map(|&i| i as u8).collect();
        let mut out: Vec<Vec<u8>> = Vec::with_capacity(2 * self.k);
        for (i, cell) in cells.iter().enumerate() {
            match cell {
                Some(bytes) => out.push(bytes.clone()),
                None => {
                    let coeffs = lagrange_coeffs(&xs, i as u8);
                    let mut acc = vec![0u8; len];
                    for (&coeff, &src) in coeffs.iter().zip(&known[..self.k]) {
                        if coeff == 0 {
                            continue;
                        }
                        let table = gf::mul_row(coeff);
                        let share = cells[src].as_ref().unwrap();
                        for (a, &b) in acc.iter_mut().zip(share) {
                            *a ^= table[b as usize];
                        }
                    }
                    out.push(acc);
                }
            }
        }
        Ok(out)
    }

    /// The full codeword implied by the systematic half: evaluates the
    /// polynomial through cells `0..k` everywhere. Used when checking whether
    /// a published line actually is a codeword.
    pub fn reencode(&self, systematic: &[impl AsRef<[u8]>]) -> Result<Vec<Vec<u8>>, CodingError> {
        let parity = self.extend(systematic)?;
        let mut line: Vec<Vec<u8>> = systematic.iter().map(|s| s.as_ref().to_vec()).collect();
        line.extend(parity);
        Ok(line)
    }
}
