//! GF(2^8) arithmetic on the 0x11D polynomial.
//!
//! Table-driven: log/antilog for division, plus a full 64 KiB product table
//! so the hot encode loop is a single indexed load per byte.

use std::sync::OnceLock;

/// x^8 + x^4 + x^3 + x^2 + 1, generator 2.
const POLY: u16 = 0x11D;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
    mul: Box<[[u8; 256]; 256]>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut exp = [0u8; 512];
        let mut log = [0u8; 256];
        let mut x: u16 = 1;
        for i in 0..255 {
            exp[i] = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= POLY;
            }
        }
        for i in 255..512 {
            exp[i] = exp[i - 255];
        }
        let mut mul = Box::new([[0u8; 256]; 256]);
        for a in 1..256usize {
            for b in 1..256usize {
                mul[a][b] = exp[log[a] as usize + log[b] as usize];
            }
        }
        Tables { exp, log, mul }
    })
}

pub fn mul(a: u8, b: u8) -> u8 {
    tables().mul[a as usize][b as usize]
}

/// Row of the product table for a fixed left factor.
pub fn mul_row(a: u8) -> &'static [u8; 256] {
    &tables().mul[a as usize]
}

/// Multiplicative inverse. Panics on zero, which callers rule out by
/// construction (inverses are only taken of differences of distinct points).
pub fn inv(a: u8) -> u8 {
    assert!(a != 0, "zero has no inverse in GF(256)");
    let t = tables();
    t.exp[255 - t.log[a as usize] as usize]
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent multiply: carry-less shift-and-add with on-the-fly
    // reduction. No tables shared with the implementation under test.
    fn peasant_mul(mut a: u8, mut b: u8) -> u8 {
        let mut acc = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            let carry = a & 0x80 != 0;
            a <<= 1;
            if carry {
                a ^= (POLY & 0xFF) as u8;
            }
            b >>= 1;
        }
        acc
    }

    #[test]
    fn product_table_matches_peasant_multiplication_everywhere() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), peasant_mul(a, b), "a={a} b={b}");
            }
        }
    }

    #[test]
    fn inverses_invert() {
        for a in 1..=255u8 {
            assert_eq!(mul(a, inv(a)), 1, "a={a}");
        }
    }

    #[test]
    fn field_axioms_hold_on_a_sample() {
        for a in [1u8, 2, 3, 29, 76, 130, 255] {
            for b in [1u8, 5, 17, 99, 201, 254] {
                for c in [3u8, 44, 111, 250] {
                    assert_eq!(mul(a, b), mul(b, a));
                    assert_eq!(mul(mul(a, b), c), mul(a, mul(b, c)));
                    assert_eq!(mul(a, b ^ c), mul(a, b) ^ mul(a, c));
                }
            }
        }
    }
}
