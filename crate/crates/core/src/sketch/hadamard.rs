use crate::error::{Error, Result};
use crate::rng::{self, Module};

/// In-place unnormalized fast Walsh–Hadamard transform, `v ← H v` with the
/// Sylvester recursion `H_{2n} = [H_n, H_n; H_n, -H_n]`.
pub fn fwht_in_place(v: &mut [f64]) -> Result<()> {
    let len = v.len();
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::Length(format!("fwht needs a power-of-two length, got {len}")));
    }
    let mut h = 1;
    while h < len {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

pub fn fwht(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

/// Entry `(r, c)` of the Sylvester Hadamard matrix.
#[inline]
pub fn hadamard_entry(r: usize, c: usize) -> f64 {
    if (r & c).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Stacked randomized Hadamard transform
/// `h(z) = [H D⁽¹⁾; …; H D⁽ᵐ⁾] z` over the zero-padded input, with independent
/// standard-normal diagonals. The operator form is scaled by `1/√(m L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSrht {
    pub(crate) ell: usize,
    pub(crate) padded: usize,
    pub(crate) diagonals: Vec<Vec<f64>>,
}

impl StackedSrht {
    pub fn new(ell: usize, blocks: usize, seed: u64) -> Result<Self> {
        if ell == 0 || blocks == 0 {
            return Err(Error::InvalidParameter(format!("srht needs ell >= 1 and m >= 1, got {ell}, {blocks}")));
        }
        let padded = ell.next_power_of_two();
        let diagonals = (0..blocks)
            .map(|b| {
                let mut r = rng::stream(seed, Module::Srht, b as u64);
                rng::gaussian_vec(&mut r, padded)
            })
            .collect();
        Ok(Self { ell, padded, diagonals })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn padded_len(&self) -> usize {
        self.padded
    }

    pub fn blocks(&self) -> usize {
        self.diagonals.len()
    }

    pub fn out_dim(&self) -> usize {
        self.padded * self.diagonals.len()
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.out_dim() as f64).sqrt()
    }

    /// `h(x)` without the `1/√(m L)` normalization.
    pub fn apply_unscaled(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ell {
            return Err(Error::Shape(format!("srht input length {} != {}", x.len(), self.ell)));
        }
        let mut out = vec![0.0; self.out_dim()];
        for (block, diag) in out.chunks_exact_mut(self.padded).zip(&self.diagonals) {
            for ((o, &xi), &di) in block.iter_mut().zip(x).zip(diag) {
                *o = xi * di;
            }
            fwht_in_place(block)?;
        }
        Ok(out)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.scale();
        let mut out = self.apply_unscaled(x)?;
        out.iter_mut().for_each(|v| *v *= s);
        Ok(out)
    }

    /// Unscaled row `row` of the stacked operator, restricted to the first
    /// `ell` (unpadded) coordinates.
    pub fn unscaled_row(&self, row: usize) -> Vec<f64> {
        let block = row / self.padded;
        let r = row % self.padded;
        let diag = &self.diagonals[block];
        (0..self.ell).map(|c| hadamard_entry(r, c) * diag[c]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n).map(|r| (0..n).map(|c| hadamard_entry(r, c) * v[c]).sum()).collect()
    }

    #[test]
    fn small_examples() {
        assert_eq!(fwht(&[1.0]).unwrap(), vec![1.0]);
        assert_eq!(fwht(&[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![1.0; 4]);
        assert_eq!(fwht(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![10.0, -2.0, -4.0, 0.0]);
        assert_eq!(naive(&[1.0, 2.0, 3.0, 4.0]), vec![10.0, -2.0, -4.0, 0.0]);
    }

    #[test]
    fn rejects_bad_length() {
        let err = fwht(&[1.0, 2.0, 3.0]).unwrap_err();
        assert!(err.to_string().starts_with("length"));
        assert!(fwht(&[]).is_err());
    }

    #[test]
    fn zero_and_determinism() {
        let op = StackedSrht::new(5, 3, 42).unwrap();
        assert_eq!(op.padded_len(), 8);
        assert_eq!(op.out_dim(), 24);
        assert!(op.apply(&[0.0; 5]).unwrap().iter().all(|&v| v == 0.0));
        let x = [0.3, -1.0, 2.0, 0.5, 0.1];
        let a = op.apply(&x).unwrap();
        let b = StackedSrht::new(5, 3, 42).unwrap().apply(&x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn unscaled_rows_match_operator() {
        let op = StackedSrht::new(6, 2, 3).unwrap();
        let x = [1.0, -0.5, 0.25, 2.0, -1.0, 0.75];
        let y = op.apply_unscaled(&x).unwrap();
        for (r, &yr) in y.iter().enumerate() {
            let row = op.unscaled_row(r);
            let v: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((v - yr).abs() < 1e-12);
        }
    }
}
