use std::f64::consts::PI;

use super::LpcCoeffs;
use crate::{Error, Result};

/// Line spectral frequencies in radians, strictly increasing in `(0, pi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lsf {
    freqs: Vec<f64>,
}

impl Lsf {
    pub fn new(freqs: Vec<f64>) -> Result<Self> {
        let inside = freqs.iter().all(|&w| w > 0.0 && w < PI);
        let increasing = freqs.windows(2).all(|p| p[0] < p[1]);
        if !inside || !increasing {
            return Err(Error::Domain("LSFs must be strictly increasing inside (0, pi)".into()));
        }
        Ok(Self { freqs })
    }

    /// `k pi / (p + 1)`, the LSFs of `A(z) = 1`.
    pub fn uniform(order: usize) -> Self {
        Self { freqs: (1..=order).map(|k| k as f64 * PI / (order + 1) as f64).collect() }
    }

    pub fn order(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }
}

// Symmetric polynomial c[0..=2m] evaluated as a real cosine series on the
// unit circle: c[m] + 2 sum_k c[m-k] cos(k w).
// Clenshaw recurrence in x = cos(w) over the Chebyshev form.
fn cosine_series(c: &[f64], w: f64) -> f64 {
    let m = (c.len() - 1) / 2;
    let x = w.cos();
    let (mut b1, mut b2) = (0.0, 0.0);
    for k in (1..=m).rev() {
        let b = 2.0 * c[m - k] + 2.0 * x * b1 - b2;
        b2 = b1;
        b1 = b;
    }
    c[m] + x * b1 - b2
}

fn roots_on_circle(c: &[f64]) -> Option<Vec<f64>> {
    let want = (c.len() - 1) / 2;
    if want == 0 {
        return Some(Vec::new());
    }
    let mut grid = 64 * (want + 1);
    while grid <= 1 << 22 {
        let mut roots = Vec::with_capacity(want);
        let step = PI / grid as f64;
        let mut lo = 0.0;
        let mut flo = cosine_series(c, lo);
        for i in 1..=grid {
            let hi = if i == grid { PI } else { i as f64 * step };
            let fhi = cosine_series(c, hi);
            if flo == 0.0 && lo > 0.0 {
                roots.push(lo);
            } else if flo * fhi < 0.0 {
                roots.push(bisect(c, lo, hi, flo));
            }
            lo = hi;
            flo = fhi;
        }
        if roots.len() == want {
            return Some(roots);
        }
        grid *= 4;
    }
    None
}

fn bisect(c: &[f64], mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = cosine_series(c, mid);
        if fm == 0.0 {
            return mid;
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    0.5 * (lo + hi)
}

/// Sum and difference polynomials with their trivial roots at `z = +-1`
/// divided out.
fn split_polynomials(a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = a.len() - 1;
    let ext = |k: usize| if k <= p { a[k] } else { 0.0 };
    let sum: Vec<f64> = (0..=p + 1).map(|k| ext(k) + ext(p + 1 - k)).collect();
    let diff: Vec<f64> = (0..=p + 1).map(|k| ext(k) - ext(p + 1 - k)).collect();
    if p % 2 == 0 {
        // sum / (1 + z^-1), diff / (1 - z^-1)
        let mut ps = vec![0.0; p + 1];
        let mut qs = vec![0.0; p + 1];
        for k in 0..=p {
            ps[k] = sum[k] - if k > 0 { ps[k - 1] } else { 0.0 };
            qs[k] = diff[k] + if k > 0 { qs[k - 1] } else { 0.0 };
        }
        (ps, qs)
    } else {
        // diff / (1 - z^-2); sum keeps all its roots
        let mut qs = vec![0.0; p];
        for k in 0..p {
            qs[k] = diff[k] + if k > 1 { qs[k - 2] } else { 0.0 };
        }
        (sum, qs)
    }
}

pub fn lpc_to_lsf(lpc: &LpcCoeffs) -> Result<Lsf> {
    if !lpc.is_minimum_phase() {
        return Err(Error::Domain("LPC polynomial is not minimum phase".into()));
    }
    let (ps, qs) = split_polynomials(lpc.coeffs());
    let failed = || Error::Domain("LSF root search did not converge".into());
    let mut freqs = roots_on_circle(&ps).ok_or_else(failed)?;
    freqs.extend(roots_on_circle(&qs).ok_or_else(failed)?);
    freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Lsf::new(freqs)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn lsf_to_lpc(lsf: &Lsf) -> Result<LpcCoeffs> {
    Lsf::new(lsf.freqs.clone())?;
    let p = lsf.order();
    let mut ps = vec![1.0];
    let mut qs = vec![1.0];
    for (i, &w) in lsf.freqs.iter().enumerate() {
        let quad = [1.0, -2.0 * w.cos(), 1.0];
        if i % 2 == 0 {
            ps = poly_mul(&ps, &quad);
        } else {
            qs = poly_mul(&qs, &quad);
        }
    }
    if p % 2 == 0 {
        ps = poly_mul(&ps, &[1.0, 1.0]);
        qs = poly_mul(&qs, &[1.0, -1.0]);
    } else {
        qs = poly_mul(&qs, &[1.0, 0.0, -1.0]);
    }
    let a: Vec<f64> = (0..=p).map(|k| 0.5 * (ps[k] + qs[k])).collect();
    LpcCoeffs::new(a)
}
