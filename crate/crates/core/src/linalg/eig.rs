use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{DmdError, Result};

pub type C64 = Complex<f64>;

/// Eigenpairs of a real square matrix.
///
/// Complex eigenvalues come in adjacent conjugate pairs (positive imaginary
/// part first) whose vectors are exact conjugates of each other. Vectors have
/// unit two-norm and their largest entry is real and positive.
#[derive(Clone, Debug)]
pub struct RealEig {
    pub values: Vec<C64>,
    pub vectors: DMatrix<C64>,
}

#[derive(Clone, Copy, Debug)]
struct Block {
    start: usize,
    size: usize,
}

fn schur_blocks(t: &DMatrix<f64>) -> Vec<Block> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n {
            let sub = t[(i + 1, i)];
            let scale = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
            if sub != 0.0 && sub.abs() > f64::EPSILON * scale {
                blocks.push(Block { start: i, size: 2 });
                i += 2;
                continue;
            }
        }
        blocks.push(Block { start: i, size: 1 });
        i += 1;
    }
    blocks
}

fn block_eigenvalues(t: &DMatrix<f64>, b: Block) -> Vec<C64> {
    if b.size == 1 {
        return vec![C64::new(t[(b.start, b.start)], 0.0)];
    }
    let k = b.start;
    let (a, bb, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let disc = half * half + bb * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // larger-magnitude root first for stability, then recover the other from the determinant
        let r1 = if mean >= 0.0 { mean + s } else { mean - s };
        let det = a * d - bb * c;
        let r2 = if r1 != 0.0 { det / r1 } else { mean - s };
        vec![C64::new(r1, 0.0), C64::new(r2, 0.0)]
    } else {
        let s = (-disc).sqrt();
        vec![C64::new(mean, s), C64::new(mean, -s)]
    }
}

/// Solves the 2x2 complex system `m x = rhs`, perturbing a singular pivot.
fn solve2(m: [[C64; 2]; 2], rhs: [C64; 2], smin: f64) -> [C64; 2] {
    let mut det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.norm() < smin * smin {
        det = C64::new(smin * smin, 0.0);
    }
    [
        (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
    ]
}

/// Back-substitution for `(T - λI) v = 0` on a quasi-triangular `T`.
fn schur_vector(t: &DMatrix<f64>, blocks: &[Block], bi: usize, lambda: C64, smin: f64) -> Vec<C64> {
    let n = t.nrows();
    let mut v = vec![C64::new(0.0, 0.0); n];
    let own = blocks[bi];
    let k = own.start;
    if own.size == 1 {
        v[k] = C64::new(1.0, 0.0);
    } else {
        let r0 = (
            C64::new(t[(k, k)], 0.0) - lambda,
            C64::new(t[(k, k + 1)], 0.0),
        );
        let r1 = (
            C64::new(t[(k + 1, k)], 0.0),
            C64::new(t[(k + 1, k + 1)], 0.0) - lambda,
        );
        if r0.0.norm() + r0.1.norm() >= r1.0.norm() + r1.1.norm() {
            v[k] = r0.1;
            v[k + 1] = -r0.0;
        } else {
            v[k] = r1.1;
            v[k + 1] = -r1.0;
        }
    }
    let end = k + own.size;
    for b in blocks[..bi].iter().rev() {
        let rows = b.start..b.start + b.size;
        let mut rhs = [C64::new(0.0, 0.0); 2];
        for (slot, i) in rows.clone().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for j in (b.start + b.size)..end {
                acc += v[j] * t[(i, j)];
            }
            rhs[slot] = -acc;
        }
        if b.size == 1 {
            let i = b.start;
            let mut piv = C64::new(t[(i, i)], 0.0) - lambda;
            if piv.norm() < smin {
                piv = C64::new(smin, 0.0);
            }
            v[i] = rhs[0] / piv;
        } else {
            let i = b.start;
            let m = [
                [
                    C64::new(t[(i, i)], 0.0) - lambda,
                    C64::new(t[(i, i + 1)], 0.0),
                ],
                [
                    C64::new(t[(i + 1, i)], 0.0),
                    C64::new(t[(i + 1, i + 1)], 0.0) - lambda,
                ],
            ];
            let x = solve2(m, rhs, smin);
            v[i] = x[0];
            v[i + 1] = x[1];
        }
        // keep magnitudes bounded on strongly non-normal inputs
        let big = v.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        if big > 1e100 {
            v.iter_mut().for_each(|z| *z /= big);
        }
    }
    v
}

fn normalize_phase(col: &mut [C64]) {
    let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return;
    }
    let mut p = 0;
    for (i, z) in col.iter().enumerate() {
        if z.norm() > col[p].norm() * (1.0 + 1e-12) {
            p = i;
        }
    }
    let phase = col[p].conj() / col[p].norm();
    for z in col.iter_mut() {
        *z = *z * phase / norm;
    }
    col[p].im = 0.0;
}

/// Eigenvalues and eigenvectors of a real square matrix via the real Schur form.
pub fn eig_real(a: &DMatrix<f64>) -> Result<RealEig> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(DmdError::DimensionMismatch {
            context: "eigendecomposition (square)",
            expected: n,
            found: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(DmdError::NonFinite("eigendecomposition input"));
    }
    if n == 0 {
        return Ok(RealEig {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 200 * n.max(10))
        .ok_or(DmdError::NoConvergence("real Schur form"))?;
    let (q, t) = schur.unpack();
    let blocks = schur_blocks(&t);
    let tmax = t.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let smin = (f64::EPSILON * tmax).max(f64::MIN_POSITIVE);

    let mut values: Vec<C64> = Vec::with_capacity(n);
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    let mut col = 0;
    for (bi, b) in blocks.iter().enumerate() {
        let lams = block_eigenvalues(&t, *b);
        let complex_pair = lams.len() == 2 && lams[0].im != 0.0;
        for (li, lam) in lams.iter().enumerate() {
            if complex_pair && li == 1 {
                let prev: Vec<C64> = vectors.column(col - 1).iter().map(|z| z.conj()).collect();
                vectors.column_mut(col).copy_from_slice(&prev);
                values.push(values[col - 1].conj());
                col += 1;
                continue;
            }
            let v = schur_vector(&t, &blocks, bi, *lam, smin);
            let mut lifted: Vec<C64> = (0..n)
                .map(|r| (0..n).fold(C64::new(0.0, 0.0), |acc, j| acc + v[j] * q[(r, j)]))
                .collect();
            normalize_phase(&mut lifted);
            vectors.column_mut(col).copy_from_slice(&lifted);
            values.push(*lam);
            col += 1;
        }
    }
    Ok(RealEig { values, vectors })
}
