use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{eig_real, C64};

/// Which orthonormal basis a set of coefficient vectors refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisTag {
    /// Plain coordinates in the snapshot space.
    Ambient,
    /// Leading left singular vectors of the batch data.
    Uk,
    /// Streaming X-side basis (a prefix of `Q` in the one-basis setting).
    Qx,
    /// Streaming Y-side basis.
    Qy,
    /// Shared one-basis basis.
    Q,
}

/// Ritz values with coefficient vectors, residual norms and exact DMD coefficients.
#[derive(Clone, Debug)]
pub struct RitzSet {
    pub eigenvalues: Vec<C64>,
    pub coeffs: DMatrix<C64>,
    pub residuals: Vec<f64>,
    pub exact_coeffs: Option<DMatrix<C64>>,
    pub basis: BasisTag,
    pub exact_basis: Option<BasisTag>,
}

impl RitzSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Groups of indices that are either a real value or an adjacent conjugate pair.
    pub fn conjugate_groups(&self) -> Vec<Vec<usize>> {
        conjugate_groups(&self.eigenvalues)
    }

    /// Index of the conjugate partner of `i`, if any.
    pub fn partner(&self, i: usize) -> Option<usize> {
        self.conjugate_groups()
            .into_iter()
            .find(|g| g.contains(&i))
            .and_then(|g| g.into_iter().find(|&j| j != i))
    }

    /// Reorders by ascending residual, ties by descending modulus, keeping pairs adjacent.
    pub fn into_canonical_order(self) -> Self {
        let mut groups = self.conjugate_groups();
        let key = |g: &Vec<usize>| {
            let res = g
                .iter()
                .map(|&i| self.residuals[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let modulus = self.eigenvalues[g[0]].norm();
            (res, modulus)
        };
        groups.sort_by(|a, b| {
            let (ra, ma) = key(a);
            let (rb, mb) = key(b);
            ra.total_cmp(&rb).then(mb.total_cmp(&ma))
        });
        let order: Vec<usize> = groups.into_iter().flatten().collect();
        self.permuted(&order)
    }

    fn permuted(&self, order: &[usize]) -> Self {
        let pick = |m: &DMatrix<C64>| {
            DMatrix::from_columns(&order.iter().map(|&i| m.column(i)).collect::<Vec<_>>())
        };
        let rows = self.coeffs.nrows();
        Self {
            eigenvalues: order.iter().map(|&i| self.eigenvalues[i]).collect(),
            coeffs: if order.is_empty() {
                DMatrix::zeros(rows, 0)
            } else {
                pick(&self.coeffs)
            },
            residuals: order.iter().map(|&i| self.residuals[i]).collect(),
            exact_coeffs: self.exact_coeffs.as_ref().map(|e| {
                if order.is_empty() {
                    DMatrix::zeros(e.nrows(), 0)
                } else {
                    pick(e)
                }
            }),
            basis: self.basis,
            exact_basis: self.exact_basis,
        }
    }

    /// Ritz vectors lifted through a real basis.
    pub fn lift_coeffs(&self, basis: &DMatrix<f64>) -> DMatrix<C64> {
        lift(basis, &self.coeffs)
    }

    /// Exact DMD vectors lifted through a real basis.
    pub fn lift_exact(&self, basis: &DMatrix<f64>) -> Option<DMatrix<C64>> {
        self.exact_coeffs.as_ref().map(|e| lift(basis, e))
    }
}

pub(crate) fn conjugate_groups(values: &[C64]) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < values.len() {
        if values[i].im != 0.0 && i + 1 < values.len() && values[i + 1] == values[i].conj() {
            groups.push(vec![i, i + 1]);
            i += 2;
        } else {
            groups.push(vec![i]);
            i += 1;
        }
    }
    groups
}

/// Real matrix times complex matrix.
pub fn lift(basis: &DMatrix<f64>, coeffs: &DMatrix<C64>) -> DMatrix<C64> {
    let re = basis * coeffs.map(|z| z.re);
    let im = basis * coeffs.map(|z| z.im);
    re.zip_map(&im, C64::new)
}

/// Real matrix times complex vector.
pub fn lift_vector(basis: &DMatrix<f64>, v: &DVector<C64>) -> DVector<C64> {
    let re = basis * v.map(|z| z.re);
    let im = basis * v.map(|z| z.im);
    re.zip_map(&im, C64::new)
}

/// Eigenpairs of a small real Rayleigh quotient together with exact
/// coefficients `K w` and caller-supplied residuals.
pub(crate) fn assemble(
    rayleigh: &DMatrix<f64>,
    exact_map: &DMatrix<f64>,
    basis: BasisTag,
    exact_basis: BasisTag,
    residual: impl Fn(C64, &DVector<C64>, &DVector<C64>) -> f64,
) -> Result<RitzSet> {
    let eig = eig_real(rayleigh)?;
    let exact = lift(exact_map, &eig.vectors);
    let residuals = eig
        .values
        .iter()
        .enumerate()
        .map(|(i, lam)| {
            let w = eig.vectors.column(i).into_owned();
            let wex = exact.column(i).into_owned();
            residual(*lam, &w, &wex)
        })
        .collect();
    Ok(RitzSet {
        eigenvalues: eig.values,
        coeffs: eig.vectors,
        residuals,
        exact_coeffs: Some(exact),
        basis,
        exact_basis: Some(exact_basis),
    }
    .into_canonical_order())
}

/// Pairs each value in `a` with its nearest unused value in `b`; returns the largest distance.
pub fn max_matched_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0_f64;
    for x in a {
        let mut best = None;
        for (j, y) in b.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (x - y).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, d)) = best {
            used[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}
