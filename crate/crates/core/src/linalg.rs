//! Dense linear algebra on small families of vectors.
//!
//! Everything here works on a [`VectorFamily`]: an ordered list of vectors of a
//! common dimension, each carrying a label (usually a constraint index). Rank
//! decisions come from a greedy pivoted Gram-Schmidt process with a relative
//! acceptance test: a vector is accepted as a new pivot when the norm of its
//! residual against the pivots accepted so far exceeds `tol` times its own
//! norm. The process also yields the triangular factor used to solve the
//! small least-squares and normal-equation systems in the projection and
//! multiplier code.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_tol, Error, Result};

/// Default relative rank tolerance.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// A certificate is flagged borderline when a pivot ratio lies within this
/// factor of the tolerance.
pub const BORDERLINE_FACTOR: f64 = 10.0;

// Relative slack under which two pivot ratios count as tied.
const TIE_SLACK: f64 = 1e-12;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// An ordered family of vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFamily {
    dim: usize,
    vectors: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl VectorFamily {
    pub fn new(dim: usize, vectors: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Precondition("vector dimension must be at least 1".into()));
        }
        check_dim("family labels", vectors.len(), labels.len())?;
        for v in &vectors {
            check_dim("family vector", dim, v.len())?;
        }
        let mut seen = labels.clone();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateLabel(w[0]));
        }
        Ok(Self {
            dim,
            vectors,
            labels,
        })
    }

    /// Family labelled `0..n`, dimension taken from the first vector.
    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().ok_or(Error::EmptyFamily)?.len();
        let labels = (0..vectors.len()).collect();
        Self::new(dim, vectors, labels)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            vectors: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn vector(&self, pos: usize) -> &[f64] {
        &self.vectors[pos]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, pos: usize) -> usize {
        self.labels[pos]
    }

    /// Position of a label in the family.
    pub fn position(&self, label: usize) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// The subfamily at the given positions, in the given order.
    pub fn subfamily(&self, positions: &[usize]) -> Result<Self> {
        let mut vectors = Vec::with_capacity(positions.len());
        let mut labels = Vec::with_capacity(positions.len());
        for &p in positions {
            if p >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index: p,
                    len: self.len(),
                });
            }
            vectors.push(self.vectors[p].clone());
            labels.push(self.labels[p]);
        }
        Self::new(self.dim, vectors, labels)
    }

    pub fn max_norm(&self) -> f64 {
        self.vectors.iter().map(|v| norm(v)).fold(0.0, f64::max)
    }

    /// `Σ coeffs[i] · v_i`.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (v, &c) in self.vectors.iter().zip(coeffs) {
            if c != 0.0 {
                axpy(c, v, &mut out);
            }
        }
        out
    }
}

/// Outcome of a numerical rank computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCertificate {
    pub rank: usize,
    /// Positions of the accepted pivots, in acceptance order.
    pub pivot_indices: Vec<usize>,
    /// Smallest relative residual among accepted pivots (0 when rank is 0).
    pub smallest_accepted: f64,
    /// Largest relative residual among rejected vectors (0 if none).
    pub largest_rejected: f64,
    /// Some accepted or rejected ratio lies within [`BORDERLINE_FACTOR`] of the tolerance.
    pub borderline: bool,
}

/// Coefficients of a linear dependency `Σ β_i v_i ≈ 0`, normalised to `‖β‖∞ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyWitness {
    pub coefficients: Vec<f64>,
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Dependency {
    Independent,
    Dependent(DependencyWitness),
}

/// Greedy pivoted Gram-Schmidt factorisation of a family.
///
/// For pivot `j` (family position `pivots[j]`) the column `r[j]` holds the
/// coordinates of that vector in the orthonormal basis `q[0..=j]`.
#[derive(Debug, Clone)]
pub(crate) struct PivotedQr {
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    pub(crate) pivots: Vec<usize>,
    accepted_ratios: Vec<f64>,
    rejected_ratios: Vec<(usize, f64)>,
    tol: f64,
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(v, q);
        axpy(-c, q, v);
    }
}

impl PivotedQr {
    pub(crate) fn factor(family: &VectorFamily, must_keep: &[usize], tol: f64) -> Result<Self> {
        check_tol(tol)?;
        let n = family.len();
        for &k in must_keep {
            if k >= n {
                return Err(Error::IndexOutOfRange { index: k, len: n });
            }
        }
        let norms: Vec<f64> = family.vectors().iter().map(|v| norm(v)).collect();
        let mut residuals: Vec<Vec<f64>> = family.vectors().to_vec();
        let mut selected = vec![false; n];
        let mut qr = Self {
            q: Vec::new(),
            r: Vec::new(),
            pivots: Vec::new(),
            accepted_ratios: Vec::new(),
            rejected_ratios: Vec::new(),
            tol,
        };
        let ratio = |res: &[f64], nrm: f64| if nrm > 0.0 { norm(res) / nrm } else { 0.0 };

        for &k in must_keep {
            if selected[k] {
                continue;
            }
            let rk = ratio(&residuals[k], norms[k]);
            if rk <= tol {
                return Err(Error::DependentMustKeep(k));
            }
            qr.accept(family, k, rk, &mut residuals, &selected);
            selected[k] = true;
        }

        while qr.pivots.len() < family.dim() {
            let mut best: Option<(usize, f64)> = None;
            for i in (0..n).filter(|&i| !selected[i]) {
                let ri = ratio(&residuals[i], norms[i]);
                match best {
                    Some((_, b)) if ri <= b * (1.0 + TIE_SLACK) => {}
                    _ => best = Some((i, ri)),
                }
            }
            match best {
                Some((i, ri)) if ri > tol => {
                    qr.accept(family, i, ri, &mut residuals, &selected);
                    selected[i] = true;
                }
                _ => break,
            }
        }

        qr.rejected_ratios = (0..n)
            .filter(|&i| !selected[i])
            .map(|i| (i, ratio(&residuals[i], norms[i])))
            .collect();
        Ok(qr)
    }

    fn accept(
        &mut self,
        family: &VectorFamily,
        pos: usize,
        ratio: f64,
        residuals: &mut [Vec<f64>],
        selected: &[bool],
    ) {
        let v = family.vector(pos);
        // second pass keeps the basis orthonormal to working precision
        let mut q = residuals[pos].clone();
        orthogonalize(&mut q, &self.q);
        let qn = norm(&q);
        q.iter_mut().for_each(|x| *x /= qn);
        self.q.push(q);
        let col: Vec<f64> = self.q.iter().map(|qi| dot(v, qi)).collect();
        self.r.push(col);
        self.pivots.push(pos);
        self.accepted_ratios.push(ratio);
        let qj = self.q.last().expect("just pushed");
        for (i, res) in residuals.iter_mut().enumerate() {
            if i != pos && !selected[i] {
                let c = dot(res, qj);
                axpy(-c, qj, res);
            }
        }
    }

    pub(crate) fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub(crate) fn certificate(&self) -> RankCertificate {
        let smallest_accepted = self
            .accepted_ratios
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let smallest_accepted = if smallest_accepted.is_finite() {
            smallest_accepted
        } else {
            0.0
        };
        let largest_rejected = self
            .rejected_ratios
            .iter()
            .map(|&(_, r)| r)
            .fold(0.0, f64::max);
        let borderline = (self.rank() > 0 && smallest_accepted < BORDERLINE_FACTOR * self.tol)
            || largest_rejected > self.tol / BORDERLINE_FACTOR;
        RankCertificate {
            rank: self.rank(),
            pivot_indices: self.pivots.clone(),
            smallest_accepted,
            largest_rejected,
            borderline,
        }
    }

    /// Solve `R c = y` for upper-triangular `R` given column-wise.
    fn back_substitute(&self, y: &[f64]) -> Vec<f64> {
        let k = self.rank();
        let mut c = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = y[i];
            for (j, cj) in c.iter().enumerate().skip(i + 1) {
                s -= self.r[j][i] * cj;
            }
            c[i] = s / self.r[i][i];
        }
        c
    }

    /// Least-squares coefficients of `target` on the pivot vectors, in pivot order.
    pub(crate) fn coefficients(&self, target: &[f64]) -> Vec<f64> {
        let y: Vec<f64> = self.q.iter().map(|q| dot(target, q)).collect();
        self.back_substitute(&y)
    }

    /// Solve the normal equations `(Vᵀ V) c = rhs` on the pivot vectors, with
    /// `rhs` in pivot order.
    pub(crate) fn solve_gram(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.rank();
        // Rᵀ z = rhs
        let mut z = vec![0.0; k];
        for i in 0..k {
            let mut s = rhs[i];
            for (j, zj) in z.iter().enumerate().take(i) {
                s -= self.r[i][j] * zj;
            }
            z[i] = s / self.r[i][i];
        }
        self.back_substitute(&z)
    }

    /// Component of `v` orthogonal to the span of the pivots.
    pub(crate) fn orthogonal_residual(&self, v: &[f64]) -> Vec<f64> {
        let mut res = v.to_vec();
        orthogonalize(&mut res, &self.q);
        orthogonalize(&mut res, &self.q);
        res
    }
}

/// Determinant of the Gram matrix `[⟨v_i, v_j⟩]`, via LU factorisation with
/// partial pivoting.
pub fn gram_determinant(family: &VectorFamily) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let k = family.len();
    let mut m: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| dot(family.vector(i), family.vector(j)))
                .collect()
        })
        .collect();
    let mut det = 1.0;
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("non-empty range");
        if m[piv][col] == 0.0 {
            return Ok(0.0);
        }
        if piv != col {
            m.swap(piv, col);
            det = -det;
        }
        let p = m[col][col];
        det *= p;
        for row in col + 1..k {
            let f = m[row][col] / p;
            if f != 0.0 {
                for j in col..k {
                    m[row][j] -= f * m[col][j];
                }
            }
        }
    }
    Ok(det)
}

pub fn numerical_rank(family: &VectorFamily, tol: f64) -> Result<RankCertificate> {
    Ok(PivotedQr::factor(family, &[], tol)?.certificate())
}

/// Find one linear dependency among the family, if there is one.
///
/// The witness expresses the first rejected vector (in family order) through
/// the accepted pivots; that vector gets a positive coefficient.
pub fn dependency_witness(family: &VectorFamily, tol: f64) -> Result<Dependency> {
    let qr = PivotedQr::factor(family, &[], tol)?;
    let Some(&(rejected, _)) = qr.rejected_ratios.first() else {
        return Ok(Dependency::Independent);
    };
    let coeffs = qr.coefficients(family.vector(rejected));
    let mut beta = vec![0.0; family.len()];
    beta[rejected] = 1.0;
    for (&p, c) in qr.pivots.iter().zip(&coeffs) {
        beta[p] = -c;
    }
    let scale = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    for b in beta.iter_mut() {
        *b /= scale;
        if b.abs() < 1e-14 {
            *b = 0.0;
        }
    }
    let support = (0..beta.len()).filter(|&i| beta[i] != 0.0).collect();
    Ok(Dependency::Dependent(DependencyWitness {
        coefficients: beta,
        support,
    }))
}

/// Maximal independent subfamily containing `must_keep`.
///
/// The forced positions come first, in their given order; the rest follow
/// the greedy pivot order.
pub fn max_independent_subfamily(
    family: &VectorFamily,
    must_keep: &[usize],
    tol: f64,
) -> Result<Vec<usize>> {
    Ok(PivotedQr::factor(family, must_keep, tol)?.pivots)
}
