//! Kronecker-product algebra.
//!
//! Vectorization stacks columns, so the identity tying matrix and vector
//! forms together is `vec(L D Rᵀ) = (R ⊗ L) vec(D)`. A sum of pairs
//! `Σ_j L_j D R_jᵀ` therefore corresponds to the projector `Σ_j R_j ⊗ L_j`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Column-stacking vectorization.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::Shape(format!(
            "cannot unvec length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Kronecker product: block `(i, j)` of the result is `a[(i, j)] * b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// A `W ∈ ℝ^{(pr)×(qs)}` reshaped so that each `r×s` block becomes one row.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangedMatrix {
    /// `(pq) × (rs)`; row `i + j·p` is `vec(W_ij)ᵀ`.
    pub matrix: DMatrix<f64>,
    /// Block grid `p × q`.
    pub grid: (usize, usize),
    /// Block shape `r × s`.
    pub block: (usize, usize),
}

fn check_factoring(w: &DMatrix<f64>, p: usize, q: usize, r: usize, s: usize) -> Result<()> {
    if p == 0 || q == 0 || r == 0 || s == 0 || w.nrows() != p * r || w.ncols() != q * s {
        return Err(Error::Shape(format!(
            "{}x{} matrix does not factor as ({p}*{r})x({q}*{s})",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(())
}

/// Rearrange `W` (a `p×q` grid of `r×s` blocks) so that `A ⊗ B` maps to the
/// rank-one matrix `vec(A) vec(B)ᵀ`. Rows run down block columns first.
pub fn rearrange(w: &DMatrix<f64>, p: usize, q: usize, r: usize, s: usize) -> Result<RearrangedMatrix> {
    check_factoring(w, p, q, r, s)?;
    let mut out = DMatrix::zeros(p * q, r * s);
    for j in 0..q {
        for i in 0..p {
            let row = i + j * p;
            let block = w.view((i * r, j * s), (r, s));
            for c in 0..s {
                for rr in 0..r {
                    out[(row, rr + c * r)] = block[(rr, c)];
                }
            }
        }
    }
    Ok(RearrangedMatrix {
        matrix: out,
        grid: (p, q),
        block: (r, s),
    })
}

/// Inverse of [`rearrange`].
pub fn unrearrange(w: &RearrangedMatrix) -> DMatrix<f64> {
    let (p, q) = w.grid;
    let (r, s) = w.block;
    let mut out = DMatrix::zeros(p * r, q * s);
    for j in 0..q {
        for i in 0..p {
            let row = i + j * p;
            for c in 0..s {
                for rr in 0..r {
                    out[(i * r + rr, j * s + c)] = w.matrix[(row, rr + c * r)];
                }
            }
        }
    }
    out
}

/// `W ≈ Σ_t outer_t ⊗ inner_t` obtained from the SVD of the rearranged `W`.
#[derive(Debug, Clone)]
pub struct KronDecomposition {
    /// `p × q` factors, scaled by `√σ_t`.
    pub outer: Vec<DMatrix<f64>>,
    /// `r × s` factors, scaled by `√σ_t`.
    pub inner: Vec<DMatrix<f64>>,
    /// Singular values of the retained terms.
    pub singular_values: Vec<f64>,
    /// Full singular spectrum of the rearranged matrix, descending.
    pub spectrum: Vec<f64>,
}

impl KronDecomposition {
    pub fn len(&self) -> usize {
        self.outer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outer.is_empty()
    }

    /// `Σ_t outer_t ⊗ inner_t`, for the first `terms` terms.
    pub fn reassemble(&self, terms: usize) -> DMatrix<f64> {
        let (p, q) = self.outer.first().map(|m| m.shape()).unwrap_or((0, 0));
        let (r, s) = self.inner.first().map(|m| m.shape()).unwrap_or((0, 0));
        let mut w = DMatrix::zeros(p * r, q * s);
        for (o, i) in self.outer.iter().zip(&self.inner).take(terms) {
            w += kron(o, i);
        }
        w
    }

    /// Frobenius error of keeping the first `terms` terms: the tail energy of
    /// the rearranged spectrum.
    pub fn truncation_error(&self, terms: usize) -> f64 {
        self.spectrum.iter().skip(terms).map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Kronecker-rank decomposition of `W ∈ ℝ^{(pr)×(qs)}`.
///
/// Terms are kept while `σ_t > max(pq, rs)·ε·σ_max`; `max_pairs` caps the
/// count further, giving the best Frobenius approximation of that Kronecker
/// rank.
pub fn kron_rank_decompose(
    w: &DMatrix<f64>,
    p: usize,
    q: usize,
    r: usize,
    s: usize,
    max_pairs: Option<usize>,
) -> Result<KronDecomposition> {
    let rearranged = rearrange(w, p, q, r, s)?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Kronecker decomposition"));
    }
    let svd = rearranged.matrix.svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let spectrum: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let sigma_max = spectrum.first().copied().unwrap_or(0.0);
    let cutoff = (p * q).max(r * s) as f64 * f64::EPSILON * sigma_max;
    let numerical_rank = spectrum.iter().take_while(|&&x| x > cutoff).count();
    let keep = max_pairs.map_or(numerical_rank, |m| m.min(numerical_rank));

    let mut outer = Vec::with_capacity(keep);
    let mut inner = Vec::with_capacity(keep);
    for &idx in order.iter().take(keep) {
        let root = svd.singular_values[idx].sqrt();
        let mut uo = u.column(idx).into_owned();
        let mut vi = v_t.row(idx).transpose();
        // gauge: largest entry of the outer factor positive
        let lead = uo.iter().copied().fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            uo.neg_mut();
            vi.neg_mut();
        }
        outer.push(DMatrix::from_column_slice(p, q, (uo * root).as_slice()));
        inner.push(DMatrix::from_column_slice(r, s, (vi * root).as_slice()));
    }
    Ok(KronDecomposition {
        singular_values: spectrum[..keep].to_vec(),
        outer,
        inner,
        spectrum,
    })
}

/// One `(L, R)` pair: `L ∈ ℝ^{n1×k1}`, `R ∈ ℝ^{n2×k2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct KronPair {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

impl KronPair {
    pub fn new(left: DMatrix<f64>, right: DMatrix<f64>) -> Self {
        Self { left, right }
    }
}

/// An ordered, non-empty list of pairs sharing the shape `(n1×k1, n2×k2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KronPairList {
    pairs: Vec<KronPair>,
}

impl KronPairList {
    pub fn new(pairs: Vec<KronPair>) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or_else(|| Error::InvalidArgument("a pair list needs at least one pair".into()))?;
        let (ls, rs) = (first.left.shape(), first.right.shape());
        if ls.0 == 0 || ls.1 == 0 || rs.0 == 0 || rs.1 == 0 {
            return Err(Error::Shape("pair factors must be non-empty".into()));
        }
        for (j, p) in pairs.iter().enumerate() {
            if p.left.shape() != ls || p.right.shape() != rs {
                return Err(Error::Shape(format!(
                    "pair {j} has shapes {:?}/{:?}, expected {ls:?}/{rs:?}",
                    p.left.shape(),
                    p.right.shape()
                )));
            }
        }
        Ok(Self { pairs })
    }

    /// Decompose a vectorized-sample projector `W ∈ ℝ^{(n1 n2)×(k1 k2)}` into
    /// pairs with `W = Σ_j R_j ⊗ L_j`. A zero `W` yields a single zero pair.
    pub fn from_projector(
        w: &DMatrix<f64>,
        (n1, k1, n2, k2): (usize, usize, usize, usize),
        max_pairs: Option<usize>,
    ) -> Result<(Self, KronDecomposition)> {
        let dec = kron_rank_decompose(w, n2, k2, n1, k1, max_pairs)?;
        let pairs = if dec.is_empty() {
            vec![KronPair::new(DMatrix::zeros(n1, k1), DMatrix::zeros(n2, k2))]
        } else {
            dec.inner
                .iter()
                .zip(&dec.outer)
                .map(|(l, r)| KronPair::new(l.clone(), r.clone()))
                .collect()
        };
        Ok((Self::new(pairs)?, dec))
    }

    pub fn pairs(&self) -> &[KronPair] {
        &self.pairs
    }

    pub fn pairs_mut(&mut self) -> &mut [KronPair] {
        &mut self.pairs
    }

    pub fn into_pairs(self) -> Vec<KronPair> {
        self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(n1, n2, k1, k2)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let p = &self.pairs[0];
        (p.left.nrows(), p.right.nrows(), p.left.ncols(), p.right.ncols())
    }

    /// Number of free factor entries, `k·(n1 k1 + n2 k2)`.
    pub fn parameter_count(&self) -> usize {
        let (n1, n2, k1, k2) = self.dims();
        self.len() * (n1 * k1 + n2 * k2)
    }

    /// Dense `B = Σ_j R_j ⊗ L_j`, of shape `(n1 n2) × (k1 k2)`.
    pub fn dense_projector(&self) -> DMatrix<f64> {
        let (n1, n2, k1, k2) = self.dims();
        let mut b = DMatrix::zeros(n1 * n2, k1 * k2);
        for p in &self.pairs {
            b += kron(&p.right, &p.left);
        }
        b
    }
}

/// `Σ_j L_j D R_jᵀ`, computed factor by factor.
pub fn apply_pairs(pairs: &KronPairList, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n1, n2, k1, k2) = pairs.dims();
    if d.shape() != (k1, k2) {
        return Err(Error::Shape(format!(
            "core is {}x{}, pairs expect {k1}x{k2}",
            d.nrows(),
            d.ncols()
        )));
    }
    let mut out = DMatrix::zeros(n1, n2);
    for p in pairs.pairs() {
        let ld = &p.left * d;
        out.gemm(1.0, &ld, &p.right.transpose(), 1.0);
    }
    Ok(out)
}
