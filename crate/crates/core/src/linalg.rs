//! Projection and factorization primitives shared by all samplers.
//!
//! The projection onto the column space of the design matrix is applied
//! through its thin QR factor (`P v = Q(Q'v)`), never through a dense hat
//! matrix; the dense annihilator `I - QQ'` is materialized only where a
//! factorization genuinely needs the full matrix.

use crate::{Error, Real, Result};
use nalgebra::{DMatrix, DVector};

/// Relative tolerance of the QR rank test.
const RANK_RTOL: f64 = 1e-10;

/// Relative symmetry tolerance accepted by [`chol_spd`].
const SYMMETRY_RTOL: f64 = 1e-10;

/// Thin QR of the design matrix plus an orthonormal basis of its
/// orthogonal complement.
///
/// Immutable after construction; safe to share across worker threads.
#[derive(Debug, Clone)]
pub struct ProjectionCache<T: Real> {
    q: DMatrix<T>,
    r: DMatrix<T>,
    l: DMatrix<T>,
    xtx_inv: DMatrix<T>,
}

impl<T: Real> ProjectionCache<T> {
    /// Factorizes an `n x p` design matrix with full column rank.
    ///
    /// Fails with [`Error::Dimension`] when `n <= p` or `p == 0`, and with
    /// [`Error::RankDeficient`] when the smallest R diagonal falls below
    /// `1e-10` times the largest.
    pub fn build(x: &DMatrix<T>) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 || n <= p {
            return Err(Error::Dimension(format!(
                "design matrix must be n x p with n > p >= 1, got {n} x {p}"
            )));
        }
        let qr = x.clone().qr();
        let mut q = qr.q();
        let mut r = qr.r();
        // Fix the QR sign ambiguity: positive R diagonal.
        for j in 0..p {
            if r[(j, j)] < T::zero() {
                for k in j..p {
                    r[(j, k)] = -r[(j, k)];
                }
                for i in 0..n {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        let diag_max = (0..p).map(|j| r[(j, j)].abs()).fold(T::zero(), fmax);
        let diag_min = (0..p).map(|j| r[(j, j)].abs()).fold(diag_max, fmin);
        if diag_min <= T::of(RANK_RTOL) * diag_max {
            return Err(Error::RankDeficient(format!(
                "smallest R diagonal {diag_min:?} below tolerance relative to {diag_max:?}"
            )));
        }
        let l = complement_basis(&q);
        // (X'X)^{-1} = R^{-1} R^{-T}
        let r_inv = r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .ok_or_else(|| Error::RankDeficient("R not invertible".into()))?;
        let xtx_inv = &r_inv * r_inv.transpose();
        Ok(Self { q, r, l, xtx_inv })
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.q.ncols()
    }

    /// Thin orthonormal factor `Q`.
    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }

    /// Upper-triangular factor `R` with positive diagonal.
    pub fn r_factor(&self) -> &DMatrix<T> {
        &self.r
    }

    /// Orthonormal basis of the orthogonal complement of `col(X)`,
    /// `n x (n - p)`, each column's first nonzero entry positive.
    pub fn l(&self) -> &DMatrix<T> {
        &self.l
    }

    /// `(X'X)^{-1}`.
    pub fn xtx_inv(&self) -> &DMatrix<T> {
        &self.xtx_inv
    }

    /// `P v = Q(Q'v)`.
    pub fn apply_p(&self, v: &DVector<T>) -> DVector<T> {
        &self.q * (self.q.transpose() * v)
    }

    /// `(I - P) v = v - Q(Q'v)`.
    pub fn apply_ip(&self, v: &DVector<T>) -> DVector<T> {
        v - self.apply_p(v)
    }

    /// `(X'X)^{-1} X' v = R^{-1} (Q'v)`.
    pub fn project_coef(&self, v: &DVector<T>) -> DVector<T> {
        let qtv = self.q.transpose() * v;
        self.r
            .solve_upper_triangular(&qtv)
            .expect("R invertible by construction")
    }

    /// Dense `I - QQ'`, needed when a factorization must see the whole
    /// annihilator at once (grid precomputation, test oracles).
    pub fn annihilator(&self) -> DMatrix<T> {
        let n = self.n();
        let mut m = DMatrix::identity(n, n);
        m.gemm(-T::one(), &self.q, &self.q.transpose(), T::one());
        m
    }
}

fn fmax<T: Real>(a: T, b: T) -> T {
    if a > b {
        a
    } else {
        b
    }
}

fn fmin<T: Real>(a: T, b: T) -> T {
    if a < b {
        a
    } else {
        b
    }
}

/// Completes `Q` to an orthonormal basis of R^n and returns the trailing
/// `n - p` columns. Gram-Schmidt over the identity with a second
/// orthogonalization pass; columns are signed so the first entry of
/// magnitude above tolerance is positive.
fn complement_basis<T: Real>(q: &DMatrix<T>) -> DMatrix<T> {
    let (n, p) = q.shape();
    let mut basis: Vec<DVector<T>> = Vec::with_capacity(n - p);
    let tol = T::of(1e-8);
    for j in 0..n {
        if basis.len() == n - p {
            break;
        }
        let mut v = DVector::zeros(n);
        v[j] = T::one();
        for _pass in 0..2 {
            let coef = q.transpose() * &v;
            v -= q * coef;
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, T::one());
            }
        }
        let norm = v.norm();
        if norm > tol {
            v /= norm;
            basis.push(v);
        }
    }
    debug_assert_eq!(basis.len(), n - p);
    let mut l = DMatrix::from_columns(&basis);
    for mut col in l.column_iter_mut() {
        let lead = col.iter().copied().find(|x| x.abs() > T::of(1e-12));
        if let Some(x) = lead {
            if x < T::zero() {
                col *= -T::one();
            }
        }
    }
    l
}

/// Lower-triangular Cholesky factor of an SPD matrix with its cached
/// log-determinant.
#[derive(Debug, Clone)]
pub struct SpdFactor<T: Real> {
    lower: DMatrix<T>,
    logdet: T,
    jitter_applied: bool,
}

/// Factorizes `m + jitter * I`, verifying symmetry first.
///
/// `jitter` must be nonnegative; covariance builders pass their own ridge
/// explicitly, so the default for user matrices is zero.
pub fn chol_spd<T: Real>(m: &DMatrix<T>, jitter: T) -> Result<SpdFactor<T>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {} x {}",
            n,
            m.ncols()
        )));
    }
    if jitter < T::zero() {
        return Err(Error::InvalidHyperparameter("jitter must be nonnegative".into()));
    }
    let scale = m.iter().fold(T::one(), |a, &x| fmax(a, x.abs()));
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > T::of(SYMMETRY_RTOL) * scale {
                return Err(Error::Dimension(format!(
                    "matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut work = m.clone();
    if jitter > T::zero() {
        for i in 0..n {
            work[(i, i)] += jitter;
        }
    }
    let chol = work
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let lower = chol.unpack();
    let logdet = (0..n).fold(T::zero(), |acc, i| acc + lower[(i, i)].ln()) * T::of(2.0);
    Ok(SpdFactor {
        lower,
        logdet,
        jitter_applied: jitter > T::zero(),
    })
}

impl<T: Real> SpdFactor<T> {
    /// Dimension of the factored matrix.
    pub fn n(&self) -> usize {
        self.lower.nrows()
    }

    /// Lower-triangular factor `C` with `M = CC'`.
    pub fn lower(&self) -> &DMatrix<T> {
        &self.lower
    }

    /// `log det M = 2 sum(log diag C)`.
    pub fn logdet(&self) -> T {
        self.logdet
    }

    /// Whether a positive jitter was folded into the factored matrix.
    pub fn jitter_applied(&self) -> bool {
        self.jitter_applied
    }

    /// `M^{-1} b` through two triangular solves.
    pub fn solve_vec(&self, b: &DVector<T>) -> Result<DVector<T>> {
        if b.len() != self.n() {
            return Err(Error::Dimension(format!(
                "solve expects length {}, got {}",
                self.n(),
                b.len()
            )));
        }
        let y = self
            .lower
            .solve_lower_triangular(b)
            .ok_or_else(|| Error::NotPositiveDefinite("singular factor".into()))?;
        self.lower
            .transpose()
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::NotPositiveDefinite("singular factor".into()))
    }

    /// `M^{-1} B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<T>) -> Result<DMatrix<T>> {
        if b.nrows() != self.n() {
            return Err(Error::Dimension(format!(
                "solve expects {} rows, got {}",
                self.n(),
                b.nrows()
            )));
        }
        let y = self
            .lower
            .solve_lower_triangular(b)
            .ok_or_else(|| Error::NotPositiveDefinite("singular factor".into()))?;
        self.lower
            .transpose()
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::NotPositiveDefinite("singular factor".into()))
    }

    /// Solves `C' x = b`; with `b` standard normal, `x ~ N(0, M^{-1})`.
    pub fn solve_upper_transpose(&self, b: &DVector<T>) -> Result<DVector<T>> {
        self.lower
            .transpose()
            .solve_upper_triangular(b)
            .ok_or_else(|| Error::NotPositiveDefinite("singular factor".into()))
    }

    /// `C b`; with `b` standard normal this draws from `N(0, M)`.
    pub fn lower_mul(&self, b: &DVector<T>) -> DVector<T> {
        &self.lower * b
    }

    /// Dense `M^{-1}`.
    pub fn inverse(&self) -> Result<DMatrix<T>> {
        self.solve_mat(&DMatrix::identity(self.n(), self.n()))
    }
}

/// Convenience wrapper matching the operation contract: `M^{-1} b`.
pub fn solve_spd<T: Real>(factor: &SpdFactor<T>, b: &DVector<T>) -> Result<DVector<T>> {
    factor.solve_vec(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn intercept_projection_is_the_mean() {
        let x = dmatrix![1.0; 1.0];
        let proj = ProjectionCache::build(&x).unwrap();
        let v = dvector![1.0, 3.0];
        let pv = proj.apply_p(&v);
        assert_relative_eq!(pv, dvector![2.0, 2.0], epsilon = 1e-12);
        let ipv = proj.apply_ip(&v);
        assert_relative_eq!(ipv, dvector![-1.0, 1.0], epsilon = 1e-12);
    }

    #[test]
    fn intercept_complement_sign_convention() {
        let x = dmatrix![1.0; 1.0];
        let proj = ProjectionCache::build(&x).unwrap();
        let l = proj.l();
        assert_eq!(l.shape(), (2, 1));
        let s = 1.0 / 2.0_f64.sqrt();
        assert_relative_eq!(l[(0, 0)], s, epsilon = 1e-12);
        assert_relative_eq!(l[(1, 0)], -s, epsilon = 1e-12);
    }

    #[test]
    fn complement_matches_dense_hat_matrix_oracle() {
        let x = random_matrix(10, 3, 42);
        let proj = ProjectionCache::build(&x).unwrap();
        // dense oracle P = X (X'X)^{-1} X'
        let xtx = x.transpose() * &x;
        let p_dense = &x * xtx.try_inverse().unwrap() * x.transpose();
        let ip_dense = DMatrix::identity(10, 10) - &p_dense;
        let xtl = x.transpose() * proj.l();
        assert!(xtl.amax() < 1e-10, "X'L = 0 violated: {}", xtl.amax());
        let llt = proj.l() * proj.l().transpose();
        assert!((llt - &ip_dense).amax() < 1e-10);
        // Q'Q = I and L'L = I
        let qtq = proj.q().transpose() * proj.q();
        assert!((qtq - DMatrix::identity(3, 3)).norm() < 1e-10);
        let ltl = proj.l().transpose() * proj.l();
        assert!((ltl - DMatrix::identity(7, 7)).norm() < 1e-10);
    }

    #[test]
    fn projection_splits_vectors_exactly() {
        let x = random_matrix(12, 4, 7);
        let proj = ProjectionCache::build(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let v = DVector::from_fn(12, |_, _| rng.random_range(-5.0..5.0));
            let back = proj.apply_p(&v) + proj.apply_ip(&v);
            assert!((back - &v).amax() < 1e-12);
            // idempotence
            let once = proj.apply_ip(&v);
            let twice = proj.apply_ip(&once);
            assert!((&twice - &once).amax() < 1e-10);
            // LL' action equals (I-P) action
            let via_l = proj.l() * (proj.l().transpose() * &v);
            assert!((via_l - once).amax() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let mut x = DMatrix::zeros(6, 2);
        for i in 0..6 {
            x[(i, 0)] = (i + 1) as f64;
            x[(i, 1)] = 2.0 * (i + 1) as f64;
        }
        assert!(matches!(
            ProjectionCache::build(&x),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn short_design_is_rejected() {
        let x = DMatrix::from_element(2, 3, 1.0);
        assert!(matches!(ProjectionCache::build(&x), Err(Error::Dimension(_))));
    }

    #[test]
    fn chol_identity() {
        let f = chol_spd(&DMatrix::<f64>::identity(3, 3), 0.0).unwrap();
        assert!((f.lower() - DMatrix::identity(3, 3)).amax() < 1e-14);
        assert_relative_eq!(f.logdet(), 0.0, epsilon = 1e-14);
        assert!(!f.jitter_applied());
    }

    #[test]
    fn chol_two_by_two_closed_form() {
        let m = dmatrix![4.0, 2.0; 2.0, 3.0];
        let f = chol_spd(&m, 0.0).unwrap();
        let expected = dmatrix![2.0, 0.0; 1.0, 2.0_f64.sqrt()];
        assert_relative_eq!(f.lower(), &expected, epsilon = 1e-12);
        assert_relative_eq!(f.logdet(), 8.0_f64.ln(), epsilon = 1e-12);
        let rec = f.lower() * f.lower().transpose();
        assert!((rec - &m).norm() / m.norm() < 1e-8);
    }

    #[test]
    fn chol_pure_jitter() {
        let m = DMatrix::<f64>::zeros(2, 2);
        let f = chol_spd(&m, 0.01).unwrap();
        assert!(f.jitter_applied());
        assert_relative_eq!(f.logdet(), 2.0 * 0.01_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn chol_rejects_indefinite() {
        let m = dmatrix![1.0, 2.0; 2.0, 1.0];
        assert!(matches!(
            chol_spd(&m, 0.0),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn chol_rejects_asymmetric() {
        let m = dmatrix![1.0, 0.5; 0.0, 1.0];
        assert!(matches!(chol_spd(&m, 0.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn solve_examples() {
        let f = chol_spd(&DMatrix::<f64>::identity(2, 2), 0.0).unwrap();
        let x = solve_spd(&f, &dvector![5.0, -2.0]).unwrap();
        assert_relative_eq!(x, dvector![5.0, -2.0], epsilon = 1e-12);

        let f = chol_spd(&dmatrix![4.0, 2.0; 2.0, 3.0], 0.0).unwrap();
        let x = solve_spd(&f, &dvector![1.0, 0.0]).unwrap();
        assert_relative_eq!(x, dvector![0.375, -0.25], epsilon = 1e-12);

        let f = chol_spd(&dmatrix![2.0, 0.0; 0.0, 4.0], 0.0).unwrap();
        let x = solve_spd(&f, &dvector![2.0, 4.0]).unwrap();
        assert_relative_eq!(x, dvector![1.0, 1.0], epsilon = 1e-12);
    }

    #[test]
    fn solve_residual_is_small() {
        let a = random_matrix(8, 8, 11);
        let m = &a * a.transpose() + DMatrix::identity(8, 8);
        let f = chol_spd(&m, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = DVector::from_fn(8, |_, _| rng.random_range(-3.0..3.0));
        let x = f.solve_vec(&b).unwrap();
        let resid = (&m * x - &b).norm();
        assert!(resid <= 1e-8 * b.norm());
    }

    #[test]
    fn generic_scalar_f32_projection() {
        let x = nalgebra::DMatrix::<f32>::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
        let proj = ProjectionCache::build(&x).unwrap();
        let v = nalgebra::DVector::<f32>::from_column_slice(&[3.0, 0.0, 0.0]);
        let pv = proj.apply_p(&v);
        for i in 0..3 {
            assert!((pv[i] - 1.0).abs() < 1e-5);
        }
    }
}
