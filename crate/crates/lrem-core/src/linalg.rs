//! Thin wrappers over the system BLAS/LAPACK (OpenBLAS).
//!
//! Only the three routines the solvers actually need are bound: `zhegv` for
//! dense Hermitian generalized eigenvalues, `zgbtrf`/`zgbtrs` for banded
//! complex LU, and `dgemm` for batched network math.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

extern "C" {
    fn zhegv_(
        itype: *const i32,
        jobz: *const u8,
        uplo: *const u8,
        n: *const i32,
        a: *mut Complex64,
        lda: *const i32,
        b: *mut Complex64,
        ldb: *const i32,
        w: *mut f64,
        work: *mut Complex64,
        lwork: *const i32,
        rwork: *mut f64,
        info: *mut i32,
    );
    fn zgbtrf_(
        m: *const i32,
        n: *const i32,
        kl: *const i32,
        ku: *const i32,
        ab: *mut Complex64,
        ldab: *const i32,
        ipiv: *mut i32,
        info: *mut i32,
    );
    fn zgbtrs_(
        trans: *const u8,
        n: *const i32,
        kl: *const i32,
        ku: *const i32,
        nrhs: *const i32,
        ab: *const Complex64,
        ldab: *const i32,
        ipiv: *const i32,
        b: *mut Complex64,
        ldb: *const i32,
        info: *mut i32,
    );
    fn dgemm_(
        transa: *const u8,
        transb: *const u8,
        m: *const i32,
        n: *const i32,
        k: *const i32,
        alpha: *const f64,
        a: *const f64,
        lda: *const i32,
        b: *const f64,
        ldb: *const i32,
        beta: *const f64,
        c: *mut f64,
        ldc: *const i32,
    );
    fn openblas_set_num_threads(n: i32);
}

/// Cap the BLAS thread pool. Call once at startup; the crate parallelizes at
/// the task level (k-points, frequencies, trials) instead.
pub fn set_blas_threads(n: usize) {
    unsafe { openblas_set_num_threads(n.max(1) as i32) }
}

/// Eigenvalues of the Hermitian generalized problem `A x = lambda B x` with
/// `B` Hermitian positive definite, ascending. Only the lower triangles are
/// referenced.
pub fn hermitian_gen_eigenvalues(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::Shape(format!(
            "eigen pencil shapes {}x{} and {}x{} must be square and equal",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut a = a.clone();
    let mut b = b.clone();
    let ni = n as i32;
    let itype = 1i32;
    let jobz = b'N';
    let uplo = b'L';
    let mut w = vec![0.0f64; n];
    let mut rwork = vec![0.0f64; (3 * n).max(1)];
    let mut info = 0i32;
    // workspace query
    let mut query = [Complex64::new(0.0, 0.0)];
    let lwork_query = -1i32;
    unsafe {
        zhegv_(
            &itype,
            &jobz,
            &uplo,
            &ni,
            a.as_mut_slice().as_mut_ptr(),
            &ni,
            b.as_mut_slice().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            query.as_mut_ptr(),
            &lwork_query,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    let lwork = (query[0].re as i32).max(2 * ni - 1).max(1);
    let mut work = vec![Complex64::new(0.0, 0.0); lwork as usize];
    unsafe {
        zhegv_(
            &itype,
            &jobz,
            &uplo,
            &ni,
            a.as_mut_slice().as_mut_ptr(),
            &ni,
            b.as_mut_slice().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numeric(if info > ni {
            format!(
                "mass matrix not positive definite (leading minor {} of B)",
                info - ni
            )
        } else {
            format!("zhegv failed to converge (info = {info}, n = {n})")
        }));
    }
    Ok(w)
}

/// LU factorization of a complex banded matrix in LAPACK band storage.
pub struct BandedLu {
    n: i32,
    kl: i32,
    ku: i32,
    ldab: i32,
    ab: Vec<Complex64>,
    ipiv: Vec<i32>,
}

/// Assembly buffer for a complex banded matrix with `kl` sub- and `ku`
/// super-diagonals, stored ready for `zgbtrf` (leading dimension
/// `2 * kl + ku + 1`).
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<Complex64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, ldab, ab: vec![Complex64::new(0.0, 0.0); ldab * n] }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(j as i64 - i as i64 <= self.ku as i64 && i as i64 - j as i64 <= self.kl as i64);
        let row = self.kl + self.ku + i - j;
        self.ab[j * self.ldab + row] += v;
    }

    pub fn factor(self) -> Result<BandedLu> {
        let (n, kl, ku, ldab) = (self.n as i32, self.kl as i32, self.ku as i32, self.ldab as i32);
        let mut ab = self.ab;
        let mut ipiv = vec![0i32; self.n];
        let mut info = 0i32;
        unsafe {
            zgbtrf_(&n, &n, &kl, &ku, ab.as_mut_ptr(), &ldab, ipiv.as_mut_ptr(), &mut info);
        }
        if info != 0 {
            return Err(Error::Numeric(format!(
                "banded LU factorization failed: singular at pivot {info}"
            )));
        }
        Ok(BandedLu { n, kl, ku, ldab, ab, ipiv })
    }
}

impl BandedLu {
    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) -> Result<()> {
        if b.len() != self.n as usize {
            return Err(Error::Shape(format!(
                "rhs length {} != system size {}",
                b.len(),
                self.n
            )));
        }
        let trans = b'N';
        let nrhs = 1i32;
        let mut info = 0i32;
        unsafe {
            zgbtrs_(
                &trans,
                &self.n,
                &self.kl,
                &self.ku,
                &nrhs,
                self.ab.as_ptr(),
                &self.ldab,
                self.ipiv.as_ptr(),
                b.as_mut_ptr(),
                &self.n,
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Numeric(format!("banded solve failed (info = {info})")));
        }
        Ok(())
    }
}

/// `C = alpha * op(A) * op(B) + beta * C` on column-major `DMatrix` storage.
pub fn gemm(
    alpha: f64,
    a: &DMatrix<f64>,
    trans_a: bool,
    b: &DMatrix<f64>,
    trans_b: bool,
    beta: f64,
    c: &mut DMatrix<f64>,
) {
    let (am, ak) = if trans_a { (a.ncols(), a.nrows()) } else { (a.nrows(), a.ncols()) };
    let (bk, bn) = if trans_b { (b.ncols(), b.nrows()) } else { (b.nrows(), b.ncols()) };
    assert_eq!(ak, bk, "gemm inner dimensions {ak} != {bk}");
    assert_eq!((c.nrows(), c.ncols()), (am, bn), "gemm output shape");
    let (m, n, k) = (am as i32, bn as i32, ak as i32);
    let lda = a.nrows() as i32;
    let ldb = b.nrows() as i32;
    let ldc = c.nrows() as i32;
    let ta = if trans_a { b'T' } else { b'N' };
    let tb = if trans_b { b'T' } else { b'N' };
    unsafe {
        dgemm_(
            &ta,
            &tb,
            &m,
            &n,
            &k,
            &alpha,
            a.as_slice().as_ptr(),
            &lda,
            b.as_slice().as_ptr(),
            &ldb,
            &beta,
            c.as_mut_slice().as_mut_ptr(),
            &ldc,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_eigen_matches_hand_solved_pencil() {
        // A = diag(1, 4), B = diag(1, 2) -> lambda = 1, 2
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(4.0, 0.0),
        ]));
        let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
        ]));
        let w = hermitian_gen_eigenvalues(&a, &b).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gen_eigen_rejects_indefinite_mass() {
        let a = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let b = DMatrix::from_element(1, 1, Complex64::new(-1.0, 0.0));
        assert!(hermitian_gen_eigenvalues(&a, &b).is_err());
    }

    #[test]
    fn banded_solve_matches_dense() {
        let n = 12;
        let (kl, ku) = (2, 2);
        let mut banded = BandedMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::<Complex64>::zeros(n, n);
        let mut s = 9u64;
        let mut r = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                let v = Complex64::new(r() + if i == j { 4.0 } else { 0.0 }, r());
                banded.add(i, j, v);
                dense[(i, j)] += v;
            }
        }
        let rhs: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let mut x = rhs.clone();
        banded.factor().unwrap().solve_in_place(&mut x).unwrap();
        let xv = nalgebra::DVector::from_vec(x.clone());
        let resid = &dense * &xv - nalgebra::DVector::from_vec(rhs);
        assert!(resid.norm() < 1e-10, "residual {}", resid.norm());
    }

    #[test]
    fn gemm_matches_nalgebra() {
        let a = DMatrix::from_fn(3, 4, |i, j| (i * 7 + j) as f64 * 0.3 - 1.0);
        let b = DMatrix::from_fn(4, 2, |i, j| (i as f64) - (j as f64) * 0.5);
        let mut c = DMatrix::zeros(3, 2);
        gemm(1.0, &a, false, &b, false, 0.0, &mut c);
        assert!((&c - &a * &b).norm() < 1e-13);

        let mut ct = DMatrix::zeros(4, 4);
        gemm(2.0, &a, true, &a, false, 0.0, &mut ct);
        assert!((&ct - 2.0 * a.transpose() * &a).norm() < 1e-12);
    }
}
