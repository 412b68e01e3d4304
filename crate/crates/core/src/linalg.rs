//! Small dense complex matrices and a cyclic Jacobi eigensolver for Hermitian
//! matrices. Everything here is at most a few dozen rows wide.

use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        CMatrix { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from rows. Panics if the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diag(values: &[Complex64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// |v⟩⟨v|
    pub fn outer(v: &[Complex64]) -> Self {
        let dim = v.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = v[i] * v[j].conj();
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(j, i)] = self[(i, j)].conj();
            }
        }
        m
    }

    pub fn conj(&self) -> Self {
        CMatrix { dim: self.dim, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        CMatrix { dim: self.dim, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn add(&self, other: &CMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &CMatrix) -> Self {
        let n = self.dim * other.dim;
        let mut m = Self::zeros(n);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let a = self[(i, j)];
                for k in 0..other.dim {
                    for l in 0..other.dim {
                        m[(i * other.dim + k, j * other.dim + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// max |M_ij - N_ij|
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of `U†U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        (&self.adjoint() * self).max_abs_diff(&Self::identity(self.dim))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// Eigen-decomposition of a Hermitian matrix. Only the Hermitian part of
    /// `self` is used.
    pub fn eigh(&self) -> HermitianEigen {
        jacobi_eigh(self)
    }

    /// Eigenvalues of a Hermitian matrix in ascending order.
    pub fn eigvalsh(&self) -> Vec<f64> {
        self.eigh().values
    }

    /// Principal square root of a positive semidefinite Hermitian matrix.
    /// Small negative eigenvalues from rounding are clamped to zero.
    pub fn sqrt_psd(&self) -> Self {
        let eig = self.eigh();
        let roots: Vec<Complex64> = eig
            .values
            .iter()
            .map(|&l| Complex64::new(l.max(0.0).sqrt(), 0.0))
            .collect();
        &(&eig.vectors * &Self::diag(&roots)) * &eig.vectors.adjoint()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

/// Eigenvalues (ascending) and the matching orthonormal eigenvectors stored
/// as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let n = a.dim;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

// Complex cyclic Jacobi. Each pivot block [[a, r e^{iφ}], [r e^{-iφ}, b]] is
// written as Φ M Φ† with Φ = diag(e^{iφ}, 1) and M real symmetric, so the
// rotation G = Φ R zeroes the pivot with an ordinary real Jacobi angle.
fn jacobi_eigh(input: &CMatrix) -> HermitianEigen {
    let n = input.dim;
    let mut a = input.add(&input.adjoint()).scale(Complex64::new(0.5, 0.0));
    let mut v = CMatrix::identity(n);
    let scale = a.data.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);

    for _sweep in 0..100 {
        if off_diagonal_norm(&a) <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let phase = apq / r;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = 0.5 * (2.0 * r).atan2(aqq - app);
                let (s, c) = theta.sin_cos();
                // G restricted to (p, q): [[e^{iφ} c, e^{iφ} s], [-s, c]]
                let gpp = phase * c;
                let gpq = phase * s;
                let gqp = Complex64::new(-s, 0.0);
                let gqq = Complex64::new(c, 0.0);

                // A <- A G (columns p, q)
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * gpp + akq * gqp;
                    a[(k, q)] = akp * gpq + akq * gqq;
                }
                // A <- G† A (rows p, q)
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = gpp.conj() * apk + gqp.conj() * aqk;
                    a[(q, k)] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * gpp + vkq * gqp;
                    v[(k, q)] = vkp * gpq + vkq * gqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, col)] = v[(k, src)];
        }
    }
    HermitianEigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pauli_y_spectrum() {
        let y = CMatrix::from_rows(&[vec![c(0., 0.), c(0., -1.)], vec![c(0., 1.), c(0., 0.)]]);
        let vals = y.eigvalsh();
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reconstructs_random_hermitian() {
        // Build H = U D U† from a known spectrum and a unitary made of a
        // product of complex Givens rotations.
        let n = 6;
        let spectrum = [-1.5, -0.25, 0.0, 0.3, 0.3, 2.0];
        let mut u = CMatrix::identity(n);
        for (k, (p, q)) in [(0, 1), (1, 2), (2, 4), (0, 5), (3, 5), (1, 3)].iter().enumerate() {
            let t = 0.3 + 0.4 * k as f64;
            let ph = Complex64::from_polar(1.0, 0.7 * k as f64);
            let mut g = CMatrix::identity(n);
            g[(*p, *p)] = c(t.cos(), 0.0);
            g[(*p, *q)] = -ph * t.sin();
            g[(*q, *p)] = ph.conj() * t.sin();
            g[(*q, *q)] = c(t.cos(), 0.0);
            u = &u * &g;
        }
        let d = CMatrix::diag(&spectrum.map(|x| c(x, 0.0)));
        let h = &(&u * &d) * &u.adjoint();
        let eig = h.eigh();
        for (got, want) in eig.values.iter().zip(spectrum.iter()) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let back = &(&eig.vectors * &CMatrix::diag(
            &eig.values.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>(),
        )) * &eig.vectors.adjoint();
        assert!(back.max_abs_diff(&h) < 1e-12);
        assert!(eig.vectors.unitarity_defect() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let v = [c(0.6, 0.0), c(0.0, 0.8)];
        let rho = CMatrix::outer(&v).scale(c(0.5, 0.0)).add(&CMatrix::identity(2).scale(c(0.25, 0.0)));
        let s = rho.sqrt_psd();
        assert!((&s * &s).max_abs_diff(&rho) < 1e-13);
    }

    #[test]
    fn kron_of_identities() {
        let k = CMatrix::identity(2).kron(&CMatrix::identity(3));
        assert_eq!(k, CMatrix::identity(6));
    }
}
