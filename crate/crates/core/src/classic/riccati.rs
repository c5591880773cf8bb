//! Discrete algebraic Riccati iteration for single-input systems, plus the
//! spectral-radius check used to confirm closed-loop stability.

use num_complex::Complex;

use super::ClassicError;
use crate::scalar::Scalar;

pub type Mat<T, const N: usize> = [[T; N]; N];

/// Fixed point of the Riccati map and the matching state-feedback gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DareSolution<T, const N: usize> {
    pub p: Mat<T, N>,
    pub k: [T; N],
    pub iterations: usize,
    /// Max-abs change of the final iteration.
    pub residual: T,
}

fn mat_vec<T: Scalar, const N: usize>(m: &Mat<T, N>, v: &[T; N]) -> [T; N] {
    std::array::from_fn(|i| (0..N).map(|j| m[i][j] * v[j]).sum())
}

fn vec_mat<T: Scalar, const N: usize>(v: &[T; N], m: &Mat<T, N>) -> [T; N] {
    std::array::from_fn(|j| (0..N).map(|i| v[i] * m[i][j]).sum())
}

fn dot<T: Scalar, const N: usize>(a: &[T; N], b: &[T; N]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Iterates `P <- A'PA - A'PB (r + B'PB)^-1 B'PA + Q` starting from `P = Q`.
#[derive(Debug, Clone)]
pub struct RiccatiIter<T, const N: usize> {
    a: Mat<T, N>,
    b: [T; N],
    q: Mat<T, N>,
    r: T,
    p: Mat<T, N>,
}

impl<T: Scalar, const N: usize> RiccatiIter<T, N> {
    pub fn new(a: Mat<T, N>, b: [T; N], q: Mat<T, N>, r: T) -> Self {
        Self { a, b, q, r, p: q }
    }

    /// Restarts the recursion from `p` instead of `Q`.
    pub fn starting_at(mut self, p: Mat<T, N>) -> Self {
        self.p = p;
        self
    }

    pub fn current(&self) -> &Mat<T, N> {
        &self.p
    }

    /// Gain `K = (r + B'PB)^-1 B'PA` for the current iterate.
    pub fn gain(&self) -> [T; N] {
        let pb = mat_vec(&self.p, &self.b);
        let s = self.r + dot(&self.b, &pb);
        let bpa = vec_mat(&pb, &self.a);
        bpa.map(|x| x / s)
    }
}

impl<T: Scalar, const N: usize> Iterator for RiccatiIter<T, N> {
    type Item = Mat<T, N>;

    fn next(&mut self) -> Option<Mat<T, N>> {
        let (a, p) = (&self.a, &self.p);
        let pb = mat_vec(p, &self.b);
        let s = self.r + dot(&self.b, &pb);
        // row vector B'PA, and A'PB is its transpose
        let bpa = vec_mat(&pb, a);
        let mut pa = [[T::zero(); N]; N];
        for i in 0..N {
            for j in 0..N {
                pa[i][j] = (0..N).map(|k| p[i][k] * a[k][j]).sum();
            }
        }
        let mut next = [[T::zero(); N]; N];
        for i in 0..N {
            for j in 0..N {
                let apa: T = (0..N).map(|k| a[k][i] * pa[k][j]).sum();
                next[i][j] = apa - bpa[i] * bpa[j] / s + self.q[i][j];
            }
        }
        for i in 0..N {
            for j in i + 1..N {
                let m = (next[i][j] + next[j][i]) / T::two();
                next[i][j] = m;
                next[j][i] = m;
            }
        }
        self.p = next;
        Some(next)
    }
}

/// Runs the Riccati recursion until the max-abs change drops below `tol`.
pub fn solve_dare<T: Scalar, const N: usize>(
    a: Mat<T, N>,
    b: [T; N],
    q: Mat<T, N>,
    r: T,
    tol: T,
    max_iter: usize,
) -> Result<DareSolution<T, N>, ClassicError> {
    if !(r > T::zero()) {
        return Err(ClassicError::InvalidWeights(format!("action cost must be positive, got {r}")));
    }
    let mut it = RiccatiIter::new(a, b, q, r);
    let mut residual = T::infinity();
    for n in 1..=max_iter {
        let prev = *it.current();
        let p = it.next().expect("infinite iterator");
        residual = T::zero();
        for i in 0..N {
            for j in 0..N {
                residual = residual.max((p[i][j] - prev[i][j]).abs());
            }
        }
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            return Ok(DareSolution { p, k: it.gain(), iterations: n, residual });
        }
    }
    Err(ClassicError::NoConvergence { iterations: max_iter, residual: residual.to_f64_lossy() })
}

/// Scalar DARE `p = a^2 p - (a b p)^2/(r + b^2 p) + q`, exposed for sanity checks.
pub fn solve_dare_scalar(a: f64, b: f64, q: f64, r: f64) -> Result<DareSolution<f64, 1>, ClassicError> {
    solve_dare([[a]], [b], [[q]], r, 1e-12, 1_000_000)
}

/// Coefficients `c[0..=N]` of the characteristic polynomial `det(zI - M)`, leading `c[0] = 1`.
fn char_poly<const N: usize>(m: &Mat<f64, N>) -> Vec<f64> {
    // Faddeev-LeVerrier
    let mut coeffs = vec![1.0];
    let mut mk = [[0.0; N]; N];
    let mut c = 1.0;
    for k in 1..=N {
        // M_k = M (M_{k-1} + c_{k-1} I)
        let mut prev = mk;
        for (i, row) in prev.iter_mut().enumerate() {
            row[i] += c;
        }
        for i in 0..N {
            for j in 0..N {
                mk[i][j] = (0..N).map(|l| m[i][l] * prev[l][j]).sum();
            }
        }
        let trace: f64 = (0..N).map(|i| mk[i][i]).sum();
        c = -trace / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// Roots of a monic polynomial by Durand-Kerner iteration.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let eval = |z: Complex<f64>| coeffs.iter().fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c);
    let bound = 1.0 + coeffs[1..].iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let seed = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex<f64>> = (0..n).map(|i| seed.powu(i as u32) * bound).collect();
    for _ in 0..2000 {
        let mut change = 0.0_f64;
        for i in 0..n {
            let zi = roots[i];
            let mut denom = Complex::new(1.0, 0.0);
            for (j, &zj) in roots.iter().enumerate() {
                if j != i {
                    denom *= zi - zj;
                }
            }
            if denom.norm() == 0.0 {
                denom = Complex::new(1e-12, 0.0);
            }
            let delta = eval(zi) / denom;
            roots[i] = zi - delta;
            change = change.max(delta.norm());
        }
        if change < 1e-15 * bound {
            break;
        }
    }
    roots
}

/// Eigenvalues of a small dense matrix.
pub fn eigenvalues<const N: usize>(m: &Mat<f64, N>) -> Vec<Complex<f64>> {
    poly_roots(&char_poly(m))
}

pub fn spectral_radius<const N: usize>(m: &Mat<f64, N>) -> f64 {
    eigenvalues(m).iter().fold(0.0, |r, z| r.max(z.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_fixed_points() {
        let s = solve_dare_scalar(0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(s.p[0][0], 1.0);
        assert_eq!(s.k[0], 0.0);
        let s = solve_dare_scalar(1.0, 1.0, 1.0, 1.0).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((s.p[0][0] - phi).abs() < 1e-10);
        assert!((s.k[0] - phi / (1.0 + phi)).abs() < 1e-10);
    }

    #[test]
    fn nonpositive_action_cost_rejected() {
        assert!(matches!(solve_dare_scalar(1.0, 1.0, 1.0, 0.0), Err(ClassicError::InvalidWeights(_))));
    }

    #[test]
    fn unstabilizable_reports_residual() {
        // unstable mode the input cannot reach
        let r = solve_dare([[2.0, 0.0], [0.0, 0.5]], [0.0, 1.0], [[1.0, 0.0], [0.0, 1.0]], 1.0, 1e-10, 200);
        match r {
            Err(ClassicError::NoConvergence { iterations, .. }) => assert_eq!(iterations, 200),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn char_poly_of_companion() {
        // (z-1)(z-2)(z-3) = z^3 - 6z^2 + 11z - 6
        let m = [[6.0, -11.0, 6.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let c = char_poly(&m);
        for (got, want) in c.iter().zip([1.0, -6.0, 11.0, -6.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let mut roots: Vec<f64> = eigenvalues(&m).iter().map(|z| z.re).collect();
        roots.sort_by(f64::total_cmp);
        for (got, want) in roots.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn complex_pair_radius() {
        let t = 0.3_f64;
        let rot = [[0.9 * t.cos(), -0.9 * t.sin()], [0.9 * t.sin(), 0.9 * t.cos()]];
        assert!((spectral_radius(&rot) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn works_in_f32() {
        let s = solve_dare::<f32, 1>([[1.0]], [1.0], [[1.0]], 1.0, 1e-6, 10_000).unwrap();
        assert!((s.p[0][0] - 1.618_034).abs() < 1e-5);
    }
}
