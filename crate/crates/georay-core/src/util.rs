//! Small numeric utilities: Gauss-Legendre rules, smooth tapers, 2x2
//! symmetric matrix helpers, deterministic RNG construction.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre polynomial. Accurate to
/// machine precision for the small `n` used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to `[a, b]`. Weights sum to `b - a`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        xs.iter().map(|&x| mid + half * x).collect(),
        ws.iter().map(|&w| w * half).collect(),
    )
}

/// Quintic smoothstep: 0 at `u <= 0`, 1 at `u >= 1`, C^2 at both ends.
pub fn smoothstep5(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// Symmetric 2x2 matrix stored as `[a11, a12, a22]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        a11: 1.0,
        a12: 0.0,
        a22: 1.0,
    };

    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Sym2 { a11, a12, a22 }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Sym2::new(a, 0.0, b)
    }

    pub fn scale(self, s: f64) -> Self {
        Sym2::new(self.a11 * s, self.a12 * s, self.a22 * s)
    }

    pub fn add(self, o: Sym2) -> Self {
        Sym2::new(self.a11 + o.a11, self.a12 + o.a12, self.a22 + o.a22)
    }

    pub fn det(self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn trace(self) -> f64 {
        self.a11 + self.a22
    }

    pub fn inverse(self) -> Self {
        let d = self.det();
        Sym2::new(self.a22 / d, -self.a12 / d, self.a11 / d)
    }

    /// Quadratic form v^T M v.
    pub fn quad(self, v: [f64; 2]) -> f64 {
        self.a11 * v[0] * v[0] + 2.0 * self.a12 * v[0] * v[1] + self.a22 * v[1] * v[1]
    }

    /// Matrix-vector product.
    pub fn mul_vec(self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a12 * v[0] + self.a22 * v[1],
        ]
    }

    /// Congruence M -> S^T M S for a general 2x2 S given column-wise.
    pub fn congruence(self, s: [[f64; 2]; 2]) -> Sym2 {
        let c0 = self.mul_vec(s[0]);
        let c1 = self.mul_vec(s[1]);
        Sym2::new(
            s[0][0] * c0[0] + s[0][1] * c0[1],
            s[0][0] * c1[0] + s[0][1] * c1[1],
            s[1][0] * c1[0] + s[1][1] * c1[1],
        )
    }

    /// Eigenvalues (ascending). Always real for symmetric input.
    pub fn eigenvalues(self) -> [f64; 2] {
        let t = 0.5 * self.trace();
        let d = self.det();
        let disc = (t * t - d).max(0.0).sqrt();
        [t - disc, t + disc]
    }

    pub fn is_spd(self) -> bool {
        let [lo, _] = self.eigenvalues();
        lo > 0.0
    }
}

/// Deterministic RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dot product of 3-vectors.
#[inline]
pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Euclidean norm of a 3-vector.
#[inline]
pub fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Relative difference |a - b| / max(|b|, floor).
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gl_weights_sum_to_interval() {
        for n in [1, 2, 5, 9, 16, 18] {
            let (_, w) = gauss_legendre_on(n, -0.3, 0.7);
            let s: f64 = w.iter().sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn gl_exactness_on_polynomials() {
        // 9-point rule integrates degree-17 polynomials exactly.
        let (x, w) = gauss_legendre(9);
        let int: f64 = x
            .iter()
            .zip(&w)
            .map(|(&x, &w)| w * x.powi(16))
            .sum();
        assert_relative_eq!(int, 2.0 / 17.0, epsilon = 1e-13);
    }

    #[test]
    fn smoothstep_endpoints() {
        assert_eq!(smoothstep5(-1.0), 0.0);
        assert_eq!(smoothstep5(2.0), 1.0);
        assert_relative_eq!(smoothstep5(0.5), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sym2_inverse_and_quad() {
        let m = Sym2::new(2.0, 0.3, 1.5);
        let inv = m.inverse();
        let prod = Sym2::new(
            m.a11 * inv.a11 + m.a12 * inv.a12,
            m.a11 * inv.a12 + m.a12 * inv.a22,
            m.a12 * inv.a12 + m.a22 * inv.a22,
        );
        assert_relative_eq!(prod.a11, 1.0, epsilon = 1e-14);
        assert_relative_eq!(prod.a22, 1.0, epsilon = 1e-14);
        assert!(prod.a12.abs() < 1e-14);
        assert!(m.is_spd());
        assert!(!Sym2::new(1.0, 2.0, 1.0).is_spd());
    }
}
