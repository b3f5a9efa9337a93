//! Continuous transfer functions and their bilinear discretization.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial coefficients in descending powers.
pub type Poly = Vec<f64>;

fn trim(p: &[f64]) -> Poly {
    let first = p.iter().position(|&c| c != 0.0).unwrap_or(p.len().saturating_sub(1));
    p[first..].to_vec()
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Poly {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, x) in a.iter().enumerate() {
        out[n - a.len() + i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        out[n - b.len() + i] += x;
    }
    out
}

fn poly_pow(p: &[f64], n: usize) -> Poly {
    (0..n).fold(vec![1.0], |acc, _| poly_mul(&acc, p))
}

pub fn poly_eval(p: &[f64], x: Complex64) -> Complex64 {
    p.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Roots via the eigenvalues of the companion matrix.
pub fn poly_roots(p: &[f64]) -> Vec<Complex64> {
    let p = trim(p);
    let n = p.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = p[0];
    let companion = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -p[j + 1] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion.complex_eigenvalues().iter().copied().collect()
}

/// `N(s)/D(s)` with descending-power coefficients; any gain lives in `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RationalTF {
    pub num: Poly,
    pub den: Poly,
}

impl RationalTF {
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        let tf = RationalTF { num: trim(&num), den: trim(&den) };
        tf.validate()?;
        Ok(tf)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTransferFunction(m.to_string()));
        if self.num.is_empty() || self.den.is_empty() {
            return bad("empty polynomial");
        }
        if !self.num.iter().chain(&self.den).all(|c| c.is_finite()) {
            return bad("non-finite coefficient");
        }
        if trim(&self.den).iter().all(|&c| c == 0.0) {
            return bad("zero denominator");
        }
        if trim(&self.num).len() > trim(&self.den).len() {
            return bad("improper: numerator degree exceeds denominator degree");
        }
        Ok(())
    }

    pub fn gain(k: f64) -> Self {
        RationalTF { num: vec![k], den: vec![1.0] }
    }

    pub fn integrator() -> Self {
        RationalTF { num: vec![1.0], den: vec![1.0, 0.0] }
    }

    /// `(1 + s/w)`.
    pub fn zero_at(w: f64) -> Self {
        RationalTF { num: vec![1.0 / w, 1.0], den: vec![1.0] }
    }

    /// `1/(1 + s/w)`.
    pub fn pole_at(w: f64) -> Self {
        RationalTF { num: vec![1.0], den: vec![1.0 / w, 1.0] }
    }

    /// `(1 + s/z)/(1 + s/p)`.
    pub fn lead_lag(z: f64, p: f64) -> Self {
        RationalTF { num: vec![1.0 / z, 1.0], den: vec![1.0 / p, 1.0] }
    }

    pub fn series(&self, other: &RationalTF) -> RationalTF {
        RationalTF { num: trim(&poly_mul(&self.num, &other.num)), den: trim(&poly_mul(&self.den, &other.den)) }
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    pub fn freq_response(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    /// `H(0)`, or `None` when there is a pole at the origin.
    pub fn dc_gain(&self) -> Option<f64> {
        let d = *self.den.last().unwrap();
        (d != 0.0).then(|| self.num.last().unwrap() / d)
    }

    /// Magnitudes of all finite poles and zeros, rad/s.
    pub fn break_frequencies(&self) -> Vec<f64> {
        poly_roots(&self.num).into_iter().chain(poly_roots(&self.den)).map(|r| r.norm()).collect()
    }

    /// Bilinear (Tustin) map `s = 2·rate·(z − 1)/(z + 1)` without prewarping.
    pub fn discretize(&self, rate: f64) -> Result<DiscreteLti> {
        self.validate()?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidTransferFunction(format!("sample rate {rate} must be positive")));
        }
        let n = self.order();
        let k = 2.0 * rate;
        let zm1 = [1.0, -1.0];
        let zp1 = [1.0, 1.0];
        let map = |p: &[f64]| -> Poly {
            // p(s) = Σ c_i s^i, ascending index i from the tail.
            let mut out = vec![0.0; n + 1];
            for (idx, &c) in p.iter().rev().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let term = poly_mul(&poly_pow(&zm1, idx), &poly_pow(&zp1, n - idx));
                out = poly_add(&out, &term.iter().map(|t| t * c * k.powi(idx as i32)).collect::<Vec<_>>());
            }
            out
        };
        let num_z = map(&self.num);
        let den_z = map(&self.den);
        let lead = den_z[0];
        let alpha: Vec<f64> = den_z.iter().map(|c| c / lead).collect();
        let beta: Vec<f64> = num_z.iter().map(|c| c / lead).collect();
        let nyquist_warning = self.break_frequencies().iter().any(|&w| w >= std::f64::consts::PI * rate);
        Ok(DiscreteLti::from_difference(&beta, &alpha, rate, nyquist_warning))
    }
}

/// Discrete state-space system `x⁺ = A x + B u`, `y = C x + D u`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLti {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
    pub rate: f64,
    /// Some pole or zero lies at or beyond the Nyquist frequency.
    pub nyquist_warning: bool,
    state: DVector<f64>,
}

impl DiscreteLti {
    /// Observable canonical realization of `(β0 zⁿ + … + βn)/(zⁿ + α1 zⁿ⁻¹ + … + αn)`.
    fn from_difference(beta: &[f64], alpha: &[f64], rate: f64, nyquist_warning: bool) -> Self {
        let n = alpha.len() - 1;
        let b0 = beta[0];
        let a = DMatrix::from_fn(n, n, |i, j| {
            if j == 0 {
                -alpha[i + 1]
            } else if j == i + 1 {
                1.0
            } else {
                0.0
            }
        });
        let b = DVector::from_fn(n, |i, _| beta[i + 1] - b0 * alpha[i + 1]);
        let c = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
        DiscreteLti { a, b, c, d: b0, rate, nyquist_warning, state: DVector::zeros(n) }
    }

    pub fn order(&self) -> usize {
        self.state.len()
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    pub fn set_state(&mut self, x: DVector<f64>) {
        assert_eq!(x.len(), self.order());
        self.state = x;
    }

    pub fn reset(&mut self) {
        self.state.fill(0.0);
    }

    pub fn output(&self, u: f64) -> f64 {
        self.c.dot(&self.state) + self.d * u
    }

    pub fn next_state(&self, u: f64) -> DVector<f64> {
        &self.a * &self.state + &self.b * u
    }

    /// Output for input `u`, then advances the state.
    pub fn step(&mut self, u: f64) -> f64 {
        let y = self.output(u);
        self.state = self.next_state(u);
        y
    }

    /// Discrete frequency response at `omega` rad/s.
    pub fn freq_response(&self, omega: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, omega / self.rate);
        let n = self.order();
        if n == 0 {
            return Complex64::new(self.d, 0.0);
        }
        let m = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { z } else { Complex64::new(0.0, 0.0) };
            diag - Complex64::new(self.a[(i, j)], 0.0)
        });
        let b = DVector::from_fn(n, |i, _| Complex64::new(self.b[i], 0.0));
        let x = m.lu().solve(&b).expect("z on the unit circle is not a pole");
        let cx: Complex64 = (0..n).map(|i| x[i] * self.c[i]).sum();
        cx + self.d
    }

    /// Eigenvalues of `A`.
    pub fn poles(&self) -> Vec<Complex64> {
        self.a.complex_eigenvalues().iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrator_pole_at_one() {
        let d = RationalTF::integrator().discretize(240.0).unwrap();
        assert_eq!(d.order(), 1);
        assert_eq!(d.a[(0, 0)], 1.0);
    }

    #[test]
    fn dc_gain_preserved() {
        let f22 = RationalTF::pole_at(1.0).series(&RationalTF::pole_at(2.0));
        let d = f22.discretize(240.0).unwrap();
        assert!((d.freq_response(0.0).re - 1.0).abs() < 1e-9);
        assert!(d.freq_response(0.0).im.abs() < 1e-9);
    }

    #[test]
    fn rejects_improper() {
        assert!(RationalTF::new(vec![1.0, 0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(RationalTF::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn nyquist_warning() {
        let fast = RationalTF::pole_at(1000.0);
        assert!(fast.discretize(240.0).unwrap().nyquist_warning);
        assert!(!RationalTF::pole_at(10.0).discretize(240.0).unwrap().nyquist_warning);
    }

    #[test]
    fn first_order_step_matches_tustin_recursion() {
        // 1/(1+s): y[k] = (u[k]+u[k-1] - (1-K)... ) by hand for K = 2·rate.
        let rate = 10.0;
        let k = 2.0 * rate;
        let mut sys = RationalTF::pole_at(1.0).discretize(rate).unwrap();
        let (b0, a1) = (1.0 / (1.0 + k), (1.0 - k) / (1.0 + k));
        let (mut y_prev, mut u_prev) = (0.0, 0.0);
        for _ in 0..50 {
            let y_hand = b0 * (1.0 + u_prev) - a1 * y_prev;
            let y = sys.step(1.0);
            assert!((y - y_hand).abs() < 1e-12);
            y_prev = y_hand;
            u_prev = 1.0;
        }
    }

    #[test]
    fn roots_of_known_polynomial() {
        let mut r: Vec<f64> = poly_roots(&[1.0, -3.0, 2.0]).iter().map(|c| c.re).collect();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
    }

    fn log_grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| 10f64.powf(-2.0 + 3.0 * i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn qft_blocks_track_continuous_response() {
        let p = crate::control::ControllerProfile::qft_paper();
        for (name, tf) in p.blocks() {
            let d = tf.discretize(240.0).unwrap();
            assert!(!d.nyquist_warning);
            for w in log_grid(200) {
                let hc = tf.freq_response(w);
                let hd = d.freq_response(w);
                assert!((hd.norm() / hc.norm() - 1.0).abs() < 0.01, "{name} at {w}: {} vs {}", hd.norm(), hc.norm());
                // Tustin maps the unit circle onto the warped imaginary axis exactly.
                let warped = tf.eval(Complex64::new(0.0, 480.0 * (w / 480.0).tan()));
                // expanded coefficients lose digits when poles cluster near z = 1
                let wt = w / 240.0;
                let tol = 1e-6f64.max(1e-13 / (wt * wt));
                assert!((hd - warped).norm() < tol * warped.norm(), "{name} realization at {w}");
            }
        }
    }

    #[test]
    fn time_invariance() {
        let tf = crate::control::ControllerProfile::qft_paper().g11;
        let u: Vec<f64> = (0..300).map(|k| (k as f64 * 0.05).sin()).collect();
        let mut a = tf.discretize(240.0).unwrap();
        let ya: Vec<f64> = u.iter().map(|&x| a.step(x)).collect();
        let mut b = tf.discretize(240.0).unwrap();
        let shift = 17;
        let yb: Vec<f64> = std::iter::repeat_n(0.0, shift).chain(u.iter().copied()).map(|x| b.step(x)).collect();
        for k in 0..u.len() {
            assert_eq!(ya[k], yb[k + shift]);
        }
    }

    proptest::proptest! {
        #[test]
        fn superposition(
            u in proptest::collection::vec(-1.0f64..1.0, 200),
            v in proptest::collection::vec(-1.0f64..1.0, 200),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            block in 0usize..5,
        ) {
            let p = crate::control::ControllerProfile::qft_paper();
            let tf = p.blocks()[block].1;
            let run = |x: &dyn Fn(usize) -> f64| {
                let mut d = tf.discretize(240.0).unwrap();
                (0..200).map(|k| d.step(x(k))).collect::<Vec<f64>>()
            };
            let yu = run(&|k| u[k]);
            let yv = run(&|k| v[k]);
            let yc = run(&|k| a * u[k] + b * v[k]);
            for k in 0..200 {
                let expected = a * yu[k] + b * yv[k];
                proptest::prop_assert!((yc[k] - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
            }
        }
    }
}
