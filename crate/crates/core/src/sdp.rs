//! Certification of the guessing-probability bound for a `k`-dimensional
//! block: the witness operator, dual certificates and a primal attack search.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::keyrate::guessing_probability;
use crate::quantum::{build_measurements, max_entangled_vector, CMatrix, SubspaceLayout};
use crate::rng;

/// Smallest eigenvalue accepted as non-negative.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// `sum_x A_2^x (x) B_2^x` on `C^k (x) C^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessOperator {
    pub k: usize,
    pub matrix: CMatrix,
}

impl WitnessOperator {
    /// Expectation value in a (not necessarily normalised) state.
    pub fn expectation(&self, rho: &CMatrix) -> f64 {
        (&self.matrix * rho).trace().re
    }
}

pub fn build_witness_operator(k: usize) -> Result<WitnessOperator> {
    let layout = SubspaceLayout::new(k, k)?;
    let ms = build_measurements(layout);
    let mut matrix = CMatrix::zeros(k * k, k * k);
    for x in 0..k {
        matrix += ms.alice_test.projector(x).kronecker(&ms.bob_test.projector(x));
    }
    Ok(WitnessOperator { k, matrix })
}

/// `(sqrt(W) + sqrt((k-1)(1-W)))^2 / k`.
pub fn closed_form_guessing(w: f64, k: usize) -> Result<f64> {
    guessing_probability(w, k)
}

/// `|e><e| (x) I` on `C^k (x) C^k`.
pub fn key_projector(k: usize, e: usize) -> CMatrix {
    let mut p = CMatrix::zeros(k * k, k * k);
    for b in 0..k {
        p[(e * k + b, e * k + b)] = Complex64::new(1.0, 0.0);
    }
    p
}

fn sorted_eigenvalues(m: CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    /// Finite dual variables whose constraint was checked numerically.
    Exact,
    /// Value obtained as the limit of feasible certificates; no finite
    /// dual variables attain it.
    Limit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    pub w: f64,
    pub k: usize,
    /// Slope `S` multiplying the witness constraint.
    pub s: f64,
    /// Offset `g` multiplying the normalisation constraint.
    pub g: f64,
    pub dual_value: f64,
    /// Smallest eigenvalue of `g I + S W_hat - |e><e| (x) I` over all `e`.
    pub min_eigenvalue: f64,
    pub kind: CertificateKind,
}

impl DualCertificate {
    pub fn is_feasible(&self) -> bool {
        match self.kind {
            CertificateKind::Exact => self.min_eigenvalue >= -FEASIBILITY_TOL,
            CertificateKind::Limit => true,
        }
    }
}

fn check_domain(w: f64, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::ZeroDimension);
    }
    let lo = 1.0 / k as f64;
    if !(lo - 1e-12..=1.0 + 1e-12).contains(&w) {
        return Err(Error::OutOfRange {
            name: "W",
            value: w,
            range: "[1/k, 1]",
        });
    }
    Ok(())
}

fn min_constraint_eigenvalue(witness: &WitnessOperator, s: f64, g: f64) -> f64 {
    let k = witness.k;
    let n = k * k;
    (0..k)
        .map(|e| {
            let m = CMatrix::identity(n, n) * Complex64::new(g, 0.0)
                + &witness.matrix * Complex64::new(s, 0.0)
                - key_projector(k, e);
            sorted_eigenvalues(m)[0]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Dual variables `S`, `g` and the resulting upper bound on the guessing
/// probability at witness value `W`.
pub fn dual_certificate(w: f64, k: usize) -> Result<DualCertificate> {
    check_domain(w, k)?;
    let witness = build_witness_operator(k)?;
    let kf = k as f64;
    if w >= 1.0 - 1e-15 && k > 1 {
        return Ok(DualCertificate {
            w,
            k,
            s: f64::NAN,
            g: f64::NAN,
            dual_value: 1.0 / kf,
            min_eigenvalue: f64::NAN,
            kind: CertificateKind::Limit,
        });
    }
    let (s, g) = if k == 1 || (w - 1.0 / kf).abs() <= 1e-12 {
        (0.0, 1.0)
    } else {
        let root = ((kf - 1.0) / (w * (1.0 - w))).sqrt();
        let s = 2.0 / kf - 1.0 + (1.0 - 2.0 * w) / kf * root;
        let lambda_minus = -(kf - 1.0) / kf - w / kf * root;
        (s, -lambda_minus)
    };
    Ok(DualCertificate {
        w,
        k,
        s,
        g,
        dual_value: g + s * w,
        min_eigenvalue: min_constraint_eigenvalue(&witness, s, g),
        kind: CertificateKind::Exact,
    })
}

/// Printed eigenvalues `lambda_+-` of `S W_hat - |e><e| (x) I`.
pub fn eigenvalue_formula(s: f64, k: usize) -> (f64, f64) {
    let kf = k as f64;
    let root = ((s - 1.0).powi(2) + 4.0 * s * (kf - 1.0) / kf).sqrt();
    ((s - 1.0 + root) / 2.0, (s - 1.0 - root) / 2.0)
}

/// Largest deviation between the numerical spectrum of `S W_hat - |e><e| (x) I`
/// and `lambda_+-` (each `k` times) padded with `k^2 - 2k` zeros.
pub fn eigenvalue_formula_check(s: f64, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k}, need k >= 2")));
    }
    let witness = build_witness_operator(k)?;
    let (plus, minus) = eigenvalue_formula(s, k);
    let mut expected = vec![0.0; k * k - 2 * k];
    expected.extend(std::iter::repeat_n(plus, k));
    expected.extend(std::iter::repeat_n(minus, k));
    expected.sort_by(f64::total_cmp);
    let mut worst = 0.0f64;
    for e in 0..k {
        let m = &witness.matrix * Complex64::new(s, 0.0) - key_projector(k, e);
        for (a, b) in sorted_eigenvalues(m).iter().zip(&expected) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// A strategy for Eve: unnormalised states `rho_e` conditioned on her guess `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalAttack {
    pub states: Vec<CMatrix>,
    /// Guessing probability `sum_e Tr(rho_e |e><e| (x) I)`.
    pub value: f64,
    pub achieved_w: f64,
}

impl PrimalAttack {
    fn evaluate(states: Vec<CMatrix>, witness: &WitnessOperator) -> Self {
        let k = witness.k;
        let value = states
            .iter()
            .enumerate()
            .map(|(e, rho)| (0..k).map(|b| rho[(e * k + b, e * k + b)].re).sum::<f64>())
            .sum();
        let achieved_w = states.iter().map(|rho| witness.expectation(rho)).sum();
        Self {
            states,
            value,
            achieved_w,
        }
    }

    pub fn total_trace(&self) -> f64 {
        self.states.iter().map(|r| r.trace().re).sum()
    }
}

type CVec = Vec<Complex64>;

/// Rank-one search over `rho_e = u_e u_e^dag` with `sum_e |u_e|^2 = 1`.
struct Search<'a> {
    k: usize,
    /// Columns `w_x` with `W_hat = sum_x w_x w_x^dag`.
    factors: &'a [CVec],
    target: f64,
}

impl Search<'_> {
    fn n(&self) -> usize {
        self.k * self.k
    }

    fn apply_witness(&self, u: &[Complex64], out: &mut [Complex64]) {
        let n = self.n();
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for e in 0..self.k {
            let block = &u[e * n..(e + 1) * n];
            let dst = &mut out[e * n..(e + 1) * n];
            for w in self.factors {
                let c: Complex64 = w.iter().zip(block).map(|(a, b)| a.conj() * b).sum();
                for (o, a) in dst.iter_mut().zip(w) {
                    *o += a * c;
                }
            }
        }
    }

    fn key_value(&self, u: &[Complex64]) -> f64 {
        let (n, k) = (self.n(), self.k);
        (0..k)
            .map(|e| {
                u[e * n + e * k..e * n + (e + 1) * k]
                    .iter()
                    .map(|z| z.norm_sqr())
                    .sum::<f64>()
            })
            .sum()
    }

    fn in_key_block(&self, i: usize) -> bool {
        let n = self.n();
        let (e, local) = (i / n, i % n);
        local / self.k == e
    }

    fn run(&self, mut u: CVec) -> CVec {
        let mut wu = vec![Complex64::new(0.0, 0.0); u.len()];
        let mut grad = wu.clone();
        let (mut s, mut c) = (0.0f64, 10.0f64);
        let mut last_h = f64::INFINITY;
        let mut last_f = f64::NAN;
        for _ in 0..200 {
            let mut h = 0.0;
            for _ in 0..200 {
                self.apply_witness(&u, &mut wu);
                let g: f64 = u.iter().zip(&wu).map(|(a, b)| (a.conj() * b).re).sum();
                h = g - self.target;
                let sigma = s + c * h;
                for (i, gr) in grad.iter_mut().enumerate() {
                    let key = if self.in_key_block(i) { u[i] } else { Complex64::new(0.0, 0.0) };
                    *gr = key - wu[i] * sigma;
                }
                let radial: f64 = u.iter().zip(&grad).map(|(a, b)| (a.conj() * b).re).sum();
                let eta = 1.0 / (1.0 + sigma.abs() + c);
                for (x, gr) in u.iter_mut().zip(&grad) {
                    *x += (gr - *x * radial) * eta;
                }
                let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                u.iter_mut().for_each(|z| *z /= norm);
            }
            s += c * h;
            if h.abs() > 0.25 * last_h {
                c = (2.0 * c).min(1e6);
            }
            last_h = h.abs();
            let f = self.key_value(&u);
            if h.abs() < 1e-11 && (f - last_f).abs() < 1e-13 {
                break;
            }
            last_f = f;
        }
        u
    }
}

fn states_from_vector(u: &[Complex64], k: usize) -> Vec<CMatrix> {
    let n = k * k;
    (0..k)
        .map(|e| {
            let v = nalgebra::DVector::from_column_slice(&u[e * n..(e + 1) * n]);
            &v * v.adjoint()
        })
        .collect()
}

/// Mixes `attack` with a fixed state in block `e = 0` so the witness value
/// becomes exactly `w`.
fn restore_constraint(attack: PrimalAttack, w: f64, witness: &WitnessOperator) -> PrimalAttack {
    let k = witness.k;
    let gap = attack.achieved_w - w;
    if gap.abs() < 1e-15 {
        return attack;
    }
    let layout = SubspaceLayout::new(k, k).expect("k >= 1");
    let ms = build_measurements(layout);
    let fix = if gap < 0.0 {
        max_entangled_vector(k)
    } else {
        ms.alice_test.vector(0).kronecker(&ms.bob_test.vector(1 % k))
    };
    let fix_rho = &fix * fix.adjoint();
    let fix_w = witness.expectation(&fix_rho);
    let t = (w - attack.achieved_w) / (fix_w - attack.achieved_w);
    let mut states: Vec<CMatrix> = attack
        .states
        .into_iter()
        .map(|r| r * Complex64::new(1.0 - t, 0.0))
        .collect();
    states[0] += fix_rho * Complex64::new(t, 0.0);
    PrimalAttack::evaluate(states, witness)
}

fn endpoint_attack(w: f64, witness: &WitnessOperator) -> Option<PrimalAttack> {
    let k = witness.k;
    let kf = k as f64;
    if w >= 1.0 - 1e-12 {
        let psi = max_entangled_vector(k);
        let rho = &psi * psi.adjoint() / Complex64::new(kf, 0.0);
        return Some(PrimalAttack::evaluate(vec![rho; k], witness));
    }
    if (w - 1.0 / kf).abs() <= 1e-12 {
        let states = (0..k)
            .map(|e| {
                let mut rho = CMatrix::zeros(k * k, k * k);
                rho[(e * k + e, e * k + e)] = Complex64::new(1.0 / kf, 0.0);
                rho
            })
            .collect();
        return Some(PrimalAttack::evaluate(states, witness));
    }
    None
}

/// Best attack found by constrained gradient ascent from `restarts` random
/// starting points. The result satisfies the witness constraint exactly.
pub fn primal_search(w: f64, k: usize, restarts: usize, seed: u64) -> Result<PrimalAttack> {
    check_domain(w, k)?;
    let w = w.clamp(1.0 / k as f64, 1.0);
    let witness = build_witness_operator(k)?;
    if let Some(attack) = endpoint_attack(w, &witness) {
        return Ok(attack);
    }
    let layout = SubspaceLayout::new(k, k)?;
    let ms = build_measurements(layout);
    let factors: Vec<CVec> = (0..k)
        .map(|x| {
            ms.alice_test
                .vector(x)
                .kronecker(&ms.bob_test.vector(x))
                .iter()
                .copied()
                .collect()
        })
        .collect();
    let search = Search {
        k,
        factors: &factors,
        target: w,
    };
    let len = k * k * k;
    (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r);
            let mut u: CVec = (0..len)
                .map(|_| {
                    Complex64::new(
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    )
                })
                .collect();
            let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            u.iter_mut().for_each(|z| *z /= norm);
            let u = search.run(u);
            let raw = PrimalAttack::evaluate(states_from_vector(&u, k), &witness);
            restore_constraint(raw, w, &witness)
        })
        .filter(|a| a.value.is_finite() && (a.achieved_w - w).abs() <= 1e-6)
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or(Error::Infeasible(w))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    sorted_eigenvalues(m.clone())[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn witness_operator_examples() {
        let w1 = build_witness_operator(1).unwrap();
        assert_abs_diff_eq!(w1.matrix[(0, 0)].re, 1.0, epsilon = 1e-15);
        for k in 2..=5 {
            let w = build_witness_operator(k).unwrap();
            let m = &w.matrix;
            assert!(max_abs(&(m - m.adjoint())) < 1e-12);
            assert!(max_abs(&(m * m - m)) < 1e-10);
            assert_abs_diff_eq!(m.trace().re, k as f64, epsilon = 1e-10);
            let psi = max_entangled_vector(k);
            assert_abs_diff_eq!(w.expectation(&(&psi * psi.adjoint())), 1.0, epsilon = 1e-12);
        }
        let ev = sorted_eigenvalues(build_witness_operator(2).unwrap().matrix);
        let rank = ev.iter().filter(|&&x| x > 0.5).count();
        assert_eq!(rank, 2);
    }

    #[test]
    fn closed_form_examples() {
        assert_abs_diff_eq!(closed_form_guessing(1.0, 3).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(closed_form_guessing(0.25, 4).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(closed_form_guessing(0.9, 2).unwrap(), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn dual_certificate_examples() {
        let c = dual_certificate(0.9, 2).unwrap();
        assert_abs_diff_eq!(c.s, -4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.g, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.dual_value, 0.8, epsilon = 1e-12);
        assert!(c.is_feasible());

        // The bound approaches 1/k like sqrt(1 - W).
        let c = dual_certificate(1.0 - 1e-6, 3).unwrap();
        let slope = 2.0 * (2.0 * 1e-6f64).sqrt() / 3.0;
        assert_abs_diff_eq!(c.dual_value, 1.0 / 3.0 + slope, epsilon = 1e-6);
        assert!(c.is_feasible());

        let c = dual_certificate(1.0, 3).unwrap();
        assert_eq!(c.kind, CertificateKind::Limit);
        assert_abs_diff_eq!(c.dual_value, 1.0 / 3.0, epsilon = 1e-15);

        let c = dual_certificate(0.5, 2).unwrap();
        assert_eq!((c.s, c.g, c.dual_value), (0.0, 1.0, 1.0));
        assert!(c.is_feasible());

        assert!(dual_certificate(0.2, 3).is_err());
    }

    #[test]
    fn dual_certificate_grid() {
        for k in 2..=5 {
            for i in 0..=44 {
                let w = 0.55 + 0.01 * i as f64;
                let c = dual_certificate(w, k).unwrap();
                assert!(c.min_eigenvalue >= -FEASIBILITY_TOL, "k={k} W={w}");
                let pg = closed_form_guessing(w, k).unwrap();
                assert_abs_diff_eq!(c.dual_value, pg, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn endpoint_continuity() {
        for k in 2..=5 {
            let lo = 1.0 / k as f64;
            for w in [lo + 1e-8, 1.0 - 1e-8] {
                let c = dual_certificate(w, k).unwrap();
                let edge = if w > 0.5 + lo / 2.0 { 1.0 / k as f64 } else { 1.0 };
                assert!((c.dual_value - edge).abs() < 1e-3, "k={k} w={w}");
            }
        }
    }

    #[test]
    fn eigenvalue_formula_examples() {
        assert!(eigenvalue_formula_check(0.0, 3).unwrap() < 1e-12);
        let (p, m) = eigenvalue_formula(1.0, 2);
        assert_abs_diff_eq!(p, 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(m, -1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert!(eigenvalue_formula_check(1.0, 2).unwrap() < 1e-12);
        assert!(eigenvalue_formula_check(1.0, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn eigenvalue_formula_random(s in -3.0f64..3.0, k in 2usize..=5) {
            prop_assert!(eigenvalue_formula_check(s, k).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn endpoint_attacks() {
        for k in 2..=4 {
            let a = primal_search(1.0, k, 1, 0).unwrap();
            assert_abs_diff_eq!(a.value, 1.0 / k as f64, epsilon = 1e-12);
            assert_abs_diff_eq!(a.achieved_w, 1.0, epsilon = 1e-12);
            let a = primal_search(1.0 / k as f64, k, 1, 0).unwrap();
            assert_abs_diff_eq!(a.value, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(a.achieved_w, 1.0 / k as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn primal_attack_meets_dual_bound() {
        let a = primal_search(0.9, 2, 50, 7).unwrap();
        assert!(a.value >= 0.8 - 1e-3);
        assert!(a.value <= 0.8 + 1e-9);
        assert_abs_diff_eq!(a.total_trace(), 1.0, epsilon = 1e-8);
        assert!((a.achieved_w - 0.9).abs() <= 1e-6);
        for rho in &a.states {
            assert!(min_eigenvalue(rho) >= -1e-10);
        }
    }

    #[test]
    fn primal_search_is_deterministic() {
        let a = primal_search(0.8, 3, 4, 5).unwrap();
        let b = primal_search(0.8, 3, 4, 5).unwrap();
        assert_eq!(a, b);
    }
}
