//! Constitutive layer: elastic moduli, degradation functions, bulk energy
//! splits and the history field update.
//!
//! Plane strain throughout. Tensors use 4-component Voigt form
//! `(eps_xx, eps_yy, eps_zz, gamma_xy)` with engineering shear; the third
//! strain component is identically zero but kept so the elasticity matrix
//! has its full plane-strain layout.

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstitutiveError {
    #[error("Young's modulus must be positive, got {0}")]
    InvalidYoungs(f64),
    #[error("Poisson ratio {0} outside (-1, 0.5)")]
    InvalidPoisson(f64),
    #[error("phase field value {0} outside [0, 1]")]
    PhiOutOfRange(f64),
    #[error("degradation exponent must be positive, got {0}")]
    InvalidExponent(f64),
    #[error("degradation calibration constant must be positive, got {0}")]
    InvalidCalibration(f64),
}

/// Lame coefficients and the 4x4 plane-strain elasticity matrix.
#[derive(Debug, Clone, Copy)]
pub struct ElasticModuli {
    pub youngs: f64,
    pub poisson: f64,
    pub lambda: f64,
    pub mu: f64,
    pub c_e: Matrix4<f64>,
}

/// Builds plane-strain moduli from engineering constants.
pub fn make_moduli(youngs: f64, poisson: f64) -> Result<ElasticModuli, ConstitutiveError> {
    if !(youngs > 0.0) {
        return Err(ConstitutiveError::InvalidYoungs(youngs));
    }
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(ConstitutiveError::InvalidPoisson(poisson));
    }
    let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = youngs / (2.0 * (1.0 + poisson));
    let d = lambda + 2.0 * mu;
    let c_e = Matrix4::new(
        d, lambda, lambda, 0.0, //
        lambda, d, lambda, 0.0, //
        lambda, lambda, d, 0.0, //
        0.0, 0.0, 0.0, mu,
    );
    Ok(ElasticModuli {
        youngs,
        poisson,
        lambda,
        mu,
        c_e,
    })
}

/// Volumetric projector for the two-dimensional strain split: zeroes the
/// out-of-plane and shear components so the "volumetric" part is not a
/// spherical tensor.
pub fn volumetric_projector() -> Matrix4<f64> {
    let mut p = Matrix4::zeros();
    p[(0, 0)] = 0.5;
    p[(0, 1)] = 0.5;
    p[(1, 0)] = 0.5;
    p[(1, 1)] = 0.5;
    p
}

/// Stiffness-annihilating degradation function g with g(0) = 1, g(1) = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegradationFn {
    /// g = (1 - phi)^2
    Quadratic,
    /// g = (1 - exp(-k (1-phi)^n)) / (1 - exp(-k)), normalized single-parameter
    /// family; k is a user-supplied calibration constant.
    Exponential { n: f64, k: f64 },
}

impl DegradationFn {
    pub fn exponential(n: f64, k: f64) -> Result<Self, ConstitutiveError> {
        if !(n > 0.0) {
            return Err(ConstitutiveError::InvalidExponent(n));
        }
        if !(k > 0.0) {
            return Err(ConstitutiveError::InvalidCalibration(k));
        }
        Ok(DegradationFn::Exponential { n, k })
    }

    /// Evaluates (g, g', g'') at phi in [0, 1] (tolerance 1e-12 outside).
    pub fn eval(&self, phi: f64) -> Result<(f64, f64, f64), ConstitutiveError> {
        if !(-1e-12..=1.0 + 1e-12).contains(&phi) {
            return Err(ConstitutiveError::PhiOutOfRange(phi));
        }
        let phi = phi.clamp(0.0, 1.0);
        Ok(match *self {
            DegradationFn::Quadratic => {
                let s = 1.0 - phi;
                (s * s, -2.0 * s, 2.0)
            }
            DegradationFn::Exponential { n, k } => {
                let s = 1.0 - phi;
                let denom = -(-k).exp_m1();
                let sn = s.powf(n);
                let e = (-k * sn).exp();
                let g = -(-k * sn).exp_m1() / denom;
                let dg_ds = k * n * s.powf(n - 1.0) * e / denom;
                let d2g_ds2 =
                    k * n * e * ((n - 1.0) * s.powf(n - 2.0) - k * n * s.powf(2.0 * n - 2.0))
                        / denom;
                (g, -dg_ds, d2g_ds2)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BulkKind {
    /// The whole elastic energy is degraded.
    Isotropic,
    /// Volumetric/deviatoric split: tensile-volumetric and deviatoric energy
    /// degrade, compressive-volumetric stiffness is retained.
    Amor,
}

/// Bulk response model. `kappa` is the 2D plane-strain bulk modulus
/// `lambda + mu`, the unique value consistent with the volumetric projector
/// (verified by the energy-split identity in the tests).
#[derive(Debug, Clone, Copy)]
pub struct BulkModel {
    pub kind: BulkKind,
    pub moduli: ElasticModuli,
    pub kappa: f64,
}

impl BulkModel {
    pub fn new(kind: BulkKind, moduli: ElasticModuli) -> Self {
        let kappa = moduli.lambda + moduli.mu;
        BulkModel { kind, moduli, kappa }
    }

    /// Undegraded strain energy density 0.5 eps^T C_e eps.
    pub fn psi0(&self, strain: &Vector4<f64>) -> f64 {
        0.5 * strain.dot(&(self.moduli.c_e * strain))
    }
}

/// Stress, consistent tangent and the tensile/compressive energy split at a
/// single evaluation point.
#[derive(Debug, Clone)]
pub struct StressEval {
    pub sigma: Vector4<f64>,
    pub tangent: Matrix4<f64>,
    pub psi_plus: f64,
    pub psi_minus: f64,
}

/// Evaluates stress, tangent and energy split for a plane-strain Voigt strain
/// (eps_zz must be zero). The Heaviside convention is H(0) = 1; both trace
/// branches agree there.
pub fn eval_stress(
    model: &BulkModel,
    degradation: &DegradationFn,
    strain: &Vector4<f64>,
    phi: f64,
) -> Result<StressEval, ConstitutiveError> {
    let (g, _, _) = degradation.eval(phi)?;
    let c_e = &model.moduli.c_e;
    match model.kind {
        BulkKind::Isotropic => {
            let tangent = g * c_e;
            Ok(StressEval {
                sigma: tangent * strain,
                tangent,
                psi_plus: model.psi0(strain),
                psi_minus: 0.0,
            })
        }
        BulkKind::Amor => {
            let tr = strain[0] + strain[1];
            let h_plus = if tr >= 0.0 { 1.0 } else { 0.0 };
            let h_minus = if -tr >= 0.0 { 1.0 } else { 0.0 };
            let p = volumetric_projector();
            let dev = strain - p * strain;
            let dev_dev = dev[0] * dev[0] + dev[1] * dev[1] + dev[2] * dev[2]
                + 0.5 * dev[3] * dev[3];
            let psi_plus = h_plus * 0.5 * model.kappa * tr * tr + model.moduli.mu * dev_dev;
            let psi_minus = h_minus * 0.5 * model.kappa * tr * tr;
            let tangent =
                g * c_e * ((h_plus - 1.0) * p + Matrix4::identity()) + h_minus * c_e * p;
            Ok(StressEval {
                sigma: tangent * strain,
                tangent,
                psi_plus,
                psi_minus,
            })
        }
    }
}

/// History field update enforcing crack irreversibility: above the threshold
/// the field is the running maximum of the tensile energy density, below it
/// the field may decrease.
pub fn update_history(h_old: f64, psi_plus: f64, phi: f64, phi_c: f64) -> f64 {
    if phi > phi_c {
        h_old.max(psi_plus)
    } else {
        psi_plus
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moduli_steel() {
        let m = make_moduli(210_000.0, 0.3).unwrap();
        assert_relative_eq!(m.lambda, 121_153.84615384616, max_relative = 1e-12);
        assert_relative_eq!(m.mu, 80_769.23076923077, max_relative = 1e-12);
        // Appendix-style layout: lambda+2mu diagonal block, mu shear entry.
        let d = m.lambda + 2.0 * m.mu;
        for i in 0..3 {
            assert_relative_eq!(m.c_e[(i, i)], d);
            for j in 0..3 {
                if i != j {
                    assert_relative_eq!(m.c_e[(i, j)], m.lambda);
                }
            }
            assert_relative_eq!(m.c_e[(i, 3)], 0.0);
            assert_relative_eq!(m.c_e[(3, i)], 0.0);
        }
        assert_relative_eq!(m.c_e[(3, 3)], m.mu);
    }

    #[test]
    fn moduli_zero_poisson() {
        let m = make_moduli(100.0, 0.0).unwrap();
        assert_relative_eq!(m.lambda, 0.0);
        assert_relative_eq!(m.mu, 50.0);
    }

    #[test]
    fn moduli_rejects_incompressible() {
        assert!(make_moduli(100.0, 0.5).is_err());
        assert!(make_moduli(100.0, -1.0).is_err());
        assert!(make_moduli(0.0, 0.3).is_err());
    }

    #[test]
    fn quadratic_degradation_endpoints() {
        let g = DegradationFn::Quadratic;
        assert_eq!(g.eval(0.0).unwrap(), (1.0, -2.0, 2.0));
        assert_eq!(g.eval(1.0).unwrap(), (0.0, 0.0, 2.0));
        assert!(g.eval(1.5).is_err());
        assert!(g.eval(-0.1).is_err());
    }

    #[test]
    fn exponential_degradation_normalized() {
        let g = DegradationFn::exponential(2.0, 5.0).unwrap();
        let (g0, _, _) = g.eval(0.0).unwrap();
        assert_relative_eq!(g0, 1.0, epsilon = 1e-15);
        let (g1, g1p, _) = g.eval(1.0).unwrap();
        assert_relative_eq!(g1, 0.0, epsilon = 1e-15);
        assert_relative_eq!(g1p, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exponential_degradation_midpoint_matches_oracle() {
        // Frozen from a 40-digit evaluation of the closed form at n=2, k=5.
        let g = DegradationFn::exponential(2.0, 5.0).unwrap();
        let (v, vp, vpp) = g.eval(0.5).unwrap();
        assert_relative_eq!(v, 0.71833530837521380513, max_relative = 1e-14);
        assert_relative_eq!(vp, -1.4422417326554521298, max_relative = 1e-14);
        assert_relative_eq!(vpp, -4.3267251979663563895, max_relative = 1e-14);
    }

    #[test]
    fn exponential_rejects_bad_parameters() {
        assert!(DegradationFn::exponential(0.0, 5.0).is_err());
        assert!(DegradationFn::exponential(2.0, -1.0).is_err());
    }

    #[test]
    fn degradation_monotone_nonincreasing() {
        for g in [
            DegradationFn::Quadratic,
            DegradationFn::exponential(2.0, 5.0).unwrap(),
            DegradationFn::exponential(1.5, 20.0).unwrap(),
        ] {
            let mut prev = f64::INFINITY;
            for i in 0..=1000 {
                let phi = i as f64 / 1000.0;
                let (v, vp, _) = g.eval(phi).unwrap();
                assert!(vp <= 1e-15, "g' must be <= 0, got {vp} at {phi}");
                assert!(v <= prev + 1e-12);
                prev = v;
            }
        }
    }

    fn steel_amor() -> BulkModel {
        BulkModel::new(BulkKind::Amor, make_moduli(210_000.0, 0.3).unwrap())
    }

    #[test]
    fn zero_strain_zero_stress() {
        let model = steel_amor();
        let ev = eval_stress(&model, &DegradationFn::Quadratic, &Vector4::zeros(), 0.3).unwrap();
        assert_relative_eq!(ev.sigma.norm(), 0.0);
        assert_relative_eq!(ev.psi_plus, 0.0);
        assert_relative_eq!(ev.psi_minus, 0.0);
    }

    #[test]
    fn amor_pristine_tension_matches_isotropic() {
        let amor = steel_amor();
        let iso = BulkModel::new(BulkKind::Isotropic, amor.moduli);
        let eps = Vector4::new(1e-3, 2e-4, 0.0, 3e-4);
        let a = eval_stress(&amor, &DegradationFn::Quadratic, &eps, 0.0).unwrap();
        let b = eval_stress(&iso, &DegradationFn::Quadratic, &eps, 0.0).unwrap();
        assert_relative_eq!(a.sigma, b.sigma, max_relative = 1e-14);
        assert_relative_eq!(a.tangent, b.tangent, max_relative = 1e-14);
    }

    #[test]
    fn amor_fully_degraded_compression_keeps_volumetric_stiffness() {
        let model = steel_amor();
        let e = 1e-3;
        let eps = Vector4::new(-e, -e, 0.0, 0.0);
        let ev = eval_stress(&model, &DegradationFn::Quadratic, &eps, 1.0).unwrap();
        // g(1) = 0 leaves only C_e P eps; hand product of the Appendix matrices.
        let lm = model.moduli.lambda + model.moduli.mu;
        assert_relative_eq!(ev.sigma[0], -2.0 * lm * e, max_relative = 1e-13);
        assert_relative_eq!(ev.sigma[1], -2.0 * lm * e, max_relative = 1e-13);
        assert_relative_eq!(ev.sigma[2], -2.0 * model.moduli.lambda * e, max_relative = 1e-13);
        assert_relative_eq!(ev.sigma[3], 0.0);
        assert!(ev.psi_minus > 0.0);
    }

    #[test]
    fn stress_continuity_across_zero_trace() {
        let model = steel_amor();
        let g = DegradationFn::Quadratic;
        let delta = 1e-10;
        // Strain with tr = +-delta and fixed deviatoric content.
        let plus = Vector4::new(1e-3 + delta / 2.0, -1e-3 + delta / 2.0, 0.0, 5e-4);
        let minus = Vector4::new(1e-3 - delta / 2.0, -1e-3 - delta / 2.0, 0.0, 5e-4);
        let a = eval_stress(&model, &g, &plus, 0.4).unwrap();
        let b = eval_stress(&model, &g, &minus, 0.4).unwrap();
        for i in [0usize, 1, 3] {
            assert_relative_eq!(a.sigma[i], b.sigma[i], epsilon = 1e-3);
        }
    }

    #[test]
    fn history_update_branches() {
        assert_eq!(update_history(5.0, 3.0, 0.99, 0.0), 5.0);
        assert_eq!(update_history(5.0, 3.0, 0.0, 0.5), 3.0);
        assert_eq!(update_history(0.0, 7.0, 1.0, 0.0), 7.0);
    }
}
