//! One-dimensional stationary-crack benchmark.
//!
//! A bar on [-L, L] is fully cut at x = 0; with the mechanics decoupled the
//! phase field solves ell phi'' - phi/ell = 0 with natural ends, whose exact
//! solution is exp(-|x|/ell). The FV variant is the degenerate 1D mode of the
//! TPFA kernel (unit cross-section, cell centers as unknowns, the center cell
//! constrained); the FE variant is the standard P1 weak form with the two
//! nodes of the center element constrained, mirroring how a source acting at
//! an element Gauss point is mimicked in each discretization.

use thiserror::Error;

use crate::sparse::{DirectSolver, SparseError, SparseSym};

#[derive(Debug, Error)]
pub enum OneDError {
    #[error("cell count must be odd so x = 0 is a cell center, got {0}")]
    EvenCellCount(usize),
    #[error("need at least 3 cells, got {0}")]
    TooFewCells(usize),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Discrete phase-field profile and its errors against exp(-|x|/ell).
#[derive(Debug, Clone)]
pub struct OneDProfile {
    /// Cell centers (FV) or nodes (FE).
    pub positions: Vec<f64>,
    pub phi: Vec<f64>,
    pub h: f64,
    pub l2_error: f64,
    /// Max pointwise error over the positions.
    pub max_error: f64,
}

fn analytic(ell: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| (-x.abs() / ell).exp()
}

/// Solves the decoupled 1D equation with the TPFA kernel on a chain of
/// `cells` cells; the center cell is constrained to 1.
pub fn validate_fv(cells: usize, ell: f64, half_length: f64) -> Result<OneDProfile, OneDError> {
    if cells % 2 == 0 {
        return Err(OneDError::EvenCellCount(cells));
    }
    if cells < 3 {
        return Err(OneDError::TooFewCells(cells));
    }
    let h = 2.0 * half_length / cells as f64;
    let mid = cells / 2;
    // Transmissibility of the 1D chain: Gc ell / h with Gc = 1 and unit face.
    let m = ell / h;
    // Reduced system over all cells but the constrained center.
    let reduced = |k: usize| -> Option<usize> {
        match k.cmp(&mid) {
            std::cmp::Ordering::Less => Some(k),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(k - 1),
        }
    };
    let n_red = cells - 1;
    let cliques: Vec<Vec<usize>> = (0..cells - 1)
        .filter_map(|i| match (reduced(i), reduced(i + 1)) {
            (Some(a), Some(b)) => Some(vec![a, b]),
            _ => None,
        })
        .collect();
    let mut mat = SparseSym::build_pattern(n_red, cliques)?;
    let mut rhs = vec![0.0; n_red];
    for k in 0..cells {
        if let Some(rk) = reduced(k) {
            mat.add(rk, rk, h / ell);
        }
    }
    for i in 0..cells - 1 {
        match (reduced(i), reduced(i + 1)) {
            (Some(a), Some(b)) => {
                mat.add(a, a, m);
                mat.add(b, b, m);
                mat.add(a, b, -m);
            }
            (Some(a), None) => {
                mat.add(a, a, m);
                rhs[a] += m;
            }
            (None, Some(b)) => {
                mat.add(b, b, m);
                rhs[b] += m;
            }
            (None, None) => {}
        }
    }
    let x = DirectSolver::new().solve(&mat, &rhs)?;
    let mut phi = vec![0.0; cells];
    let mut positions = vec![0.0; cells];
    for k in 0..cells {
        positions[k] = -half_length + (k as f64 + 0.5) * h;
        phi[k] = match reduced(k) {
            Some(rk) => x[rk],
            None => 1.0,
        };
    }
    let f = analytic(ell);
    let mut l2 = 0.0;
    for k in 0..cells {
        let a = -half_length + k as f64 * h;
        let b = a + h;
        let pk = phi[k];
        l2 += integrate(&|x| (pk - f(x)).powi(2), a, b);
    }
    let max_error = positions
        .iter()
        .zip(&phi)
        .map(|(&x, &p)| (p - f(x)).abs())
        .fold(0.0_f64, f64::max);
    Ok(OneDProfile {
        positions,
        phi,
        h,
        l2_error: l2.sqrt(),
        max_error,
    })
}

/// Solves the same problem with P1 finite elements (consistent mass and
/// stiffness from the weak form); the two nodes of the center element are
/// constrained to 1.
pub fn validate_fe(elements: usize, ell: f64, half_length: f64) -> Result<OneDProfile, OneDError> {
    if elements % 2 == 0 {
        return Err(OneDError::EvenCellCount(elements));
    }
    if elements < 3 {
        return Err(OneDError::TooFewCells(elements));
    }
    let h = 2.0 * half_length / elements as f64;
    let n_nodes = elements + 1;
    let mid = elements / 2;
    let constrained = [mid, mid + 1];
    let reduced = |n: usize| -> Option<usize> {
        if n < constrained[0] {
            Some(n)
        } else if n > constrained[1] {
            Some(n - 2)
        } else {
            None
        }
    };
    let n_red = n_nodes - 2;
    let cliques: Vec<Vec<usize>> = (0..elements)
        .filter_map(|e| match (reduced(e), reduced(e + 1)) {
            (Some(a), Some(b)) => Some(vec![a, b]),
            _ => None,
        })
        .collect();
    let mut mat = SparseSym::build_pattern(n_red, cliques)?;
    let mut rhs = vec![0.0; n_red];
    // Element matrices of (1/ell) M + ell K.
    let me = [[2.0 * h / 6.0, h / 6.0], [h / 6.0, 2.0 * h / 6.0]];
    let ke = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
    for e in 0..elements {
        let nodes = [e, e + 1];
        for i in 0..2 {
            for j in 0..2 {
                let v = me[i][j] / ell + ke[i][j] * ell;
                match (reduced(nodes[i]), reduced(nodes[j])) {
                    (Some(a), Some(b)) => {
                        if a <= b {
                            mat.add(a, b, v);
                        }
                    }
                    (Some(a), None) => rhs[a] -= v, // phi = 1 at the constrained node
                    _ => {}
                }
            }
        }
    }
    let x = DirectSolver::new().solve(&mat, &rhs)?;
    let mut phi = vec![0.0; n_nodes];
    let mut positions = vec![0.0; n_nodes];
    for n in 0..n_nodes {
        positions[n] = -half_length + n as f64 * h;
        phi[n] = match reduced(n) {
            Some(rn) => x[rn],
            None => 1.0,
        };
    }
    let f = analytic(ell);
    let mut l2 = 0.0;
    for e in 0..elements {
        let (a, b) = (positions[e], positions[e + 1]);
        let (pa, pb) = (phi[e], phi[e + 1]);
        l2 += integrate(
            &|x| {
                let t = (x - a) / h;
                (pa + t * (pb - pa) - f(x)).powi(2)
            },
            a,
            b,
        );
    }
    let max_error = positions
        .iter()
        .zip(&phi)
        .map(|(&x, &p)| (p - f(x)).abs())
        .fold(0.0_f64, f64::max);
    Ok(OneDProfile {
        positions,
        phi,
        h,
        l2_error: l2.sqrt(),
        max_error,
    })
}

/// Adaptive quadrature: split at the kink at x = 0, then double Gauss panels
/// until the integral settles to 1e-10 relative.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a < 0.0 && b > 0.0 {
        return integrate(f, a, 0.0) + integrate(f, 0.0, b);
    }
    const GX: [f64; 4] = [
        0.18343464249564980494,
        0.52553240991632898582,
        0.79666647741362673959,
        0.96028985649753623168,
    ];
    const GW: [f64; 4] = [
        0.36268378337836198297,
        0.31370664587788728734,
        0.22238103445337447054,
        0.10122853629037625915,
    ];
    let panel = |lo: f64, hi: f64| -> f64 {
        let c = 0.5 * (lo + hi);
        let r = 0.5 * (hi - lo);
        let mut s = 0.0;
        for i in 0..4 {
            s += GW[i] * (f(c + r * GX[i]) + f(c - r * GX[i]));
        }
        s * r
    };
    let mut n = 1usize;
    let mut prev = panel(a, b);
    loop {
        n *= 2;
        let w = (b - a) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            s += panel(a + i as f64 * w, a + (i + 1) as f64 * w);
        }
        if (s - prev).abs() <= 1e-10 * s.abs().max(1e-300) || n >= 1 << 16 {
            return s;
        }
        prev = s;
    }
}

/// Mesh refinement study on a ladder of odd cell counts.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub h: Vec<f64>,
    pub err_fv: Vec<f64>,
    pub err_fe: Vec<f64>,
    /// Least-squares slopes of log(error) against log(h).
    pub rate_fv: f64,
    pub rate_fe: f64,
}

pub fn convergence_study(
    denominators: &[usize],
    ell: f64,
    half_length: f64,
) -> Result<ConvergenceStudy, OneDError> {
    let mut h = Vec::new();
    let mut err_fv = Vec::new();
    let mut err_fe = Vec::new();
    for &den in denominators {
        let fv = validate_fv(den, ell, half_length)?;
        let fe = validate_fe(den, ell, half_length)?;
        h.push(fv.h);
        err_fv.push(fv.l2_error);
        err_fe.push(fe.l2_error);
    }
    let rate_fv = fit_rate(&h, &err_fv);
    let rate_fe = fit_rate(&h, &err_fe);
    Ok(ConvergenceStudy {
        h,
        err_fv,
        err_fe,
        rate_fv,
        rate_fe,
    })
}

/// Least-squares slope of ln(err) over ln(h).
pub fn fit_rate(h: &[f64], err: &[f64]) -> f64 {
    let n = h.len() as f64;
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|v| v * v).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// The paper's refinement ladder for the 1D benchmark.
pub const LADDER: [usize; 7] = [11, 21, 41, 81, 161, 321, 641];
