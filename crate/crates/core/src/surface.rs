//! Fixed-hyperradius surface states.
//!
//! The hyperangle is mapped to x = 2 theta / theta_mu - 1 so that both
//! Coulomb singularities sit at x = +-1, and the regularized function
//! phi_bar(x) = phi(theta) / sqrt(1 - x^2) is expanded in normalized P^1_n(x).
//! This gives the generalized eigenproblem
//!
//! ```text
//! (-c D + W) phi_bar = eps O phi_bar,   c = 2 / (m theta_mu^2 rho^2)
//! ```
//!
//! with D = diag(-n(n+1)), O the matrix of (1 - x^2) and W that of
//! (1 - x^2)(V - 1/(8 m rho^2)). Matrix elements are Gauss-Legendre sums with
//! n_L + 2 nodes, which is exact for O. The problem is reduced to standard
//! form with O^{-1/2}; eigenvectors are kept in that reduced representation,
//! where the O metric is the identity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::constants::MassSet;
use crate::error::{Error, Result};
use crate::potential::PotentialModel;
use crate::quadrature::{assoc_legendre_m1, gauss_legendre};

/// Which atom the muon is bound to in an asymptotic channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arrangement {
    /// (p mu) + O, localized at x = -1 (theta = 0).
    Pmu,
    /// p + (mu O), localized at x = +1 (theta = theta_mu).
    Muo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelLabel {
    pub arrangement: Arrangement,
    pub n: u32,
}

impl fmt::Display for ChannelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.arrangement {
            Arrangement::Pmu => write!(f, "pmu({})", self.n),
            Arrangement::Muo => write!(f, "muO({})", self.n),
        }
    }
}

/// Explicit matrices of the generalized eigenproblem at one hyperradius.
#[derive(Debug, Clone)]
pub struct AngularOperatorMatrices {
    pub rho: f64,
    pub n_l: usize,
    /// Diagonal of D, -n(n+1) for n = 1..=n_L.
    pub d: DVector<f64>,
    pub w: DMatrix<f64>,
    pub o: DMatrix<f64>,
    /// c = 2 / (m theta_mu^2 rho^2).
    pub kinetic_prefactor: f64,
}

/// Eigenpairs of one hyperradial sector.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub rho: f64,
    pub half_width: f64,
    /// Ascending surface energies, hartree.
    pub energies: Vec<f64>,
    /// Eigenvectors in the reduced (O-orthonormal) representation, n_L x n_keep.
    pub reduced: DMatrix<f64>,
    /// Legendre coefficients phi_bar, n_L x n_keep.
    pub coefficients: DMatrix<f64>,
    /// Fraction of each state's norm on the (p mu) side x < 0.
    pub pmu_weight: Vec<f64>,
}

impl SectorBasis {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Channel labels by localization and energy order within each
    /// arrangement. Only meaningful at large rho where arrangements separate.
    pub fn labels(&self) -> Vec<ChannelLabel> {
        let (mut n_pmu, mut n_muo) = (0, 0);
        self.pmu_weight
            .iter()
            .map(|&w| {
                if w > 0.5 {
                    n_pmu += 1;
                    ChannelLabel { arrangement: Arrangement::Pmu, n: n_pmu }
                } else {
                    n_muo += 1;
                    ChannelLabel { arrangement: Arrangement::Muo, n: n_muo }
                }
            })
            .collect()
    }

    /// Index of the state carrying a given label, if present.
    pub fn find(&self, label: ChannelLabel) -> Option<usize> {
        self.labels().iter().position(|&l| l == label)
    }
}

fn kinetic_prefactor(masses: &MassSet, rho: f64) -> f64 {
    2.0 / (masses.m_scaled * masses.theta_mu * masses.theta_mu * rho * rho)
}

fn inverse_sqrt_spd(o: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = o.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-14 * max) {
        return Err(Error::Conditioning { smallest: min });
    }
    let q = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] / eig.eigenvalues[j].sqrt());
    Ok(&scaled * q.transpose())
}

/// Sorted eigenpairs of a symmetric matrix, lowest `n_keep`, with a
/// deterministic sign (largest component positive).
fn lowest_eigenpairs(h: DMatrix<f64>, n_keep: usize) -> (Vec<f64>, DMatrix<f64>) {
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let n_keep = n_keep.min(order.len());
    let n = eig.eigenvectors.nrows();
    let mut vecs = DMatrix::zeros(n, n_keep);
    let mut vals = Vec::with_capacity(n_keep);
    for (col, &src) in order.iter().take(n_keep).enumerate() {
        let v = eig.eigenvectors.column(src);
        let imax = v.iamax();
        let sign = if v[imax] < 0.0 { -1.0 } else { 1.0 };
        vecs.set_column(col, &(v * sign));
        vals.push(eig.eigenvalues[src]);
    }
    (vals, vecs)
}

/// Precomputed quadrature, basis values and metric for one (model, n_L).
#[derive(Debug, Clone)]
pub struct SurfaceSolver {
    pub model: PotentialModel,
    pub n_l: usize,
    nodes: Vec<f64>,
    /// w_k (1 - x_k^2)
    metric_weights: Vec<f64>,
    thetas: Vec<f64>,
    /// Legendre values at the nodes, n_q x n_L.
    basis: DMatrix<f64>,
    o_inv_sqrt: DMatrix<f64>,
    /// basis * O^{-1/2}: values at the nodes of reduced-coordinate vectors.
    reduced_values: DMatrix<f64>,
    /// O^{-1/2} diag(n(n+1)) O^{-1/2}
    reduced_laplacian: DMatrix<f64>,
}

impl SurfaceSolver {
    pub fn new(model: PotentialModel, n_l: usize) -> Result<Self> {
        if n_l < 2 {
            return Err(Error::InvalidInput(format!("n_L must be at least 2, got {n_l}")));
        }
        let n_q = n_l + 2;
        let (nodes, weights) = gauss_legendre(n_q);
        let mut basis = DMatrix::zeros(n_q, n_l);
        let mut row = vec![0.0; n_l];
        for (k, &x) in nodes.iter().enumerate() {
            assoc_legendre_m1(n_l, x, &mut row);
            for n in 0..n_l {
                basis[(k, n)] = row[n];
            }
        }
        let metric_weights: Vec<f64> =
            nodes.iter().zip(&weights).map(|(&x, &w)| w * (1.0 - x) * (1.0 + x)).collect();
        let o = weighted_gram(&basis, &metric_weights);
        let o_inv_sqrt = inverse_sqrt_spd(&o)?;
        let reduced_values = &basis * &o_inv_sqrt;
        let lap = DMatrix::from_fn(n_l, n_l, |i, j| {
            let n = (j + 1) as f64;
            o_inv_sqrt[(i, j)] * n * (n + 1.0)
        });
        let reduced_laplacian = &lap * &o_inv_sqrt;
        let theta_mu = model.masses.theta_mu;
        let thetas = nodes.iter().map(|&x| 0.5 * theta_mu * (x + 1.0)).collect();
        Ok(Self {
            model,
            n_l,
            nodes,
            metric_weights,
            thetas,
            basis,
            o_inv_sqrt,
            reduced_values,
            reduced_laplacian,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// w_k (1 - x_k^2) V(rho, theta_k) at each node.
    pub fn potential_weights(&self, rho: f64) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(self.nodes.len());
        for k in 0..self.nodes.len() {
            let v = self.model.potential_unchecked(rho, self.thetas[k]);
            if !v.is_finite() {
                return Err(Error::Assembly { rho, reason: format!("non-finite potential at node {k}") });
            }
            g[k] = self.metric_weights[k] * v;
        }
        Ok(g)
    }

    /// Explicit D, W, O matrices.
    pub fn operator_matrices(&self, rho: f64) -> Result<AngularOperatorMatrices> {
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("rho must be positive, got {rho}")));
        }
        let m = self.model.masses.m_scaled;
        let g = self.potential_weights(rho)?;
        let shift = -1.0 / (8.0 * m * rho * rho);
        let full: Vec<f64> = g.iter().zip(&self.metric_weights).map(|(gv, mw)| gv + shift * mw).collect();
        Ok(AngularOperatorMatrices {
            rho,
            n_l: self.n_l,
            d: DVector::from_fn(self.n_l, |i, _| {
                let n = (i + 1) as f64;
                -n * (n + 1.0)
            }),
            w: weighted_gram(&self.basis, &full),
            o: weighted_gram(&self.basis, &self.metric_weights),
            kinetic_prefactor: kinetic_prefactor(&self.model.masses, rho),
        })
    }

    /// Reduced Hamiltonian O^{-1/2} (-c D + W) O^{-1/2}.
    fn reduced_hamiltonian(&self, rho: f64) -> Result<DMatrix<f64>> {
        let g = self.potential_weights(rho)?;
        let m = self.model.masses.m_scaled;
        let mut h = weighted_gram(&self.reduced_values, g.as_slice());
        h += &self.reduced_laplacian * kinetic_prefactor(&self.model.masses, rho);
        let shift = -1.0 / (8.0 * m * rho * rho);
        for i in 0..self.n_l {
            h[(i, i)] += shift;
        }
        Ok(h)
    }

    /// Lowest `n_keep` surface states at `rho`.
    pub fn solve(&self, rho: f64, n_keep: usize) -> Result<SectorBasis> {
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("rho must be positive, got {rho}")));
        }
        let h = self.reduced_hamiltonian(rho)?;
        let (energies, reduced) = lowest_eigenpairs(h, n_keep);
        let coefficients = &self.o_inv_sqrt * &reduced;
        let values = &self.reduced_values * &reduced;
        let pmu_weight = (0..reduced.ncols())
            .map(|j| {
                (0..self.nodes.len())
                    .filter(|&k| self.nodes[k] < 0.0)
                    .map(|k| self.metric_weights[k] * values[(k, j)].powi(2))
                    .sum()
            })
            .collect();
        Ok(SectorBasis { rho, half_width: 0.0, energies, reduced, coefficients, pmu_weight })
    }

    /// Surface energies only.
    pub fn energies(&self, rho: f64, n_keep: usize) -> Result<Vec<f64>> {
        Ok(self.solve(rho, n_keep)?.energies)
    }

    /// Values of the basis states at the quadrature nodes, n_q x N.
    pub fn node_values(&self, basis: &SectorBasis) -> DMatrix<f64> {
        &self.reduced_values * &basis.reduced
    }

    /// Potential matrix of the sector states evaluated at another
    /// hyperradius: <phi_i(rho_n)| V(rho', .) |phi_j(rho_n)>.
    pub fn potential_matrix(&self, node_values: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
        let g = self.potential_weights(rho)?;
        Ok(weighted_gram(node_values, g.as_slice()))
    }

    /// Kinetic part (angular kinetic plus -1/(8 m rho^2)) of the sector
    /// Hamiltonian at the sector's own hyperradius.
    pub fn kinetic_matrix(&self, basis: &SectorBasis) -> DMatrix<f64> {
        let rho = basis.rho;
        let c = kinetic_prefactor(&self.model.masses, rho);
        let k = basis.reduced.transpose() * &self.reduced_laplacian * &basis.reduced * c;
        let mut k = (&k + k.transpose()) * 0.5;
        let shift = -1.0 / (8.0 * self.model.masses.m_scaled * rho * rho);
        for i in 0..k.nrows() {
            k[(i, i)] += shift;
        }
        k
    }
}

/// A^T diag(w) A
fn weighted_gram(a: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (k, &wk) in w.iter().enumerate() {
        scaled.row_mut(k).scale_mut(wk);
    }
    let g = a.transpose() * scaled;
    // exact symmetry
    (&g + g.transpose()) * 0.5
}

/// Assembles the explicit operator matrices for one hyperradius.
pub fn build_operator_matrices(rho: f64, n_l: usize, model: &PotentialModel) -> Result<AngularOperatorMatrices> {
    SurfaceSolver::new(*model, n_l)?.operator_matrices(rho)
}

/// Solves the generalized problem given explicit matrices. Independent of
/// the cached reduction used by [`SurfaceSolver`].
pub fn solve_surface_states(m: &AngularOperatorMatrices, n_keep: usize) -> Result<SectorBasis> {
    let o_inv_sqrt = inverse_sqrt_spd(&m.o)?;
    let mut a = m.w.clone();
    for i in 0..m.n_l {
        a[(i, i)] -= m.kinetic_prefactor * m.d[i];
    }
    let h = &o_inv_sqrt * a * &o_inv_sqrt;
    let h = (&h + h.transpose()) * 0.5;
    let (energies, reduced) = lowest_eigenpairs(h, n_keep);
    let coefficients = &o_inv_sqrt * &reduced;
    Ok(SectorBasis {
        rho: m.rho,
        half_width: 0.0,
        energies,
        pmu_weight: vec![f64::NAN; reduced.ncols()],
        reduced,
        coefficients,
    })
}

/// T_ij = phi_bar_i(A)^T O phi_bar_j(B); both bases from the same n_L.
pub fn sector_overlap(a: &SectorBasis, b: &SectorBasis) -> DMatrix<f64> {
    debug_assert_eq!(a.reduced.nrows(), b.reduced.nrows());
    a.reduced.transpose() * &b.reduced
}

/// Loss of norm when projecting between two retained spaces: 1 - s_min^2,
/// with s_min the smallest singular value of the overlap. Zero when the
/// spaces coincide, regardless of rotations or sign flips inside them.
pub fn truncation_defect(t: &DMatrix<f64>) -> f64 {
    let sv = t.clone().singular_values();
    let smin = sv.min();
    (1.0 - smin * smin).max(0.0)
}

/// Nearest orthogonal matrix (polar factor) to an overlap matrix.
pub fn orthogonal_factor(t: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = t.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    u * vt
}

/// Adiabatic energies on a hyperradius grid with overlap-followed tracks.
#[derive(Debug, Clone)]
pub struct CurveTable {
    pub rho: Vec<f64>,
    /// energies[k][i]: i-th lowest surface energy at rho[k], hartree.
    pub energies: Vec<Vec<f64>>,
    /// tracks[k][i]: identity of state i at rho[k], continued by maximal
    /// overlap from the largest hyperradius.
    pub tracks: Vec<Vec<usize>>,
    /// Labels of the tracks, assigned at the largest hyperradius.
    pub track_labels: Vec<ChannelLabel>,
    /// Near-degeneracies where following by overlap was ambiguous.
    pub diagnostics: Vec<String>,
}

impl CurveTable {
    pub fn curve(&self, i: usize) -> Vec<f64> {
        self.energies.iter().map(|e| e[i]).collect()
    }
}

pub fn adiabatic_curve_scan(rho_grid: &[f64], solver: &SurfaceSolver, n_keep: usize) -> Result<CurveTable> {
    if rho_grid.is_empty() || rho_grid.windows(2).any(|w| w[1] <= w[0]) || rho_grid[0] <= 0.0 {
        return Err(Error::InvalidInput("rho grid must be positive and strictly increasing".into()));
    }
    let bases: Vec<SectorBasis> = rho_grid.iter().map(|&r| solver.solve(r, n_keep)).collect::<Result<_>>()?;
    let n = bases.iter().map(|b| b.len()).min().unwrap_or(0);
    let last = bases.len() - 1;
    let track_labels = bases[last].labels()[..n].to_vec();
    let mut tracks = vec![Vec::new(); bases.len()];
    tracks[last] = (0..n).collect();
    let mut diagnostics = Vec::new();
    for k in (0..last).rev() {
        let t = sector_overlap(&bases[k], &bases[k + 1]);
        let mut assigned = vec![usize::MAX; n];
        let mut used = vec![false; n];
        // greedy assignment by decreasing |overlap|
        let mut pairs: Vec<(f64, usize, usize)> =
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (t[(i, j)].abs(), i, j)).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (ov, i, j) in pairs {
            if assigned[i] != usize::MAX || used[j] {
                continue;
            }
            if ov < 0.5 {
                diagnostics.push(format!(
                    "ambiguous continuation of state {i} at rho={:.6} (max overlap {ov:.3})",
                    rho_grid[k]
                ));
            }
            assigned[i] = tracks[k + 1][j];
            used[j] = true;
        }
        tracks[k] = assigned;
    }
    let energies = bases.iter().map(|b| b.energies[..n].to_vec()).collect();
    Ok(CurveTable { rho: rho_grid.to_vec(), energies, tracks, track_labels, diagnostics })
}

/// Position and size of the minimum separation between two curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvoidedCrossing {
    pub rho_c: f64,
    pub gap: f64,
}

/// Finds the deepest strict local minimum of |eps_j - eps_i| on the grid
/// and refines it with a parabola through the squared gap, which is exact
/// for a two-state crossing with linear diabats.
pub fn locate_avoided_crossing(curves: &CurveTable, i: usize, j: usize) -> Result<AvoidedCrossing> {
    let gap: Vec<f64> = curves.energies.iter().map(|e| (e[j] - e[i]).abs()).collect();
    locate_gap_minimum(&curves.rho, &gap).ok_or(Error::CrossingNotFound { i, j })
}

pub fn locate_gap_minimum(rho: &[f64], gap: &[f64]) -> Option<AvoidedCrossing> {
    let mut best: Option<usize> = None;
    for k in 1..gap.len().saturating_sub(1) {
        if gap[k] < gap[k - 1] && gap[k] < gap[k + 1] && best.is_none_or(|b| gap[k] < gap[b]) {
            best = Some(k);
        }
    }
    let k = best?;
    let (x0, x1, x2) = (rho[k - 1], rho[k], rho[k + 1]);
    let (y0, y1, y2) = (gap[k - 1].powi(2), gap[k].powi(2), gap[k + 1].powi(2));
    // Newton divided differences of the parabola
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a > 0.0) {
        return Some(AvoidedCrossing { rho_c: x1, gap: gap[k] });
    }
    let b = d01 - a * (x0 + x1);
    let rho_c = (-b / (2.0 * a)).clamp(x0, x2);
    let y = y0 + d01 * (rho_c - x0) + a * (rho_c - x0) * (rho_c - x1);
    Some(AvoidedCrossing { rho_c, gap: y.max(0.0).sqrt().min(gap[k]) })
}
