//! Sector grid and de Vogelaere propagation of the close-coupling equations.
//!
//! Inside sector n the channel functions are expanded on the surface states
//! frozen at the sector center rho_n, so the coupled equations read
//! F'' = U(rho) F with
//!
//! ```text
//! U(rho) = 2m [ K_n (rho_n / rho)^2 + P_n(rho) - E ]
//! ```
//!
//! K_n is the angular kinetic matrix (with the -1/(8 m rho^2) term) and P_n the
//! projected potential, interpolated quadratically in rho P_n between the
//! sector ends and the center. At the ends P_n carries a correction that puts
//! the eigenvalues of the frozen-basis Hamiltonian on the exact surface
//! energies (see `ritz_correction`). At a boundary the solution
//! is carried to the next sector with the orthogonal polar factor of the
//! overlap matrix.

use nalgebra::DMatrix;

use crate::constants::MassSet;
use crate::error::{Error, Result};
use crate::surface::{orthogonal_factor, sector_overlap, truncation_defect, SectorBasis, SurfaceSolver};

/// How sectors are placed between rho_start and rho_end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorGridSpec {
    pub rho_start: f64,
    pub rho_end: f64,
    /// Largest ratio between consecutive sector centers.
    pub ratio: f64,
    /// Largest accepted truncation defect between neighbouring sectors.
    pub max_defect: f64,
    /// Smallest relative center spacing before a sector is accepted anyway.
    pub min_relative_step: f64,
    pub n_channels: usize,
    /// Highest states left out of the defect test. The top of the retained
    /// set crosses states outside it, which no step size can resolve.
    pub buffer: usize,
}

impl Default for SectorGridSpec {
    fn default() -> Self {
        Self {
            rho_start: 0.05,
            rho_end: 30.0,
            ratio: 1.05,
            max_defect: 1e-3,
            min_relative_step: 1e-4,
            n_channels: 29,
            buffer: 4,
        }
    }
}

/// Coupling data of one sector.
#[derive(Debug, Clone)]
pub struct Sector {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    /// Surface energies at the center.
    pub energies: Vec<f64>,
    /// p mu weight of each state at the center (arrangement class).
    pub pmu_weight: Vec<f64>,
    /// Kinetic matrix at the center.
    pub kinetic: DMatrix<f64>,
    /// rho * P(rho) at lo, center and hi.
    pub scaled_potential: [DMatrix<f64>; 3],
    /// Orthogonal map from the previous sector's channels to this one's,
    /// applied as F -> entry^T F at `lo`.
    pub entry: DMatrix<f64>,
    /// Truncation defect of the overlap with the previous sector.
    pub defect: f64,
}

impl Sector {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Sector Hamiltonian H(rho) into `out`.
    pub fn hamiltonian_into(&self, rho: f64, out: &mut DMatrix<f64>) {
        let s = self.center / rho;
        let (x0, x1, x2) = (self.lo, self.center, self.hi);
        let l0 = (rho - x1) * (rho - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (rho - x0) * (rho - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (rho - x0) * (rho - x1) / ((x2 - x0) * (x2 - x1));
        let k = &self.kinetic;
        let [q0, q1, q2] = &self.scaled_potential;
        let inv = 1.0 / rho;
        let s2 = s * s;
        for ((((o, &a), &b0), &b1), &b2) in out
            .as_mut_slice()
            .iter_mut()
            .zip(k.as_slice())
            .zip(q0.as_slice())
            .zip(q1.as_slice())
            .zip(q2.as_slice())
        {
            *o = a * s2 + (l0 * b0 + l1 * b1 + l2 * b2) * inv;
        }
    }
}

/// All sectors for one model and basis size, plus the eigenbasis at rho_end.
#[derive(Debug, Clone)]
pub struct SectorSet {
    pub spec: SectorGridSpec,
    pub n_l: usize,
    pub masses: MassSet,
    pub sectors: Vec<Sector>,
    /// Surface energies at rho_end.
    pub final_energies: Vec<f64>,
    pub final_pmu_weight: Vec<f64>,
    /// Orthogonal map from the last sector to the eigenbasis at rho_end.
    pub final_transform: DMatrix<f64>,
    /// Sectors accepted at the minimum step with defect above tolerance.
    pub forced: usize,
}

impl SectorSet {
    pub fn n_channels(&self) -> usize {
        self.final_energies.len()
    }

    pub fn max_defect(&self) -> f64 {
        self.sectors.iter().map(|s| s.defect).fold(0.0, f64::max)
    }
}

fn scaled_potential(solver: &SurfaceSolver, values: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    Ok(solver.potential_matrix(values, rho)? * rho)
}

/// Correction that moves the eigenvalues of the frozen-basis Hamiltonian at
/// `exact.rho` onto the exact surface energies there. A frozen basis cannot
/// follow the 1/rho contraction of the bound states, and the resulting
/// energy error grows with the square of the distance from the center.
fn ritz_correction(kinetic: &DMatrix<f64>, center: f64, potential: &DMatrix<f64>, exact: &SectorBasis) -> DMatrix<f64> {
    let x = exact.rho;
    let h = kinetic * (center / x).powi(2) + potential;
    let h = (&h + h.transpose()) * 0.5;
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = order.len();
    let mut c = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let u = eig.eigenvectors.column(i);
        c += (u * u.transpose()) * (exact.energies[k] - eig.eigenvalues[i]);
    }
    c
}

fn make_sector(
    solver: &SurfaceSolver,
    basis: &SectorBasis,
    at_lo: &SectorBasis,
    at_hi: &SectorBasis,
    entry: DMatrix<f64>,
    defect: f64,
) -> Result<Sector> {
    let values = solver.node_values(basis);
    let center = basis.rho;
    let (lo, hi) = (at_lo.rho, at_hi.rho);
    let kinetic = solver.kinetic_matrix(basis);
    let potential = |x: f64| solver.potential_matrix(&values, x);
    let edge = |b: &SectorBasis| -> Result<DMatrix<f64>> {
        let p = potential(b.rho)?;
        let c = ritz_correction(&kinetic, center, &p, b);
        Ok((p + c) * b.rho)
    };
    let scaled = [edge(at_lo)?, scaled_potential(solver, &values, center)?, edge(at_hi)?];
    Ok(Sector {
        lo,
        hi,
        center,
        energies: basis.energies.clone(),
        pmu_weight: basis.pmu_weight.clone(),
        kinetic,
        scaled_potential: scaled,
        entry,
        defect,
    })
}

/// Truncation defect of the lowest n - buffer states in both directions.
pub fn buffered_defect(t: &DMatrix<f64>, buffer: usize) -> f64 {
    let k = t.nrows().saturating_sub(buffer).max(1);
    let fwd = truncation_defect(&t.rows(0, k).into_owned());
    let bwd = truncation_defect(&t.columns(0, k).into_owned());
    fwd.max(bwd)
}

/// Places sectors outward from rho_start. Each new center is proposed at
/// `ratio` times the previous one and pulled back until the truncation
/// defect of the overlap is within tolerance.
pub fn build_sectors(solver: &SurfaceSolver, spec: &SectorGridSpec) -> Result<SectorSet> {
    if !(spec.rho_start > 0.0 && spec.rho_end > spec.rho_start && spec.ratio > 1.0) {
        return Err(Error::InvalidInput(format!(
            "sector grid needs 0 < rho_start < rho_end and ratio > 1, got {spec:?}"
        )));
    }
    if spec.n_channels == 0 || spec.n_channels > solver.n_l {
        return Err(Error::InvalidInput(format!(
            "{} channels requested from a basis of {}",
            spec.n_channels, solver.n_l
        )));
    }
    let n = spec.n_channels;
    let log_max = spec.ratio.ln();
    let log_min = (1.0 + spec.min_relative_step).ln();
    let mut center = spec.rho_start * spec.ratio.sqrt();
    let mut basis = solver.solve(center, n)?;
    let mut at_lo = solver.solve(spec.rho_start, n)?;
    let mut pending = (DMatrix::identity(n, n), 0.0);
    let mut sectors = Vec::new();
    let mut forced = 0;
    let mut log_step = log_max;
    loop {
        if center * log_step.exp() >= spec.rho_end {
            // last sector ends at rho_end
            let at_end = solver.solve(spec.rho_end, n)?;
            let sector = make_sector(solver, &basis, &at_lo, &at_end, pending.0, pending.1)?;
            sectors.push(sector);
            break;
        }
        let (next, t, defect) = loop {
            let c = center * log_step.exp();
            let b = solver.solve(c, n)?;
            let t = sector_overlap(&basis, &b);
            let d = buffered_defect(&t, spec.buffer);
            if d <= spec.max_defect || log_step <= log_min {
                if d > spec.max_defect {
                    forced += 1;
                }
                break (b, t, d);
            }
            log_step = (0.5 * log_step).max(log_min);
        };
        let at_hi = solver.solve(0.5 * (center + next.rho), n)?;
        let sector = make_sector(solver, &basis, &at_lo, &at_hi, pending.0, pending.1)?;
        sectors.push(sector);
        pending = (orthogonal_factor(&t), defect);
        at_lo = at_hi;
        center = next.rho;
        basis = next;
        log_step = (2.0 * log_step).min(log_max);
    }
    let final_basis = solver.solve(spec.rho_end, n)?;
    let final_transform = orthogonal_factor(&sector_overlap(&basis, &final_basis));
    Ok(SectorSet {
        spec: *spec,
        n_l: solver.n_l,
        masses: solver.model.masses,
        sectors,
        final_energies: final_basis.energies,
        final_pmu_weight: final_basis.pmu_weight,
        final_transform,
        forced,
    })
}

/// Matrix solution of F'' = U F and its bookkeeping.
#[derive(Debug, Clone)]
pub struct PropagationState {
    pub f: DMatrix<f64>,
    pub fp: DMatrix<f64>,
    pub rho: f64,
    pub steps: usize,
    pub stabilizations: usize,
    /// Largest relative Wronskian asymmetry seen at sector ends.
    pub max_wronskian: f64,
}

impl PropagationState {
    /// Regular start: F = 0, F' = I.
    pub fn regular(n: usize, rho: f64) -> Self {
        Self {
            f: DMatrix::zeros(n, n),
            fp: DMatrix::identity(n, n),
            rho,
            steps: 0,
            stabilizations: 0,
            max_wronskian: 0.0,
        }
    }

    /// ||F^T F' - F'^T F|| relative to ||F|| ||F'||.
    pub fn wronskian_defect(&self) -> f64 {
        let w = self.f.transpose() * &self.fp;
        let asym = &w - w.transpose();
        let scale = self.f.norm() * self.fp.norm();
        if scale == 0.0 {
            0.0
        } else {
            asym.norm() / scale
        }
    }

    /// Replaces the columns by an orthonormal basis of the stacked
    /// [F; F'] span. Returns R^{-1} so that carried quantities can follow.
    fn orthonormalize(&mut self) -> Option<DMatrix<f64>> {
        let n = self.f.nrows();
        let m = self.f.ncols();
        let mut stacked = DMatrix::zeros(2 * n, m);
        stacked.view_mut((0, 0), (n, m)).copy_from(&self.f);
        stacked.view_mut((n, 0), (n, m)).copy_from(&self.fp);
        let qr = stacked.qr();
        let r_inv = qr.r().try_inverse()?;
        let q = qr.q();
        self.f.copy_from(&q.view((0, 0), (n, m)));
        self.fp.copy_from(&q.view((n, 0), (n, m)));
        self.stabilizations += 1;
        Some(r_inv)
    }

    fn condition_estimate(&self) -> f64 {
        let n = self.f.nrows();
        let m = self.f.ncols();
        let mut stacked = DMatrix::zeros(2 * n, m);
        stacked.view_mut((0, 0), (n, m)).copy_from(&self.f);
        stacked.view_mut((n, 0), (n, m)).copy_from(&self.fp);
        let r = stacked.qr().unpack_r();
        let d: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Knobs of the stepper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// Steps per sector at least this many.
    pub min_steps_per_sector: usize,
    /// Steps per shortest local wavelength.
    pub steps_per_wavelength: f64,
    /// Orthonormalize when the column condition estimate exceeds this.
    pub stabilization_threshold: f64,
    /// Extra uniform refinement factor for convergence studies.
    pub refine: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { min_steps_per_sector: 8, steps_per_wavelength: 160.0, stabilization_threshold: 1e6, refine: 1.0 }
    }
}

/// Anything that supplies U(rho) for de Vogelaere steps.
pub trait Coupling {
    fn dim(&self) -> usize;
    fn coupling_into(&self, rho: f64, out: &mut DMatrix<f64>);
}

/// Constant coupling matrix (analytic test problems).
#[derive(Debug, Clone)]
pub struct ConstantCoupling(pub DMatrix<f64>);

impl Coupling for ConstantCoupling {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn coupling_into(&self, _rho: f64, out: &mut DMatrix<f64>) {
        out.copy_from(&self.0);
    }
}

/// U(rho) = 2m (H_sector(rho) - E), with optional suppression of couplings
/// between arrangement classes.
pub struct SectorCoupling<'a> {
    pub sector: &'a Sector,
    pub two_m: f64,
    pub energy: f64,
    pub mask: Option<&'a DMatrix<f64>>,
}

impl Coupling for SectorCoupling<'_> {
    fn dim(&self) -> usize {
        self.sector.energies.len()
    }
    fn coupling_into(&self, rho: f64, out: &mut DMatrix<f64>) {
        self.sector.hamiltonian_into(rho, out);
        for i in 0..out.nrows() {
            out[(i, i)] -= self.energy;
        }
        *out *= self.two_m;
        if let Some(m) = self.mask {
            out.component_mul_assign(m);
        }
    }
}

/// y += a x
fn axpy(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>) {
    for (yv, xv) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yv += a * xv;
    }
}

/// Work buffers and carried half-step value of the scheme.
pub struct Stepper {
    u: DMatrix<f64>,
    f0: DMatrix<f64>,
    f_half_prev: DMatrix<f64>,
    y_half: DMatrix<f64>,
    f_half: DMatrix<f64>,
    y1: DMatrix<f64>,
    f1: DMatrix<f64>,
    have_prev: bool,
}

impl Stepper {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            u: DMatrix::zeros(n, n),
            f0: DMatrix::zeros(n, m),
            f_half_prev: DMatrix::zeros(n, m),
            y_half: DMatrix::zeros(n, m),
            f_half: DMatrix::zeros(n, m),
            y1: DMatrix::zeros(n, m),
            f1: DMatrix::zeros(n, m),
            have_prev: false,
        }
    }

    /// Forget the carried half-step value (new sector or new coupling).
    pub fn restart(&mut self) {
        self.have_prev = false;
    }

    fn eval<C: Coupling>(u: &mut DMatrix<f64>, c: &C, rho: f64, y: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        c.coupling_into(rho, u);
        u.mul_to(y, out);
    }

    /// One de Vogelaere step of size h from state.rho.
    pub fn step<C: Coupling>(&mut self, state: &mut PropagationState, c: &C, h: f64) {
        let rho = state.rho;
        if !self.have_prev {
            Self::eval(&mut self.u, c, rho, &state.f, &mut self.f0);
            // y(rho - h/2) from a Taylor expansion
            self.y_half.copy_from(&state.f);
            axpy(&mut self.y_half, -0.5 * h, &state.fp);
            axpy(&mut self.y_half, h * h / 8.0, &self.f0);
            Self::eval(&mut self.u, c, rho - 0.5 * h, &self.y_half, &mut self.f_half_prev);
            self.have_prev = true;
        }
        let h2 = h * h;
        self.y_half.copy_from(&state.f);
        axpy(&mut self.y_half, 0.5 * h, &state.fp);
        axpy(&mut self.y_half, h2 / 6.0, &self.f0);
        axpy(&mut self.y_half, -h2 / 24.0, &self.f_half_prev);
        Self::eval(&mut self.u, c, rho + 0.5 * h, &self.y_half, &mut self.f_half);

        self.y1.copy_from(&state.f);
        axpy(&mut self.y1, h, &state.fp);
        axpy(&mut self.y1, h2 / 6.0, &self.f0);
        axpy(&mut self.y1, h2 / 3.0, &self.f_half);
        Self::eval(&mut self.u, c, rho + h, &self.y1, &mut self.f1);

        axpy(&mut state.fp, h / 6.0, &self.f0);
        axpy(&mut state.fp, 2.0 * h / 3.0, &self.f_half);
        axpy(&mut state.fp, h / 6.0, &self.f1);
        std::mem::swap(&mut state.f, &mut self.y1);
        std::mem::swap(&mut self.f0, &mut self.f1);
        std::mem::swap(&mut self.f_half_prev, &mut self.f_half);
        state.rho = rho + h;
        state.steps += 1;
    }

    /// Right-multiplies the carried derivatives after a column change.
    fn rescale(&mut self, r_inv: &DMatrix<f64>) {
        self.f0 = &self.f0 * r_inv;
        self.f_half_prev = &self.f_half_prev * r_inv;
    }
}

/// Integrates from state.rho to `to` in `n_steps` equal steps with
/// stabilization checks every `check_every` steps.
pub fn integrate<C: Coupling>(
    state: &mut PropagationState,
    stepper: &mut Stepper,
    c: &C,
    to: f64,
    n_steps: usize,
    check_every: usize,
    threshold: f64,
) -> Result<()> {
    let h = (to - state.rho) / n_steps as f64;
    for k in 0..n_steps {
        stepper.step(state, c, h);
        if (k + 1) % check_every.max(1) == 0 || k + 1 == n_steps {
            if !state.f.iter().chain(state.fp.iter()).all(|v| v.is_finite()) {
                return Err(Error::BlowUp { rho: state.rho, energy: f64::NAN });
            }
            if state.condition_estimate() > threshold {
                if let Some(r_inv) = state.orthonormalize() {
                    stepper.rescale(&r_inv);
                }
            }
        }
    }
    state.rho = to;
    Ok(())
}

/// Largest local wavenumber |2m(eps_i - E)|^{1/2} over the sector.
fn max_wavenumber(sector: &Sector, two_m: f64, energy: f64) -> f64 {
    let s2 = (sector.center / sector.lo).powi(2);
    sector
        .energies
        .iter()
        .map(|&e| {
            // energies grow like 1/rho^2 inward at worst
            let lo_end = (e * s2 - energy).abs().max((e - energy).abs());
            (two_m * lo_end).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Options of one close-coupling propagation.
#[derive(Debug, Clone, Copy, Default)]
pub struct PropagateOptions {
    pub control: StepControl,
    /// Zero all couplings between states of different arrangement class.
    pub decouple_arrangements: bool,
}

fn class_mask(w: &[f64]) -> DMatrix<f64> {
    let n = w.len();
    DMatrix::from_fn(n, n, |i, j| if (w[i] > 0.5) == (w[j] > 0.5) { 1.0 } else { 0.0 })
}

/// Propagates the regular solution at total energy `energy` (hartree)
/// through all sectors and returns it in the eigenbasis at rho_end.
pub fn propagate(energy: f64, set: &SectorSet, opts: &PropagateOptions) -> Result<PropagationState> {
    let n = set.n_channels();
    let two_m = 2.0 * set.masses.m_scaled;
    let ctl = opts.control;
    let mut state = PropagationState::regular(n, set.spec.rho_start);
    let mut stepper = Stepper::new(n, n);
    for (idx, sector) in set.sectors.iter().enumerate() {
        let mask = opts.decouple_arrangements.then(|| class_mask(&sector.pmu_weight));
        let entry = if opts.decouple_arrangements && idx > 0 {
            cross_masked(&sector.entry, &set.sectors[idx - 1].pmu_weight, &sector.pmu_weight)
        } else {
            sector.entry.clone()
        };
        state.f = entry.transpose() * &state.f;
        state.fp = entry.transpose() * &state.fp;
        stepper.restart();
        let c = SectorCoupling { sector, two_m, energy, mask: mask.as_ref() };
        let k = max_wavenumber(sector, two_m, energy);
        let width = sector.width();
        let by_wavelength = (width * k * ctl.steps_per_wavelength / std::f64::consts::TAU).ceil() as usize;
        let n_steps = (((by_wavelength.max(ctl.min_steps_per_sector)) as f64) * ctl.refine).ceil() as usize;
        let h = width / n_steps as f64;
        // columns grow at most like exp(k h) per step
        let check_every = ((ctl.stabilization_threshold.ln() / 4.0) / (k * h).max(1e-12)).floor().max(1.0) as usize;
        integrate(&mut state, &mut stepper, &c, sector.hi, n_steps, check_every, ctl.stabilization_threshold)
            .map_err(|e| match e {
                Error::BlowUp { rho, .. } => Error::BlowUp { rho, energy },
                other => other,
            })?;
        state.max_wronskian = state.max_wronskian.max(state.wronskian_defect());
    }
    let last = set.sectors.last().map(|s| s.pmu_weight.as_slice()).unwrap_or(&[]);
    let fin = if opts.decouple_arrangements {
        cross_masked(&set.final_transform, last, &set.final_pmu_weight)
    } else {
        set.final_transform.clone()
    };
    state.f = fin.transpose() * &state.f;
    state.fp = fin.transpose() * &state.fp;
    Ok(state)
}

/// Transform with couplings between classes removed, re-orthogonalized.
fn cross_masked(t: &DMatrix<f64>, from: &[f64], to: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_fn(t.nrows(), t.ncols(), |i, j| {
        if (from[i] > 0.5) == (to[j] > 0.5) {
            t[(i, j)]
        } else {
            0.0
        }
    });
    orthogonal_factor(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn run_constant(u: DMatrix<f64>, f: DMatrix<f64>, fp: DMatrix<f64>, to: f64, n: usize) -> PropagationState {
        let mut st = PropagationState { f, fp, rho: 0.0, steps: 0, stabilizations: 0, max_wronskian: 0.0 };
        let mut stepper = Stepper::new(u.nrows(), st.f.ncols());
        integrate(&mut st, &mut stepper, &ConstantCoupling(u), to, n, usize::MAX, f64::INFINITY).unwrap();
        st
    }

    #[test]
    fn free_particle_is_exact() {
        let f = DMatrix::from_row_slice(2, 2, &[0.3, -1.0, 2.0, 0.5]);
        let fp = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.7, 4.0]);
        let st = run_constant(DMatrix::zeros(2, 2), f.clone(), fp.clone(), 1.7, 13);
        assert!((st.f - (f + fp.clone() * 1.7)).amax() < 1e-13);
        assert!((st.fp - fp).amax() < 1e-14);
    }

    fn sine_error(n: usize) -> f64 {
        let k = 3.0;
        let st = run_constant(
            DMatrix::from_element(1, 1, -k * k),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, k),
            5.0,
            n,
        );
        (st.f[(0, 0)] - (k * 5.0).sin()).abs()
    }

    #[test]
    fn fourth_order_convergence() {
        let errs: Vec<f64> = [100, 200, 400, 800].iter().map(|&n| sine_error(n)).collect();
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 4.0).abs() < 0.2, "slope {slope}, errors {errs:?}");
        }
    }

    #[test]
    fn closed_channel_growth_and_stabilization() {
        let kappa = 4.0;
        let u = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![kappa * kappa, 1.0]));
        let st = run_constant(u.clone(), DMatrix::zeros(2, 2), DMatrix::identity(2, 2), 2.0, 2000);
        assert_relative_eq!(st.f[(0, 0)], (kappa * 2.0).sinh() / kappa, max_relative = 1e-8);
        // stabilized run spans the same column space
        let mut s2 = PropagationState::regular(2, 0.0);
        // mix columns so they align as the exponential grows
        s2.fp = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-3]);
        let mut stepper = Stepper::new(2, 2);
        integrate(&mut s2, &mut stepper, &ConstantCoupling(u), 6.0, 6000, 10, 1e4).unwrap();
        assert!(s2.stabilizations > 0);
        assert!(s2.condition_estimate() < 1e5);
    }

    #[test]
    fn wronskian_is_conserved_for_symmetric_coupling() {
        let u = DMatrix::from_row_slice(3, 3, &[-4.0, 0.7, 0.1, 0.7, 2.0, -0.3, 0.1, -0.3, -9.0]);
        let st = run_constant(u, DMatrix::zeros(3, 3), DMatrix::identity(3, 3), 3.0, 3000);
        assert!(st.wronskian_defect() < 1e-8, "{}", st.wronskian_defect());
    }

    #[test]
    fn sector_ends_reproduce_exact_surface_energies() {
        use crate::{MassSet, PotentialModel};
        for model in [PotentialModel::coulomb(MassSet::default()), PotentialModel::thomas_fermi(MassSet::default())] {
            let solver = SurfaceSolver::new(model, 120).unwrap();
            let center = solver.solve(3.0, 12).unwrap();
            let (lo, hi) = (solver.solve(2.9, 12).unwrap(), solver.solve(3.1, 12).unwrap());
            let sector = make_sector(&solver, &center, &lo, &hi, DMatrix::identity(12, 12), 0.0).unwrap();
            let mut h = DMatrix::zeros(12, 12);
            for exact in [&lo, &center, &hi] {
                sector.hamiltonian_into(exact.rho, &mut h);
                let h = (&h + h.transpose()) * 0.5;
                let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
                ev.sort_by(f64::total_cmp);
                for (a, b) in ev.iter().zip(&exact.energies) {
                    assert!((a - b).abs() < 1e-9 * b.abs(), "{:?} rho {}: {a} vs {b}", model.variant, exact.rho);
                }
            }
            // uncorrected, the frozen basis misses the contraction of the p mu state
            let values = solver.node_values(&center);
            let raw = solver.kinetic_matrix(&center) * (3.0f64 / 3.1).powi(2) + solver.potential_matrix(&values, 3.1).unwrap();
            let e = hi.labels().iter().position(|l| l.to_string() == "pmu(1)").unwrap();
            let mut ev: Vec<f64> = raw.symmetric_eigen().eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            assert!(ev[e] - hi.energies[e] > 1e-3);
        }
    }
}
