//! Channel bookkeeping, reference functions and S-matrix extraction at
//! rho_end.
//!
//! Matching is done channel by channel in the eigenbasis at rho_end. Each
//! channel gets a real pair (f, g) solving its own one-dimensional equation
//! with f' g - f g' = 1: plane waves for the products, and for the entrance
//! channel the solutions of the attractive -C2 s(rho)/rho^2 tail (imaginary
//! order Bessel functions when s = 1). Closed channels only keep their
//! decaying exponential.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{ev_to_hartree, hartree_to_ev, MassSet};
use crate::error::{Error, Result};
use crate::potential::{PotentialModel, Variant};
use crate::propagator::PropagationState;
use crate::surface::{Arrangement, ChannelLabel, SurfaceSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub label: ChannelLabel,
    /// Asymptotic threshold, hartree.
    pub threshold: f64,
    /// Surface energy at rho_end, hartree.
    pub local_energy: f64,
    /// Physical reduced mass of the relative motion.
    pub reduced_mass: f64,
    /// E > threshold.
    pub open: bool,
    /// Physical relative wavenumber (a0^-1) if open, decay constant if closed.
    pub wavenumber: f64,
}

impl Channel {
    pub fn threshold_ev(&self) -> f64 {
        hartree_to_ev(self.threshold)
    }
}

/// Channels at one collision energy. Energies are measured from the
/// entrance threshold; `total_energy` is absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTable {
    pub energy_ev: f64,
    pub total_energy: f64,
    pub channels: Vec<Channel>,
    pub entrance: usize,
}

impl ChannelTable {
    pub fn open_indices(&self) -> Vec<usize> {
        (0..self.channels.len()).filter(|&i| self.channels[i].open).collect()
    }

    pub fn find(&self, label: ChannelLabel) -> Option<usize> {
        self.channels.iter().position(|c| c.label == label)
    }
}

/// Labels by localization and order within each arrangement.
pub fn label_states(pmu_weight: &[f64]) -> Vec<ChannelLabel> {
    let (mut a, mut b) = (0, 0);
    pmu_weight
        .iter()
        .map(|&w| {
            if w > 0.5 {
                a += 1;
                ChannelLabel { arrangement: Arrangement::Pmu, n: a }
            } else {
                b += 1;
                ChannelLabel { arrangement: Arrangement::Muo, n: b }
            }
        })
        .collect()
}

/// Asymptotic threshold of a channel. Hydrogenic for the Coulomb model.
/// Screened (mu O) levels have no closed form; they are taken from the
/// surface energy at `rho` with the leftover -1/R p-mu attraction removed.
pub fn channel_threshold(label: ChannelLabel, model: &PotentialModel, local_energy: f64, rho: f64) -> f64 {
    let m = &model.masses;
    match (label.arrangement, model.variant) {
        (Arrangement::Pmu, _) => m.pmu_level(label.n),
        (Arrangement::Muo, Variant::Coulomb) => m.muo_level(model.z, label.n),
        (Arrangement::Muo, Variant::ThomasFermi) => local_energy + 1.0 / m.product_physical(rho),
    }
}

/// Builds the channel table from the surface energies at rho_end.
pub fn build_channel_table(
    energy_ev: f64,
    model: &PotentialModel,
    local_energies: &[f64],
    pmu_weight: &[f64],
    rho_end: f64,
) -> Result<ChannelTable> {
    if !energy_ev.is_finite() {
        return Err(Error::InvalidInput(format!("energy must be finite, got {energy_ev}")));
    }
    let m = model.masses;
    let labels = label_states(pmu_weight);
    let entrance = labels
        .iter()
        .position(|l| *l == ChannelLabel { arrangement: Arrangement::Pmu, n: 1 })
        .ok_or(Error::ChannelMismatch { expected: 1, got: 0 })?;
    let total_energy = m.pmu_level(1) + ev_to_hartree(energy_ev);
    let channels = labels
        .iter()
        .zip(local_energies)
        .map(|(&label, &local_energy)| {
            let threshold = channel_threshold(label, model, local_energy, rho_end);
            let reduced_mass = match label.arrangement {
                Arrangement::Pmu => m.m_o_pmu,
                Arrangement::Muo => m.m_p_muo,
            };
            let open = total_energy > threshold;
            let wavenumber = (2.0 * reduced_mass * (total_energy - threshold).abs()).sqrt();
            Channel { label, threshold, local_energy, reduced_mass, open, wavenumber }
        })
        .collect();
    Ok(ChannelTable { energy_ev, total_energy, channels, entrance })
}

/// Values and derivatives of a real reference pair at one radius, with
/// f' g - f g' = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceFunctionPair {
    pub radius: f64,
    pub f: f64,
    pub fp: f64,
    pub g: f64,
    pub gp: f64,
}

impl ReferenceFunctionPair {
    pub fn wronskian(&self) -> f64 {
        self.fp * self.g - self.f * self.gp
    }
}

/// Flux-normalized plane waves sin(k r)/sqrt(k), cos(k r)/sqrt(k).
pub fn plane_wave_pair(k: f64, r: f64) -> Result<ReferenceFunctionPair> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!("plane waves need k > 0, got {k}")));
    }
    let (s, c) = (k * r).sin_cos();
    let n = k.sqrt().recip();
    Ok(ReferenceFunctionPair { radius: r, f: s * n, fp: c * k * n, g: c * n, gp: -s * k * n })
}

/// Reference pair for an open product channel at hyperradius `rho`, using
/// the local wavenumber sqrt(2m(E - eps_c(rho))).
pub fn product_reference(table: &ChannelTable, channel: usize, m_scaled: f64, rho: f64) -> Result<ReferenceFunctionPair> {
    let c = table.channels.get(channel).ok_or(Error::ChannelMismatch { expected: channel + 1, got: table.channels.len() })?;
    if !c.open {
        return Err(Error::Domain(format!("channel {} is closed at {} eV", c.label, table.energy_ev)));
    }
    let k2 = 2.0 * m_scaled * (table.total_energy - c.local_energy);
    if !(k2 > 0.0) {
        return Err(Error::Domain(format!("channel {} is locally closed at rho = {rho}", c.label)));
    }
    plane_wave_pair(k2.sqrt(), rho)
}

/// Shape of the entrance tail V(rho) = -C2 s(rho) / rho^2 beyond rho_end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailShape {
    InverseSquare,
    /// s = chi - x chi' at the physical (p mu)-O distance: the screened
    /// field acting on the (p mu) dipole.
    ScreenedField { model: PotentialModel },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntranceTail {
    pub c2: f64,
    /// Next coefficient of the fit, rho^2 (eps - th) = -c2 - c3 / rho.
    pub c3: f64,
    pub shape: TailShape,
    pub m_scaled: f64,
}

impl EntranceTail {
    pub fn shape_factor(&self, rho: f64) -> f64 {
        match self.shape {
            TailShape::InverseSquare => 1.0,
            TailShape::ScreenedField { model } => {
                let d = model.masses.entrance_physical(rho);
                let (z, dz) = model.charge_and_slope(d);
                (z - d * dz) / model.z
            }
        }
    }

    pub fn potential(&self, rho: f64) -> f64 {
        -self.c2 * self.shape_factor(rho) / (rho * rho)
    }

    /// Imaginary-order parameter nu^2 = 2 m C2 - 1/4 (negative when the
    /// tail is too weak to bind).
    pub fn nu_squared(&self) -> f64 {
        2.0 * self.m_scaled * self.c2 - 0.25
    }
}

/// Fits rho^2 (eps_entrance - threshold) = -c2 - c3/rho on the given radii
/// by least squares.
pub fn fit_entrance_tail(solver: &SurfaceSolver, radii: &[f64], n_keep: usize) -> Result<(f64, f64)> {
    if radii.len() < 2 {
        return Err(Error::InvalidInput("tail fit needs at least two radii".into()));
    }
    let th = solver.model.masses.pmu_level(1);
    let mut rows = Vec::new();
    for &rho in radii {
        let b = solver.solve(rho, n_keep)?;
        let i = label_states(&b.pmu_weight)
            .iter()
            .position(|l| *l == ChannelLabel { arrangement: Arrangement::Pmu, n: 1 })
            .ok_or(Error::ChannelMismatch { expected: 1, got: 0 })?;
        rows.push((1.0 / rho, rho * rho * (b.energies[i] - th)));
    }
    // y = a + b x with a = -c2, b = -c3
    let n = rows.len() as f64;
    let sx: f64 = rows.iter().map(|r| r.0).sum();
    let sy: f64 = rows.iter().map(|r| r.1).sum();
    let sxx: f64 = rows.iter().map(|r| r.0 * r.0).sum();
    let sxy: f64 = rows.iter().map(|r| r.0 * r.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let icpt = (sy - slope * sx) / n;
    Ok((-icpt, -slope))
}

/// Integrates u'' = (2M V(r) - k^2) u for two solutions from `from` down
/// to `to` with classical RK4, about `steps_per_radian` steps per radian of
/// local phase.
fn rk4_inward(
    two_mass: f64,
    potential: &dyn Fn(f64) -> f64,
    k: f64,
    from: f64,
    to: f64,
    y: [f64; 4],
    steps_per_radian: f64,
) -> [f64; 4] {
    let q2 = |r: f64| k * k - two_mass * potential(r);
    let rhs = |r: f64, y: [f64; 4]| {
        let w = -q2(r);
        [y[1], w * y[0], y[3], w * y[2]]
    };
    let mut r = from;
    let mut y = y;
    while r > to {
        let q = q2(r).abs().sqrt().max(k);
        let h = -(1.0 / (q * steps_per_radian)).min(r - to);
        let k1 = rhs(r, y);
        let at = |s: f64, d: [f64; 4]| [y[0] + s * d[0], y[1] + s * d[1], y[2] + s * d[2], y[3] + s * d[3]];
        let k2 = rhs(r + 0.5 * h, at(0.5 * h, k1));
        let k3 = rhs(r + 0.5 * h, at(0.5 * h, k2));
        let k4 = rhs(r + h, at(h, k3));
        for i in 0..4 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        r += h;
    }
    y
}

/// Real pair of u'' + (k^2 - 2M V(r)) u = 0 at `r`, anchored to WKB forms
/// at `r_far` and normalized to f' g - f g' = 1. With `langer` the anchor
/// uses the Langer-corrected wavenumber, needed when V falls off as 1/r^2.
pub fn inward_reference(
    two_mass: f64,
    potential: &dyn Fn(f64) -> f64,
    langer: bool,
    k: f64,
    r_far: f64,
    r: f64,
) -> Result<ReferenceFunctionPair> {
    inward_reference_with_density(two_mass, potential, langer, k, r_far, r, REFERENCE_STEPS_PER_RADIAN)
}

/// RK4 steps per radian of local phase used by `inward_reference`.
pub const REFERENCE_STEPS_PER_RADIAN: f64 = 200.0;

pub fn inward_reference_with_density(
    two_mass: f64,
    potential: &dyn Fn(f64) -> f64,
    langer: bool,
    k: f64,
    r_far: f64,
    r: f64,
    steps_per_radian: f64,
) -> Result<ReferenceFunctionPair> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!("closed channel (k = {k})")));
    }
    if !(r > 0.0 && r_far >= r) {
        return Err(Error::InvalidInput(format!("bad radii r = {r}, r_far = {r_far}")));
    }
    let q2 = |x: f64| k * k - two_mass * potential(x) - if langer { 0.25 / (x * x) } else { 0.0 };
    let q0 = q2(r_far);
    if !(q0 > 0.0) {
        return Err(Error::Domain(format!("anchor radius {r_far} is classically forbidden")));
    }
    let q = q0.sqrt();
    let dr = 1e-4 * r_far;
    let dq = (q2(r_far + dr).max(0.0).sqrt() - q2(r_far - dr).max(0.0).sqrt()) / (2.0 * dr);
    let (s, c) = (k * r_far).sin_cos();
    let amp = q.sqrt().recip();
    let corr = dq / (2.0 * q);
    let (f, g) = (amp * s, amp * c);
    let y0 = [f, q.sqrt() * c - corr * f, g, -q.sqrt() * s - corr * g];
    let y = if r_far > r { rk4_inward(two_mass, potential, k, r_far, r, y0, steps_per_radian) } else { y0 };
    let mut pair = ReferenceFunctionPair { radius: r, f: y[0], fp: y[1], g: y[2], gp: y[3] };
    let w = pair.wronskian();
    pair.g /= w;
    pair.gp /= w;
    Ok(pair)
}

/// Smallest radius >= `start` beyond which |V| < `eps`, scanning outward.
pub fn negligible_radius(potential: &dyn Fn(f64) -> f64, start: f64, eps: f64) -> f64 {
    let mut r = start;
    while potential(r).abs() >= eps && r < 1e9 {
        r *= 1.1;
    }
    r
}

/// Radius beyond which the entrance reference is anchored to WKB (or free)
/// forms.
pub fn anchor_radius(tail: &EntranceTail, k: f64, rho_end: f64) -> f64 {
    match tail.shape {
        TailShape::InverseSquare => {
            let nu = tail.nu_squared().abs().sqrt();
            rho_end.max(100.0 * (nu + 1.0) / k)
        }
        TailShape::ScreenedField { .. } => negligible_radius(&|r| tail.potential(r), rho_end, 1e-12),
    }
}

/// Entrance-channel reference pair at `rho` for wavenumber k (mass-scaled).
pub fn entrance_reference(tail: &EntranceTail, k: f64, rho: f64) -> Result<ReferenceFunctionPair> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!("entrance channel closed (k = {k})")));
    }
    let langer = matches!(tail.shape, TailShape::InverseSquare);
    inward_reference(2.0 * tail.m_scaled, &|r| tail.potential(r), langer, k, anchor_radius(tail, k, rho), rho)
}

/// Per-energy scattering output.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringResult {
    pub table: ChannelTable,
    /// Open channels (indices into the table) in S-matrix order.
    pub open: Vec<usize>,
    pub k_matrix: DMatrix<f64>,
    pub s_matrix: DMatrix<Complex64>,
    /// |S_{entrance, c}|^2 for every channel of the table (0 if closed).
    pub probabilities: Vec<f64>,
    pub unitarity_defect: f64,
    /// max |S - S^T|.
    pub symmetry_defect: f64,
    /// max |K - K^T| relative to max(|K|, 1); tracks the Wronskian error
    /// of the propagated solution.
    pub k_asymmetry: f64,
    pub matching_residual: f64,
}

impl ScatteringResult {
    /// Probability into the (mu O) channel with principal number n.
    pub fn muo(&self, n: u32) -> f64 {
        self.table
            .find(ChannelLabel { arrangement: Arrangement::Muo, n })
            .map(|i| self.probabilities[i])
            .unwrap_or(0.0)
    }

    /// Total transfer probability.
    pub fn total_transfer(&self) -> f64 {
        self.table
            .channels
            .iter()
            .zip(&self.probabilities)
            .filter(|(c, _)| c.label.arrangement == Arrangement::Muo)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Matches the propagated solution to the channel references and extracts
/// K, S and the transfer probabilities.
pub fn match_and_extract(
    state: &PropagationState,
    table: &ChannelTable,
    refs: &[Option<ReferenceFunctionPair>],
    m_scaled: f64,
) -> Result<ScatteringResult> {
    let n = table.channels.len();
    if state.f.nrows() != n || refs.len() != n {
        return Err(Error::ChannelMismatch { expected: n, got: state.f.nrows().min(refs.len()) });
    }
    let open: Vec<usize> = (0..n).filter(|&i| refs[i].is_some()).collect();
    let no = open.len();
    if no == 0 || refs[table.entrance].is_none() {
        return Err(Error::Matching { residual: f64::NAN });
    }
    // [F  -G] [C]   [Fr]
    // [F' -G'] [X] = [Fr']
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&state.f);
    a.view_mut((n, 0), (n, n)).copy_from(&state.fp);
    let mut rhs = DMatrix::zeros(2 * n, no);
    for i in 0..n {
        match &refs[i] {
            Some(p) => {
                a[(i, n + i)] = -p.g;
                a[(n + i, n + i)] = -p.gp;
                let col = open.iter().position(|&o| o == i).expect("open");
                rhs[(i, col)] = p.f;
                rhs[(n + i, col)] = p.fp;
            }
            None => {
                let kappa = (2.0 * m_scaled * (table.channels[i].local_energy - table.total_energy)).max(0.0).sqrt();
                // decaying solution exp(-kappa (r - rho)) at r = rho
                a[(i, n + i)] = -1.0;
                a[(n + i, n + i)] = kappa;
            }
        }
    }
    let scale = a.amax();
    let lu = a.clone().lu();
    let x = lu.solve(&rhs).ok_or(Error::Matching { residual: f64::INFINITY })?;
    let residual = (&a * &x - &rhs).amax() / (scale * x.amax()).max(f64::MIN_POSITIVE);
    if !residual.is_finite() || residual > 1e-6 {
        return Err(Error::Matching { residual });
    }
    let mut k = DMatrix::zeros(no, no);
    for (r, &i) in open.iter().enumerate() {
        for c in 0..no {
            k[(r, c)] = x[(n + i, c)];
        }
    }
    let k_asymmetry = (&k - k.transpose()).amax() / k.amax().max(1.0);
    let id = DMatrix::<Complex64>::identity(no, no);
    let ik = k.map(|v| Complex64::new(0.0, v));
    let denom = (&id - &ik).try_inverse().ok_or(Error::Matching { residual: f64::INFINITY })?;
    let s = (&id + &ik) * denom;
    let unitarity_defect = (s.adjoint() * &s - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let ent = open.iter().position(|&o| o == table.entrance).expect("entrance open");
    let mut probabilities = vec![0.0; n];
    for (c, &i) in open.iter().enumerate() {
        probabilities[i] = s[(ent, c)].norm_sqr();
    }
    let s_sym = (&s - s.transpose()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(ScatteringResult {
        table: table.clone(),
        open,
        k_matrix: k,
        s_matrix: s,
        probabilities,
        unitarity_defect,
        symmetry_defect: s_sym,
        k_asymmetry,
        matching_residual: residual,
    })
}

/// Reference pairs for all channels of a table at `rho`: the entrance tail
/// pair, plane waves for other open channels, None for closed ones.
/// Channels that are open but still locally closed at `rho` are treated as
/// closed.
pub fn reference_set(table: &ChannelTable, tail: &EntranceTail, rho: f64) -> Result<Vec<Option<ReferenceFunctionPair>>> {
    let m = tail.m_scaled;
    table
        .channels
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if !c.open {
                return Ok(None);
            }
            if i == table.entrance {
                let k = (2.0 * m * (table.total_energy - c.threshold)).sqrt();
                return entrance_reference(tail, k, rho).map(Some);
            }
            if table.total_energy <= c.local_energy {
                return Ok(None);
            }
            product_reference(table, i, m, rho).map(Some)
        })
        .collect()
}

/// de Broglie wavelength (Angstrom) of the entrance relative motion.
pub fn de_broglie_angstrom(energy_ev: f64, masses: &MassSet) -> f64 {
    let k = (2.0 * masses.m_o_pmu * ev_to_hartree(energy_ev)).sqrt();
    std::f64::consts::TAU / k * crate::constants::BOHR_CM * 1e8
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tail(c2: f64) -> EntranceTail {
        EntranceTail { c2, c3: 0.0, shape: TailShape::InverseSquare, m_scaled: MassSet::default().m_scaled }
    }

    #[test]
    fn free_limit_is_plane_wave_up_to_rotation() {
        let t = tail(0.0);
        let k = 0.7;
        let p = entrance_reference(&t, k, 30.0).unwrap();
        assert_relative_eq!(p.wronskian(), 1.0, max_relative = 1e-12);
        // amplitude sqrt(f^2 + g^2) -> 1/sqrt(k) at large k r
        let amp = (p.f * p.f + p.g * p.g).sqrt();
        assert_relative_eq!(amp, k.powf(-0.5), max_relative = 1e-3);
    }

    #[test]
    fn exothermicities() {
        let m = MassSet::default();
        let e6 = hartree_to_ev(m.pmu_level(1) - m.muo_level(8.0, 6));
        let e5 = hartree_to_ev(m.pmu_level(1) - m.muo_level(8.0, 5));
        assert_relative_eq!(e6, 2437.570, max_relative = 1e-6);
        assert_relative_eq!(e5, 4622.638, max_relative = 1e-6);
    }

    #[test]
    fn de_broglie_at_tenth_of_ev() {
        assert_relative_eq!(de_broglie_angstrom(0.1, &MassSet::default()), 0.8876, max_relative = 1e-3);
    }

    #[test]
    fn plane_wave_wronskian_and_closed_error() {
        let p = plane_wave_pair(3.3, 12.0).unwrap();
        assert_relative_eq!(p.wronskian(), 1.0, max_relative = 1e-14);
        assert!(plane_wave_pair(0.0, 1.0).is_err());
    }
}
