//! Hamiltonians of the two-photon model and their validity conditions.
//!
//! The full model couples the intermediate level `i` of each atom to `g`
//! and `e` through the cavity mode; for a large detuning the intermediate
//! level is eliminated and the dynamics reduce to the two-photon exchange
//! `W = g(a² S_eg + a†² S_ge)` with `g = −g_g g_e / Δ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{annihilation_op, atomic_transition, FockCutoff, Level, Operator, Space, StateVector, C64, ONE, ZERO};

/// Margin used to read the `≪` inequalities as a factor-of-ten separation.
pub const VALIDITY_MARGIN: f64 = 0.1;

/// Parameters of the full three-level Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullModelParams {
    pub omega: f64,
    pub delta: f64,
    pub g_g: f64,
    pub g_e: f64,
    #[serde(skip, default = "default_cutoff")]
    pub cutoff: FockCutoff,
}

fn default_cutoff() -> FockCutoff {
    FockCutoff::for_mean_photon(0.0)
}

impl FullModelParams {
    pub fn new(omega: f64, delta: f64, g_g: f64, g_e: f64, cutoff: FockCutoff) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("detuning must be positive, got {delta}")));
        }
        if !(g_g > 0.0 && g_e > 0.0) {
            return Err(Error::InvalidParameter(format!("couplings must be positive, got g_g={g_g}, g_e={g_e}")));
        }
        if !omega.is_finite() {
            return Err(Error::InvalidParameter("omega must be finite".into()));
        }
        Ok(FullModelParams { omega, delta, g_g, g_e, cutoff })
    }

    /// Two-photon coupling `g = −g_g g_e / Δ`.
    pub fn effective_coupling(&self) -> f64 {
        -self.g_g * self.g_e / self.delta
    }

    pub fn effective(&self) -> EffectiveModelParams {
        EffectiveModelParams { g: self.effective_coupling(), cutoff: self.cutoff }
    }
}

/// Parameters of the effective two-photon Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveModelParams {
    pub g: f64,
    pub cutoff: FockCutoff,
}

impl EffectiveModelParams {
    pub fn new(g: f64, cutoff: FockCutoff) -> Result<Self> {
        if g == 0.0 || !g.is_finite() {
            return Err(Error::InvalidParameter(format!("two-photon coupling must be finite and nonzero, got {g}")));
        }
        Ok(EffectiveModelParams { g, cutoff })
    }
}

/// Outcome of the parameter-regime checks for the effective model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    /// Latest time for which the neglected higher-order terms stay small.
    pub time_horizon: f64,
    /// `|g_e² − g_g²| < g_e³/Δ`: the photon-dependent Stark shift is negligible.
    pub stark_closeness_ok: bool,
    /// `g_e n̄ π < margin · Δ`: the revival time lies inside the horizon.
    pub revival_reachable_ok: bool,
}

impl ValidityReport {
    pub fn all_ok(&self) -> bool {
        self.stark_closeness_ok && self.revival_reachable_ok
    }
}

/// Accumulates `coeff · atoms ⊗ field` into `acc`, skipping zero entries.
fn add_kron(acc: &mut DMatrix<C64>, coeff: C64, atoms: &DMatrix<C64>, field: &DMatrix<C64>) {
    let fd = field.nrows();
    let field_nz: Vec<(usize, usize, C64)> = (0..fd)
        .flat_map(|c| (0..fd).map(move |r| (r, c)))
        .filter_map(|(r, c)| {
            let z = field[(r, c)];
            (z != ZERO).then_some((r, c, z))
        })
        .collect();
    for ac in 0..atoms.ncols() {
        for ar in 0..atoms.nrows() {
            let za = atoms[(ar, ac)];
            if za == ZERO {
                continue;
            }
            let z = coeff * za;
            for &(r, c, zf) in &field_nz {
                acc[(ar * fd + r, ac * fd + c)] += z * zf;
            }
        }
    }
}

fn collective(mu: Level, nu: Level, levels: usize) -> DMatrix<C64> {
    crate::hilbert::collective_op(mu, nu, levels).expect("valid level for this atom").matrix().clone()
}

/// `|μ⟩⟨ν|` for atom A plus atom B as a matrix, used when an operator is
/// embedded in the atom ⊗ field space.
fn field_ops(cutoff: FockCutoff) -> (DMatrix<C64>, DMatrix<C64>, DMatrix<C64>) {
    let a = annihilation_op(cutoff).matrix().clone();
    let ad = a.adjoint();
    let id = DMatrix::identity(cutoff.dim(), cutoff.dim());
    (a, ad, id)
}

/// Full Hamiltonian
/// `H = ω a†a + 2ω S_ee + (ω+Δ) S_ii + g_g(a S_ig + a† S_gi) + g_e(a S_ei + a† S_ie)`
/// on (three-level atom)² ⊗ field.
pub fn full_hamiltonian(p: &FullModelParams) -> Operator {
    let cutoff = p.cutoff;
    let (a, ad, id_f) = field_ops(cutoff);
    let num = &ad * &a;
    let id_at = DMatrix::<C64>::identity(9, 9);
    let space = Space::atoms_and_mode(3, cutoff);
    let mut h = DMatrix::zeros(space.dim(), space.dim());
    let c = |x: f64| C64::new(x, 0.0);

    add_kron(&mut h, c(p.omega), &id_at, &num);
    add_kron(&mut h, c(2.0 * p.omega), &collective(Level::E, Level::E, 3), &id_f);
    add_kron(&mut h, c(p.omega + p.delta), &collective(Level::I, Level::I, 3), &id_f);
    add_kron(&mut h, c(p.g_g), &collective(Level::I, Level::G, 3), &a);
    add_kron(&mut h, c(p.g_g), &collective(Level::G, Level::I, 3), &ad);
    add_kron(&mut h, c(p.g_e), &collective(Level::E, Level::I, 3), &a);
    add_kron(&mut h, c(p.g_e), &collective(Level::I, Level::E, 3), &ad);
    Operator::new(h, space).expect("dimension matches space")
}

/// Two-photon interaction `W = g(a² S_eg + a†² S_ge)` on (two-level atom)² ⊗ field.
pub fn two_photon_w(p: &EffectiveModelParams) -> Operator {
    let cutoff = p.cutoff;
    let (a, ad, _) = field_ops(cutoff);
    let space = Space::atoms_and_mode(2, cutoff);
    let mut w = DMatrix::zeros(space.dim(), space.dim());
    let g = C64::new(p.g, 0.0);
    add_kron(&mut w, g, &collective(Level::E, Level::G, 2), &(&a * &a));
    add_kron(&mut w, g, &collective(Level::G, Level::E, 2), &(&ad * &ad));
    Operator::new(w, space).expect("dimension matches space")
}

/// Effective Hamiltonian `(ω + 2g) I + W`.
pub fn effective_hamiltonian(p: &EffectiveModelParams, omega: f64) -> Operator {
    let w = two_photon_w(p);
    let i = constant_of_motion(p.cutoff, 2).expect("two-level constant of motion");
    &w + &(&i * (omega + 2.0 * p.g))
}

/// Stark-shift contribution
/// `S = −2(g_g²/Δ) I − ((g_e² − g_g²)/Δ) a a† S_ee + 3(g_g²/Δ) S_ee`
/// on (two-level atom)² ⊗ field.
pub fn stark_shift(p: &FullModelParams) -> Operator {
    let cutoff = p.cutoff;
    let (a, ad, id_f) = field_ops(cutoff);
    let space = Space::atoms_and_mode(2, cutoff);
    let mut s = DMatrix::zeros(space.dim(), space.dim());
    let gg2 = p.g_g * p.g_g / p.delta;
    let diff = (p.g_e * p.g_e - p.g_g * p.g_g) / p.delta;
    let see = collective(Level::E, Level::E, 2);
    add_kron(&mut s, C64::new(-diff, 0.0), &see, &(&a * &ad));
    add_kron(&mut s, C64::new(3.0 * gg2, 0.0), &see, &id_f);
    let i = constant_of_motion(cutoff, 2).expect("two-level constant of motion");
    s += i.matrix() * C64::new(-2.0 * gg2, 0.0);
    Operator::new(s, space).expect("dimension matches space")
}

/// `ω I + S + W`, the effective Hamiltonian before the Stark shifts are
/// dropped.
pub fn stark_corrected_hamiltonian(p: &FullModelParams) -> Operator {
    let w = two_photon_w(&p.effective());
    let s = stark_shift(p);
    let i = constant_of_motion(p.cutoff, 2).expect("two-level constant of motion");
    &(&w + &s) + &(&i * p.omega)
}

/// Excitation number `I = a†a + 2 S_ee`; the three-level variant also
/// counts the intermediate level, `I = a†a + S_ii + 2 S_ee`, which makes it
/// commute exactly with the full Hamiltonian.
pub fn constant_of_motion(cutoff: FockCutoff, levels: usize) -> Result<Operator> {
    let (a, ad, id_f) = field_ops(cutoff);
    if levels != 2 && levels != 3 {
        return Err(Error::InvalidParameter(format!("{levels} levels per atom (expected 2 or 3)")));
    }
    let na = levels * levels;
    let space = Space::atoms_and_mode(levels, cutoff);
    let mut m = DMatrix::zeros(space.dim(), space.dim());
    add_kron(&mut m, ONE, &DMatrix::identity(na, na), &(&ad * &a));
    add_kron(&mut m, C64::new(2.0, 0.0), &collective(Level::E, Level::E, levels), &id_f);
    if levels == 3 {
        add_kron(&mut m, ONE, &collective(Level::I, Level::I, 3), &id_f);
    }
    Operator::new(m, space)
}

/// `g = −g_g g_e / Δ`.
pub fn effective_coupling(g_g: f64, g_e: f64, delta: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::InvalidParameter("detuning must be nonzero".into()));
    }
    Ok(-g_g * g_e / delta)
}

/// Effective two-phonon coupling of two ions driven on the second red
/// sideband, `g_eff = −Ω η² / 2`.
pub fn trapped_ion_coupling(rabi_freq: f64, lamb_dicke: f64) -> f64 {
    -rabi_freq * lamb_dicke * lamb_dicke / 2.0
}

pub fn validity_report(p: &FullModelParams, nbar: f64) -> Result<ValidityReport> {
    if !(nbar > 0.0) {
        return Err(Error::InvalidParameter(format!("mean photon number must be positive, got {nbar}")));
    }
    let ge3 = p.g_e.powi(3);
    Ok(ValidityReport {
        time_horizon: VALIDITY_MARGIN * p.delta * p.delta / (ge3 * nbar),
        stark_closeness_ok: (p.g_e * p.g_e - p.g_g * p.g_g).abs() < ge3 / p.delta,
        revival_reachable_ok: p.g_e * nbar * std::f64::consts::PI < VALIDITY_MARGIN * p.delta,
    })
}

/// Generator `G = (g_g/Δ) a S_ig − (g_e/Δ) a S_ei − h.c.` of the small
/// rotation `e^{G} H e^{−G}` that decouples the intermediate level. `G` is
/// anti-Hermitian.
pub fn dispersive_generator(p: &FullModelParams) -> Operator {
    let cutoff = p.cutoff;
    let (a, ad, _) = field_ops(cutoff);
    let space = Space::atoms_and_mode(3, cutoff);
    let mut g = DMatrix::zeros(space.dim(), space.dim());
    let cg = C64::new(p.g_g / p.delta, 0.0);
    let ce = C64::new(p.g_e / p.delta, 0.0);
    add_kron(&mut g, cg, &collective(Level::I, Level::G, 3), &a);
    add_kron(&mut g, -ce, &collective(Level::E, Level::I, 3), &a);
    add_kron(&mut g, -cg, &collective(Level::G, Level::I, 3), &ad);
    add_kron(&mut g, ce, &collective(Level::I, Level::E, 3), &ad);
    Operator::new(g, space).expect("dimension matches space")
}

/// Indices of the three-level basis that correspond to the two-level basis
/// (`g → g`, `e → e`), in two-level order.
pub fn two_level_embedding(cutoff: FockCutoff) -> Vec<usize> {
    let fd = cutoff.dim();
    let lv = [Level::G, Level::E];
    let mut idx = Vec::with_capacity(4 * fd);
    for la in lv {
        for lb in lv {
            let ia = la.index(3).unwrap();
            let ib = lb.index(3).unwrap();
            for n in 0..fd {
                idx.push((ia * 3 + ib) * fd + n);
            }
        }
    }
    idx
}

/// Lifts a two-level ⊗ field state into the three-level ⊗ field space.
pub fn embed_two_level(psi: &StateVector, cutoff: FockCutoff) -> Result<StateVector> {
    psi.space().check_same(&Space::atoms_and_mode(2, cutoff))?;
    let space = Space::atoms_and_mode(3, cutoff);
    let mut v = DVector::zeros(space.dim());
    for (k, &i) in two_level_embedding(cutoff).iter().enumerate() {
        v[i] = psi.amplitudes()[k];
    }
    StateVector::new(v, space)
}

/// Projects a three-level ⊗ field vector onto the two-level ⊗ field space;
/// the intermediate-level amplitude is dropped, so the result is not
/// normalized in general.
pub fn restrict_to_two_level(v: &DVector<C64>, cutoff: FockCutoff) -> DVector<C64> {
    let idx = two_level_embedding(cutoff);
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Restricts an operator on the three-level space to the two-level block.
pub fn restrict_operator(m: &DMatrix<C64>, cutoff: FockCutoff) -> DMatrix<C64> {
    let idx = two_level_embedding(cutoff);
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

#[allow(dead_code)]
fn atomic(mu: Level, nu: Level, levels: usize) -> DMatrix<C64> {
    atomic_transition(mu, nu, levels).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{bell_state, commutator, coherent_state, tensor, BellKind};

    fn basis3(a: Level, b: Level, n: usize, cutoff: FockCutoff) -> usize {
        (a.index(3).unwrap() * 3 + b.index(3).unwrap()) * cutoff.dim() + n
    }

    fn params(cutoff: FockCutoff) -> FullModelParams {
        FullModelParams::new(1.3, 500.0, 1.0, 1.1, cutoff).unwrap()
    }

    #[test]
    fn full_hamiltonian_diagonal_entries() {
        let cutoff = FockCutoff::new(6).unwrap();
        let p = params(cutoff);
        let h = full_hamiltonian(&p);
        assert!(h.is_hermitian());
        assert_eq!(h.dim(), 9 * 7);
        let gg0 = basis3(Level::G, Level::G, 0, cutoff);
        let ii0 = basis3(Level::I, Level::I, 0, cutoff);
        assert!(h.matrix()[(gg0, gg0)].norm() < 1e-15);
        assert!((h.matrix()[(ii0, ii0)] - 2.0 * (p.omega + p.delta)).norm() < 1e-12);
        let dev = crate::hilbert::hermitian_deviation(h.matrix());
        assert!(dev < 1e-12);
    }

    #[test]
    fn w_matrix_elements() {
        let cutoff = FockCutoff::new(8).unwrap();
        let w = two_photon_w(&EffectiveModelParams::new(1.0, cutoff).unwrap());
        // ⟨Ψ+,2|W|gg,4⟩
        let gg4 = 4;
        let fd = cutoff.dim();
        let psi_plus_2 = (fd + 2, 2 * fd + 2);
        let amp = (w.matrix()[(psi_plus_2.0, gg4)] + w.matrix()[(psi_plus_2.1, gg4)]) / 2f64.sqrt();
        assert!((amp - 2f64.sqrt() * 12f64.sqrt()).norm() < 1e-12);
        // Ψ− ⊗ |n⟩ is annihilated for every n
        for n in 0..fd {
            let fock = crate::hilbert::StateVector::basis(n, Space::mode(cutoff)).unwrap();
            let psi = tensor(&bell_state(BellKind::PsiMinus, 0.0), &fock);
            assert!(w.apply(&psi).unwrap().norm() < 1e-12);
        }
        // |gg,0⟩ and |gg,1⟩ are stationary
        for n in 0..2 {
            let col = w.matrix().column(n);
            assert!(col.norm() < 1e-15);
        }
    }

    #[test]
    fn stark_shift_structure() {
        let cutoff = FockCutoff::new(10).unwrap();
        let equal = FullModelParams::new(0.0, 400.0, 1.2, 1.2, cutoff).unwrap();
        let s = stark_shift(&equal);
        assert!(s.is_hermitian());
        let gg2 = equal.g_g * equal.g_g / equal.delta;
        let see = constant_of_motion(cutoff, 2).unwrap();
        // g_e = g_g: S = −2(g_g²/Δ) I + 3(g_g²/Δ) S_ee, diagonal
        for n in 0..cutoff.dim() {
            assert!((s.matrix()[(n, n)] + 2.0 * gg2 * n as f64).norm() < 1e-12);
        }
        let diff = &s - &(&see * (-2.0 * gg2));
        let ee_block = 3 * cutoff.dim();
        for n in 0..cutoff.dim() {
            assert!((diff.matrix()[(ee_block + n, ee_block + n)] - 6.0 * gg2).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_of_motion_eigenvalues() {
        let cutoff = FockCutoff::new(9).unwrap();
        let i2 = constant_of_motion(cutoff, 2).unwrap();
        let fd = cutoff.dim();
        // |ee, n−4⟩ with n = 9
        let idx = 3 * fd + 5;
        assert!((i2.matrix()[(idx, idx)] - 9.0).norm() < 1e-12);
        assert!((i2.matrix()[(7, 7)] - 7.0).norm() < 1e-12);
        let w = two_photon_w(&EffectiveModelParams::new(0.7, cutoff).unwrap());
        assert!(commutator(&i2, &w).unwrap().max_norm() < 1e-12);
    }

    #[test]
    fn three_level_constant_commutes_with_full_hamiltonian() {
        let cutoff = FockCutoff::new(12).unwrap();
        let h = full_hamiltonian(&params(cutoff));
        let i3 = constant_of_motion(cutoff, 3).unwrap();
        assert!(commutator(&i3, &h).unwrap().max_norm() < 1e-10);
    }

    #[test]
    fn coupling_values() {
        assert!((effective_coupling(1.0, 1.0, 500.0).unwrap() + 0.002).abs() < 1e-15);
        assert!(effective_coupling(0.3, 0.7, 10.0).unwrap() < 0.0);
        assert_eq!(effective_coupling(0.3, 0.7, 10.0), effective_coupling(0.7, 0.3, 10.0));
        assert!(effective_coupling(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn trapped_ion_mapping() {
        let g = trapped_ion_coupling(2.0 * std::f64::consts::PI * 1e3, 1e-2);
        assert!((g.abs() - std::f64::consts::PI * 0.1).abs() < 1e-12);
        assert_eq!(trapped_ion_coupling(1e3, 0.0), 0.0);
        // |g_eff| ~ 10² Hz gives a protocol time of order 10 ms
        let t = std::f64::consts::PI / (2.0 * 100.0);
        assert!(t > 5e-3 && t < 2e-2);
    }

    #[test]
    fn validity_examples() {
        let cutoff = FockCutoff::new(4).unwrap();
        let p = FullModelParams::new(0.0, 500.0, 1.0, 1.0, cutoff).unwrap();
        let r = validity_report(&p, 50.0).unwrap();
        assert!(r.stark_closeness_ok);
        assert!(!r.revival_reachable_ok);
        let r2 = validity_report(&p, 100.0).unwrap();
        assert!((r.time_horizon / r2.time_horizon - 2.0).abs() < 1e-12);
        assert!(validity_report(&p, 0.0).is_err());
        let wide = FullModelParams::new(0.0, 1e5, 1.0, 1.0, cutoff).unwrap();
        assert!(validity_report(&wide, 50.0).unwrap().revival_reachable_ok);
    }

    #[test]
    fn params_validation() {
        let c = FockCutoff::new(3).unwrap();
        assert!(FullModelParams::new(0.0, -1.0, 1.0, 1.0, c).is_err());
        assert!(FullModelParams::new(0.0, 1.0, 0.0, 1.0, c).is_err());
        assert!(EffectiveModelParams::new(0.0, c).is_err());
    }

    #[test]
    fn embedding_round_trip() {
        let cutoff = FockCutoff::for_mean_photon(4.0);
        let psi = tensor(&bell_state(BellKind::PhiPlus, 0.4), &coherent_state(C64::new(1.5, 0.5), cutoff).unwrap());
        let lifted = embed_two_level(&psi, cutoff).unwrap();
        let back = restrict_to_two_level(lifted.amplitudes(), cutoff);
        assert!((back - psi.amplitudes()).norm() < 1e-15);
    }

    #[test]
    fn generator_is_anti_hermitian() {
        let cutoff = FockCutoff::new(5).unwrap();
        let g = dispersive_generator(&params(cutoff));
        let sum = g.matrix() + g.matrix().adjoint();
        assert!(sum.iter().all(|z| z.norm() < 1e-15));
    }
}
