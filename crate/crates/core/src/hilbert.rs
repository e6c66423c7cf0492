//! Truncated Fock spaces, two-atom spaces and the elementary states and
//! operators built on them.
//!
//! Every composite space uses the ordering atom A ⊗ atom B ⊗ field. Atomic
//! levels are indexed `g = 0, e = 1` for two-level atoms and `g = 0, i = 1,
//! e = 2` for three-level atoms.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance for the normalization and flag invariants.
pub const INVARIANT_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// `e^{i x}`.
#[inline]
pub fn cis(x: f64) -> C64 {
    C64::from_polar(1.0, x)
}

/// Atomic level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    G,
    I,
    E,
}

impl Level {
    /// Basis index of the level for atoms with `levels` levels (2 or 3).
    pub fn index(self, levels: usize) -> Result<usize> {
        match (self, levels) {
            (Level::G, 2 | 3) => Ok(0),
            (Level::E, 2) => Ok(1),
            (Level::I, 3) => Ok(1),
            (Level::E, 3) => Ok(2),
            (Level::I, 2) => Err(Error::InvalidLevel { level: "i", levels }),
            (_, l) => Err(Error::InvalidParameter(format!("{l} levels per atom (expected 2 or 3)"))),
        }
    }
}

/// One tensor factor of a composite space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Factor {
    Atom { levels: usize },
    Mode { dim: usize },
}

impl Factor {
    pub fn dim(&self) -> usize {
        match *self {
            Factor::Atom { levels } => levels,
            Factor::Mode { dim } => dim,
        }
    }
}

/// Descriptor of a tensor-product space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Space {
    factors: Vec<Factor>,
}

impl Space {
    pub fn new(factors: Vec<Factor>) -> Self {
        Space { factors }
    }

    pub fn atom(levels: usize) -> Self {
        Space::new(vec![Factor::Atom { levels }])
    }

    pub fn two_atoms(levels: usize) -> Self {
        Space::new(vec![Factor::Atom { levels }, Factor::Atom { levels }])
    }

    pub fn mode(cutoff: FockCutoff) -> Self {
        Space::new(vec![Factor::Mode { dim: cutoff.dim() }])
    }

    /// atom A ⊗ atom B ⊗ field.
    pub fn atoms_and_mode(levels: usize, cutoff: FockCutoff) -> Self {
        Space::two_atoms(levels).concat(&Space::mode(cutoff))
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(Factor::dim).product()
    }

    pub fn concat(&self, other: &Space) -> Space {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        Space { factors }
    }

    /// Dimension of the field mode, when the last factor is a mode.
    pub fn mode_dim(&self) -> Option<usize> {
        match self.factors.last() {
            Some(Factor::Mode { dim }) => Some(*dim),
            _ => None,
        }
    }

    pub(crate) fn check_same(&self, other: &Space) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(format!("{self} vs {other}")))
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|x| match x {
                Factor::Atom { levels } => format!("atom[{levels}]"),
                Factor::Mode { dim } => format!("mode[{dim}]"),
            })
            .collect();
        write!(f, "{}", parts.join(" x "))
    }
}

/// Truncation of the Fock space to photon numbers `0..=n_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FockCutoff {
    n_max: usize,
}

impl FockCutoff {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidParameter("Fock cutoff requires n_max >= 1".into()));
        }
        Ok(FockCutoff { n_max })
    }

    /// Default cutoff for a coherent field with mean photon number `nbar`:
    /// `n_max = ⌈n̄ + 8√n̄⌉ + 4`. The extra four photons cover the
    /// `|ee, n−4⟩ ↔ |gg, n⟩` coupling range.
    pub fn for_mean_photon(nbar: f64) -> Self {
        let nbar = nbar.max(0.0);
        let n_max = (nbar + 8.0 * nbar.sqrt()).ceil() as usize + 4;
        FockCutoff { n_max }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }
}

/// Normalized pure state together with its tensor structure.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<C64>,
    space: Space,
}

impl StateVector {
    /// Wraps an already normalized amplitude vector.
    pub fn new(amplitudes: DVector<C64>, space: Space) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: amplitudes.len() });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(StateVector { amplitudes, space })
    }

    /// Normalizes `amplitudes` before wrapping them.
    pub fn normalized(amplitudes: DVector<C64>, space: Space) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: amplitudes.len() });
        }
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(StateVector { amplitudes: amplitudes.unscale(norm), space })
    }

    /// Computational basis vector `index`.
    pub fn basis(index: usize, space: Space) -> Result<Self> {
        let dim = space.dim();
        if index >= dim {
            return Err(Error::DimensionMismatch { expected: dim, got: index });
        }
        let mut v = DVector::zeros(dim);
        v[index] = ONE;
        Ok(StateVector { amplitudes: v, space })
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.space.check_same(&other.space)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `⟨self|op|self⟩`.
    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        self.space.check_same(&op.space)?;
        Ok(self.amplitudes.dotc(&(&op.matrix * &self.amplitudes)))
    }
}

static NEXT_OPERATOR_ID: AtomicU64 = AtomicU64::new(1);

/// Dense operator on a tensor-product space.
///
/// The Hermitian flag is determined on construction; the unitary flag is
/// only set by [`Operator::new_unitary`], which verifies it. Each operator
/// carries a process-unique id used to key cached eigendecompositions.
#[derive(Debug)]
pub struct Operator {
    matrix: DMatrix<C64>,
    space: Space,
    hermitian: bool,
    unitary: bool,
    id: u64,
}

impl Clone for Operator {
    fn clone(&self) -> Self {
        // Identical content: sharing the id keeps the cache valid.
        Operator {
            matrix: self.matrix.clone(),
            space: self.space.clone(),
            hermitian: self.hermitian,
            unitary: self.unitary,
            id: self.id,
        }
    }
}

impl PartialEq for Operator {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.matrix == other.matrix
    }
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

impl Operator {
    pub fn new(matrix: DMatrix<C64>, space: Space) -> Result<Self> {
        let dim = space.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: matrix.nrows().max(matrix.ncols()) });
        }
        let hermitian = hermitian_deviation(&matrix) <= INVARIANT_TOL;
        Ok(Operator { matrix, space, hermitian, unitary: false, id: NEXT_OPERATOR_ID.fetch_add(1, Ordering::Relaxed) })
    }

    /// Builds an operator and verifies `U U† = 1` within [`INVARIANT_TOL`].
    pub fn new_unitary(matrix: DMatrix<C64>, space: Space) -> Result<Self> {
        let mut op = Operator::new(matrix, space)?;
        let dev = unitary_deviation(&op.matrix);
        if dev > INVARIANT_TOL {
            return Err(Error::NotUnitary(dev));
        }
        op.unitary = true;
        Ok(op)
    }

    pub fn identity(space: Space) -> Self {
        let dim = space.dim();
        let mut op = Operator::new(DMatrix::identity(dim, dim), space).expect("identity has matching dimension");
        op.unitary = true;
        op
    }

    pub fn zeros(space: Space) -> Self {
        let dim = space.dim();
        Operator::new(DMatrix::zeros(dim, dim), space).expect("zero matrix has matching dimension")
    }

    /// Embeds a single-factor operator `local` acting on factor `factor` of
    /// `space`, with identities on every other factor.
    pub fn on_factor(local: &DMatrix<C64>, factor: usize, space: &Space) -> Result<Self> {
        let factors = space.factors();
        if factor >= factors.len() {
            return Err(Error::SpaceMismatch(format!("factor {factor} of {space}")));
        }
        let d = factors[factor].dim();
        if local.nrows() != d || local.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: local.nrows() });
        }
        let mut m = DMatrix::<C64>::identity(1, 1);
        for (k, f) in factors.iter().enumerate() {
            let piece = if k == factor { local.clone() } else { DMatrix::identity(f.dim(), f.dim()) };
            m = m.kronecker(&piece);
        }
        Operator::new(m, space.clone())
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn adjoint(&self) -> Operator {
        let mut op = Operator::new(self.matrix.adjoint(), self.space.clone()).expect("adjoint keeps dimension");
        op.unitary = self.unitary;
        op
    }

    /// Largest absolute matrix element.
    pub fn max_norm(&self) -> f64 {
        max_abs(&self.matrix)
    }

    /// `self · other`.
    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        self.space.check_same(&other.space)?;
        let mut op = Operator::new(&self.matrix * &other.matrix, self.space.clone())?;
        op.unitary = self.unitary && other.unitary;
        Ok(op)
    }

    /// Unnormalized `self |psi⟩`.
    pub fn apply(&self, psi: &StateVector) -> Result<DVector<C64>> {
        self.space.check_same(&psi.space)?;
        Ok(&self.matrix * &psi.amplitudes)
    }

    pub fn scale(&self, factor: C64) -> Operator {
        Operator::new(&self.matrix * factor, self.space.clone()).expect("scaling keeps dimension")
    }
}

/// `[a, b] = ab − ba`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    a.space.check_same(&b.space)?;
    Operator::new(&a.matrix * &b.matrix - &b.matrix * &a.matrix, a.space.clone())
}

pub(crate) fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for j in 0..n {
        for i in j..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub(crate) fn unitary_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    max_abs(&(m * m.adjoint() - DMatrix::<C64>::identity(n, n)))
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "adding operators on different spaces");
        Operator::new(&self.matrix + &rhs.matrix, self.space.clone()).expect("same dimension")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "subtracting operators on different spaces");
        Operator::new(&self.matrix - &rhs.matrix, self.space.clone()).expect("same dimension")
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.compose(rhs).expect("multiplying operators on different spaces")
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(C64::new(rhs, 0.0))
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        self.scale(rhs)
    }
}

/// Kronecker product of two objects of the same kind; the space tags are
/// concatenated in argument order.
pub trait Tensor<Rhs = Self> {
    type Output;
    fn tensor(&self, rhs: &Rhs) -> Self::Output;
}

impl Tensor for StateVector {
    type Output = StateVector;
    fn tensor(&self, rhs: &StateVector) -> StateVector {
        let amps = self.amplitudes.kronecker(&rhs.amplitudes);
        StateVector { amplitudes: amps, space: self.space.concat(&rhs.space) }
    }
}

impl Tensor for Operator {
    type Output = Operator;
    fn tensor(&self, rhs: &Operator) -> Operator {
        let mut op = Operator::new(self.matrix.kronecker(&rhs.matrix), self.space.concat(&rhs.space))
            .expect("kronecker product matches concatenated space");
        op.unitary = self.unitary && rhs.unitary;
        op
    }
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> T::Output {
    a.tensor(b)
}

/// Annihilation operator `a` with `⟨n−1|a|n⟩ = √n`.
pub fn annihilation_op(cutoff: FockCutoff) -> Operator {
    let dim = cutoff.dim();
    let mut m = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Operator::new(m, Space::mode(cutoff)).expect("square matrix of cutoff dimension")
}

/// Creation operator `a†`.
pub fn creation_op(cutoff: FockCutoff) -> Operator {
    annihilation_op(cutoff).adjoint()
}

/// Photon number operator `a†a`.
pub fn number_op(cutoff: FockCutoff) -> Operator {
    let dim = cutoff.dim();
    let diag = DVector::from_iterator(dim, (0..dim).map(|n| C64::new(n as f64, 0.0)));
    Operator::new(DMatrix::from_diagonal(&diag), Space::mode(cutoff)).expect("diagonal of cutoff dimension")
}

/// Photon-number parity `(−1)^{a†a}`.
pub fn parity_op(cutoff: FockCutoff) -> Operator {
    let dim = cutoff.dim();
    let diag = DVector::from_iterator(dim, (0..dim).map(|n| if n % 2 == 0 { ONE } else { -ONE }));
    let mut op = Operator::new(DMatrix::from_diagonal(&diag), Space::mode(cutoff)).expect("diagonal");
    op.unitary = true;
    op
}

/// `|μ⟩⟨ν|` on a single atom.
pub fn atomic_transition(mu: Level, nu: Level, levels: usize) -> Result<DMatrix<C64>> {
    let (i, j) = (mu.index(levels)?, nu.index(levels)?);
    let mut m = DMatrix::zeros(levels, levels);
    m[(i, j)] = ONE;
    Ok(m)
}

/// Collective operator `S_μν = |μ⟩⟨ν|_A + |μ⟩⟨ν|_B` on the two-atom space.
pub fn collective_op(mu: Level, nu: Level, levels: usize) -> Result<Operator> {
    let local = atomic_transition(mu, nu, levels)?;
    let space = Space::two_atoms(levels);
    let a = Operator::on_factor(&local, 0, &space)?;
    let b = Operator::on_factor(&local, 1, &space)?;
    Ok(&a + &b)
}

/// Photon-number amplitudes `p_n = e^{−|α|²/2} α^n/√(n!)` for `n ≤ n_max`
/// together with the norm missing beyond the cutoff.
pub fn coherent_amplitudes(alpha: C64, n_max: usize) -> (Vec<C64>, f64) {
    let r = alpha.norm();
    if r == 0.0 {
        let mut p = vec![ZERO; n_max + 1];
        p[0] = ONE;
        return (p, 0.0);
    }
    let theta = alpha.arg();
    let ln_r = r.ln();
    // log-magnitude recurrence avoids overflow of α^n and n!
    let mut log_mag = -0.5 * r * r;
    let mut p = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            log_mag += ln_r - 0.5 * (n as f64).ln();
        }
        p.push(C64::from_polar(log_mag.exp(), n as f64 * theta));
    }
    let mut missing = 0.0;
    let mut n = n_max;
    loop {
        n += 1;
        log_mag += ln_r - 0.5 * (n as f64).ln();
        let term = (2.0 * log_mag).exp();
        missing += term;
        if (n as f64) > r * r && (term == 0.0 || term < 1e-20 * missing) {
            break;
        }
    }
    (p, missing)
}

/// Largest norm deficit tolerated when truncating a coherent state.
pub const COHERENT_TRUNCATION_TOL: f64 = 1e-10;

/// Coherent state `|α⟩`, truncated and renormalized.
pub fn coherent_state(alpha: C64, cutoff: FockCutoff) -> Result<StateVector> {
    let (p, missing) = coherent_amplitudes(alpha, cutoff.n_max());
    if missing > COHERENT_TRUNCATION_TOL {
        return Err(Error::CutoffTooSmall { n_max: cutoff.n_max(), alpha_abs: alpha.norm(), missing });
    }
    StateVector::normalized(DVector::from_vec(p), Space::mode(cutoff))
}

/// Photon-number parity of a cat state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

/// Cat state `(|α⟩ ± |−α⟩)/N` with `N` computed from the truncated vectors.
pub fn cat_state(alpha: C64, parity: Parity, cutoff: FockCutoff) -> Result<StateVector> {
    let (p, missing) = coherent_amplitudes(alpha, cutoff.n_max());
    if missing > COHERENT_TRUNCATION_TOL {
        return Err(Error::CutoffTooSmall { n_max: cutoff.n_max(), alpha_abs: alpha.norm(), missing });
    }
    // p_n(−α) = (−1)^n p_n(α)
    let amps = DVector::from_iterator(
        p.len(),
        p.iter().enumerate().map(|(n, &z)| {
            let odd = n % 2 == 1;
            match parity {
                Parity::Even if odd => ZERO,
                Parity::Odd if !odd => ZERO,
                _ => 2.0 * z,
            }
        }),
    );
    StateVector::normalized(amps, Space::mode(cutoff))
}

/// The four maximally entangled two-atom states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BellKind {
    PsiPlus,
    PsiMinus,
    PhiPlus,
    PhiMinus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [BellKind::PsiMinus, BellKind::PsiPlus, BellKind::PhiMinus, BellKind::PhiPlus];

    pub fn label(&self) -> &'static str {
        match self {
            BellKind::PsiPlus => "Psi+",
            BellKind::PsiMinus => "Psi-",
            BellKind::PhiPlus => "Phi+",
            BellKind::PhiMinus => "Phi-",
        }
    }
}

impl fmt::Display for BellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bell vector in the computational basis `(gg, ge, eg, ee)`:
/// `|Ψ±⟩ = (|ge⟩ ± |eg⟩)/√2`, `|Φ_φ±⟩ = (e^{−iφ}|gg⟩ ± e^{iφ}|ee⟩)/√2`.
pub fn bell_vector(kind: BellKind, phi: f64) -> Vector4<C64> {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    match kind {
        BellKind::PsiPlus => Vector4::new(ZERO, h, h, ZERO),
        BellKind::PsiMinus => Vector4::new(ZERO, h, -h, ZERO),
        BellKind::PhiPlus => Vector4::new(cis(-phi) * h, ZERO, ZERO, cis(phi) * h),
        BellKind::PhiMinus => Vector4::new(cis(-phi) * h, ZERO, ZERO, -cis(phi) * h),
    }
}

/// Bell state as a two-qubit [`StateVector`]. `phi` only affects `Φ±`.
pub fn bell_state(kind: BellKind, phi: f64) -> StateVector {
    let v = bell_vector(kind, phi);
    StateVector { amplitudes: DVector::from_iterator(4, v.iter().copied()), space: Space::two_atoms(2) }
}

/// Two-atom amplitudes in the basis `{|gg⟩, |Ψ−⟩, |Ψ+⟩, |ee⟩}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomCoeffs {
    pub c_g: C64,
    pub c_minus: C64,
    pub c_plus: C64,
    pub c_e: C64,
}

impl AtomCoeffs {
    pub fn new(c_g: C64, c_minus: C64, c_plus: C64, c_e: C64) -> Result<Self> {
        let c = AtomCoeffs { c_g, c_minus, c_plus, c_e };
        let norm = c.norm();
        if (norm - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(c)
    }

    /// Converts computational-basis amplitudes `(gg, ge, eg, ee)`,
    /// normalizing them.
    pub fn from_computational(v: &Vector4<C64>) -> Result<Self> {
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let v = v.unscale(norm);
        let h = FRAC_1_SQRT_2;
        Ok(AtomCoeffs { c_g: v[0], c_minus: (v[1] - v[2]) * h, c_plus: (v[1] + v[2]) * h, c_e: v[3] })
    }

    pub fn from_state(psi: &StateVector) -> Result<Self> {
        psi.space().check_same(&Space::two_atoms(2))?;
        let a = psi.amplitudes();
        AtomCoeffs::from_computational(&Vector4::new(a[0], a[1], a[2], a[3]))
    }

    /// Amplitudes `(gg, ge, eg, ee)`.
    pub fn to_computational(&self) -> Vector4<C64> {
        let h = FRAC_1_SQRT_2;
        Vector4::new(self.c_g, (self.c_plus + self.c_minus) * h, (self.c_plus - self.c_minus) * h, self.c_e)
    }

    pub fn to_state(&self) -> StateVector {
        let v = self.to_computational();
        StateVector { amplitudes: DVector::from_iterator(4, v.iter().copied()), space: Space::two_atoms(2) }
    }

    pub fn norm(&self) -> f64 {
        (self.c_g.norm_sqr() + self.c_minus.norm_sqr() + self.c_plus.norm_sqr() + self.c_e.norm_sqr()).sqrt()
    }

    /// `d_θ± = (c_g e^{iθ} ± c_e e^{−iθ})/√2`, the amplitude on `|Φ_θ±⟩`.
    pub fn d_plus(&self, theta: f64) -> C64 {
        (self.c_g * cis(theta) + self.c_e * cis(-theta)) * FRAC_1_SQRT_2
    }

    pub fn d_minus(&self, theta: f64) -> C64 {
        (self.c_g * cis(theta) - self.c_e * cis(-theta)) * FRAC_1_SQRT_2
    }
}
