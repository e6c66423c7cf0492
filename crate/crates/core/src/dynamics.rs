//! Time evolution: exact propagation by eigendecomposition, the analytic
//! block solution of the two-photon model and its coherent-state limit.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SymmetricEigen, Vector3, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{
    bell_vector, cis, coherent_state, AtomCoeffs, BellKind, FockCutoff, Operator, Space, StateVector, C64, I, ONE,
    ZERO,
};

/// Eigendecomposition of one connected block of a Hermitian matrix.
#[derive(Debug)]
struct Block {
    indices: Vec<usize>,
    evals: DVector<f64>,
    evecs: DMatrix<C64>,
}

/// Reusable spectral decomposition of a Hermitian operator.
///
/// The matrix is split into the connected components of its sparsity
/// pattern before diagonalization, so operators with a conserved quantity
/// (the excitation number here) decompose into many small blocks.
#[derive(Debug)]
pub struct Propagator {
    dim: usize,
    space: Space,
    blocks: Vec<Block>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn components(m: &DMatrix<C64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    for c in 0..n {
        for r in (c + 1)..n {
            if m[(r, c)] != ZERO || m[(c, r)] != ZERO {
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

const CACHE_CAPACITY: usize = 64;

fn cache() -> &'static Mutex<HashMap<u64, Arc<Propagator>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<Propagator>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Propagator {
    pub fn new(h: &Operator) -> Result<Self> {
        if !h.is_hermitian() {
            return Err(Error::NotHermitian(crate::hilbert::hermitian_deviation(h.matrix())));
        }
        let m = h.matrix();
        let blocks = components(m)
            .into_par_iter()
            .map(|indices| {
                let k = indices.len();
                let sub = DMatrix::from_fn(k, k, |r, c| m[(indices[r], indices[c])]);
                let eig = SymmetricEigen::new(sub);
                Block { indices, evals: eig.eigenvalues, evecs: eig.eigenvectors }
            })
            .collect();
        Ok(Propagator { dim: m.nrows(), space: h.space().clone(), blocks })
    }

    /// Shared decomposition of `h`, computed once per operator id.
    pub fn cached(h: &Operator) -> Result<Arc<Self>> {
        if let Some(p) = cache().lock().expect("cache lock").get(&h.id()) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(Propagator::new(h)?);
        let mut guard = cache().lock().expect("cache lock");
        if guard.len() >= CACHE_CAPACITY {
            guard.clear();
        }
        guard.insert(h.id(), Arc::clone(&p));
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.blocks.iter().flat_map(|b| b.evals.iter().copied()).collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// `e^{−iht} v` for a raw amplitude vector.
    pub fn apply(&self, v: &DVector<C64>, t: f64) -> Result<DVector<C64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        let mut out = DVector::zeros(self.dim);
        for b in &self.blocks {
            let local = DVector::from_iterator(b.indices.len(), b.indices.iter().map(|&i| v[i]));
            let mut coef = b.evecs.ad_mul(&local);
            for (k, z) in coef.iter_mut().enumerate() {
                *z *= cis(-b.evals[k] * t);
            }
            let back = &b.evecs * coef;
            for (k, &i) in b.indices.iter().enumerate() {
                out[i] = back[k];
            }
        }
        Ok(out)
    }

    pub fn evolve(&self, psi0: &StateVector, t: f64) -> Result<StateVector> {
        psi0.space().check_same(&self.space)?;
        StateVector::new(self.apply(psi0.amplitudes(), t)?, self.space.clone())
    }

    /// Dense `e^{−iht}`.
    pub fn unitary(&self, t: f64) -> DMatrix<C64> {
        let mut u = DMatrix::zeros(self.dim, self.dim);
        for b in &self.blocks {
            let mut scaled = b.evecs.clone();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                col *= cis(-b.evals[k] * t);
            }
            let local = scaled * b.evecs.adjoint();
            for (c, &ic) in b.indices.iter().enumerate() {
                for (r, &ir) in b.indices.iter().enumerate() {
                    u[(ir, ic)] = local[(r, c)];
                }
            }
        }
        u
    }
}

/// `e^{−iht} ψ₀`.
pub fn evolve_exact(h: &Operator, psi0: &StateVector, t: f64) -> Result<StateVector> {
    Propagator::cached(h)?.evolve(psi0, t)
}

/// Evolves `psi0` to each time in `times`; results are returned in input order.
pub fn evolve_many(h: &Operator, psi0: &StateVector, times: &[f64]) -> Result<Vec<StateVector>> {
    let prop = Propagator::cached(h)?;
    times.par_iter().map(|&t| prop.evolve(psi0, t)).collect()
}

/// Multiplies every amplitude with excitation number `n = (photons) +
/// (number of excited atoms)·2` by `e^{−i rate·n·t}`; this is the
/// propagator of `rate·I` for the two-level constant of motion `I`.
pub fn excitation_phase(v: &DVector<C64>, cutoff: FockCutoff, rate: f64, t: f64) -> DVector<C64> {
    let fd = cutoff.dim();
    DVector::from_iterator(
        v.len(),
        v.iter().enumerate().map(|(k, &z)| {
            let atoms = k / fd;
            let excited = (atoms >> 1) + (atoms & 1);
            let n = (k % fd) + 2 * excited;
            z * cis(-rate * n as f64 * t)
        }),
    )
}

/// Block of the two-photon interaction at excitation number `n`, in the
/// ordered basis `{|gg,n⟩, |Ψ+,n−2⟩, |ee,n−4⟩}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockMatrix3 {
    pub n: usize,
    pub m: Matrix3<C64>,
}

fn check_block_n(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::BlockIndex { n, min });
    }
    Ok(())
}

/// `W_n`: couplings `g√2√(n²−n)` between `|gg,n⟩` and `|Ψ+,n−2⟩` and
/// `g√2√(n²−5n+6)` between `|Ψ+,n−2⟩` and `|ee,n−4⟩` (zero for `n = 2, 3`).
pub fn block_w_n(g: f64, n: usize) -> Result<BlockMatrix3> {
    check_block_n(n, 2)?;
    let nf = n as f64;
    let upper = g * SQRT_2 * (nf * (nf - 1.0)).sqrt();
    let lower = g * SQRT_2 * ((nf - 2.0) * (nf - 3.0)).max(0.0).sqrt();
    let (u, l) = (C64::new(upper, 0.0), C64::new(lower, 0.0));
    let m = Matrix3::new(ZERO, u, ZERO, u, ZERO, l, ZERO, l, ZERO);
    Ok(BlockMatrix3 { n, m })
}

/// `(0, −w_n, +w_n)` with `w_n = g√((2n−3)² + 3)`.
pub fn block_eigenvalues_exact(g: f64, n: usize) -> Result<[f64; 3]> {
    check_block_n(n, 4)?;
    let x = 2.0 * n as f64 - 3.0;
    let w = g * (x * x + 3.0).sqrt();
    Ok([0.0, -w, w])
}

/// `(0, −w̃_n, +w̃_n)` with `w̃_n = g(2n−3)`.
pub fn block_eigenvalues_approx(g: f64, n: usize) -> Result<[f64; 3]> {
    check_block_n(n, 2)?;
    let w = g * (2.0 * n as f64 - 3.0);
    Ok([0.0, -w, w])
}

/// `w̃_n = g(2n−3)`.
pub fn approx_frequency(g: f64, n: usize) -> f64 {
    g * (2.0 * n as f64 - 3.0)
}

/// The n-independent basis `Õ` whose columns approximate the eigenvectors
/// of `W_n` for eigenvalues `0, −w̃_n, +w̃_n`.
pub fn approx_eigenbasis() -> Matrix3<C64> {
    let h = FRAC_1_SQRT_2;
    Matrix3::new(h, 0.5, 0.5, 0.0, -h, h, -h, 0.5, 0.5).map(|x| C64::new(x, 0.0))
}

/// `Ũ_n(t) = Õ diag(1, e^{iw̃_n t}, e^{−iw̃_n t}) Õ†`, written out:
/// diagonal `cos²(x/2), cos x, cos²(x/2)`, corners `−sin²(x/2)` and every
/// entry touching `|Ψ+⟩` equal to `sin x/(i√2)`, with `x = w̃_n t`.
///
/// For `n = 2, 3` the `|ee,n−4⟩` state is absent and the block is the 2×2
/// propagator of the truncated generator `(w̃_n/√2)σ_x`; the third row and
/// column are then the identity.
pub fn block_propagator(g: f64, n: usize, t: f64) -> Result<BlockMatrix3> {
    check_block_n(n, 2)?;
    let x = approx_frequency(g, n) * t;
    let m = if n >= 4 {
        let c2 = C64::new((x / 2.0).cos().powi(2), 0.0);
        let s2 = C64::new(-(x / 2.0).sin().powi(2), 0.0);
        let sc = C64::new(0.0, -x.sin() * FRAC_1_SQRT_2);
        let c = C64::new(x.cos(), 0.0);
        Matrix3::new(c2, sc, s2, sc, c, sc, s2, sc, c2)
    } else {
        let y = x * FRAC_1_SQRT_2;
        let c = C64::new(y.cos(), 0.0);
        let s = C64::new(0.0, -y.sin());
        Matrix3::new(c, s, ZERO, s, c, ZERO, ZERO, ZERO, ONE)
    };
    Ok(BlockMatrix3 { n, m })
}

impl BlockMatrix3 {
    pub fn upper_left(&self) -> Matrix2<C64> {
        self.m.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

/// Amplitude-vector indices of `|gg,n⟩`, `|ge,n⟩`, `|eg,n⟩`, `|ee,n⟩`.
fn atom_index(atoms: usize, n: usize, fd: usize) -> usize {
    atoms * fd + n
}

/// Writes the block triple `(a, b, c)` on `|gg,n⟩, |Ψ+,n−2⟩, |ee,n−4⟩`.
fn scatter_block(v: &mut DVector<C64>, n: usize, fd: usize, abc: Vector3<C64>) {
    if n < fd {
        v[atom_index(0, n, fd)] += abc[0];
    }
    if n >= 2 && n - 2 < fd {
        let b = abc[1] * FRAC_1_SQRT_2;
        v[atom_index(1, n - 2, fd)] += b;
        v[atom_index(2, n - 2, fd)] += b;
    }
    if n >= 4 && n - 4 < fd {
        v[atom_index(3, n - 4, fd)] += abc[2];
    }
}

/// `c_−|Ψ−⟩|α⟩`, untouched by the interaction.
fn psi_minus_part(c_minus: C64, p: &[C64], fd: usize) -> DVector<C64> {
    let mut v = DVector::zeros(4 * fd);
    let b = bell_vector(BellKind::PsiMinus, 0.0);
    for (n, &pn) in p.iter().enumerate() {
        for atoms in 0..4 {
            v[atom_index(atoms, n, fd)] = b[atoms] * c_minus * pn;
        }
    }
    v
}

fn coherent_amps(alpha: C64, cutoff: FockCutoff) -> Result<Vec<C64>> {
    Ok(coherent_state(alpha, cutoff)?.into_amplitudes().iter().copied().collect())
}

fn amp(p: &[C64], n: isize) -> C64 {
    if n < 0 {
        ZERO
    } else {
        p.get(n as usize).copied().unwrap_or(ZERO)
    }
}

/// Closed-form solution of `e^{−iWt}(|ψ⟩|α⟩)` with the approximate block
/// frequencies `w̃_n = g(2n−3)` and exact coherent amplitudes `p_n`.
///
/// The stationary states `|gg,0⟩`, `|gg,1⟩` keep the amplitudes `c_g p_0`,
/// `c_g p_1`. Blocks that reach beyond the cutoff lose their `|gg,n⟩`
/// component; the result is renormalized.
pub fn analytic_state(c: &AtomCoeffs, alpha: C64, g: f64, t: f64, cutoff: FockCutoff) -> Result<StateVector> {
    let p = coherent_amps(alpha, cutoff)?;
    let fd = cutoff.dim();
    let mut v = psi_minus_part(c.c_minus, &p, fd);
    let h = FRAC_1_SQRT_2;
    for n in 0..(fd + 4) {
        let ni = n as isize;
        let a0 = amp(&p, ni) * c.c_g;
        let b0 = amp(&p, ni - 2) * c.c_plus;
        let c0 = amp(&p, ni - 4) * c.c_e;
        let x = approx_frequency(g, n) * t;
        let abc = match n {
            0 | 1 => Vector3::new(a0, ZERO, ZERO),
            2 | 3 => {
                let (s, co) = (x * h).sin_cos();
                Vector3::new(a0 * co - I * s * b0, b0 * co - I * s * a0, ZERO)
            }
            _ => {
                let (s, co) = x.sin_cos();
                let sum = a0 + c0;
                let diff = a0 - c0;
                let mix = -I * s * h * b0;
                Vector3::new(0.5 * (diff + co * sum) + mix, b0 * co - I * s * h * sum, 0.5 * (-diff + co * sum) + mix)
            }
        };
        let abc = if n >= fd { Vector3::new(ZERO, abc[1], abc[2]) } else { abc };
        scatter_block(&mut v, n, fd, abc);
    }
    StateVector::normalized(v, Space::atoms_and_mode(2, cutoff))
}

/// Same state as [`analytic_state`], assembled by applying
/// [`block_propagator`] to the initial triples `(p_n c_g, p_{n−2} c_+, p_{n−4} c_e)`.
pub fn blockwise_state(c: &AtomCoeffs, alpha: C64, g: f64, t: f64, cutoff: FockCutoff) -> Result<StateVector> {
    let p = coherent_amps(alpha, cutoff)?;
    let fd = cutoff.dim();
    let mut v = psi_minus_part(c.c_minus, &p, fd);
    for n in 0..(fd + 4) {
        let ni = n as isize;
        let init = Vector3::new(amp(&p, ni) * c.c_g, amp(&p, ni - 2) * c.c_plus, amp(&p, ni - 4) * c.c_e);
        let out = if n < 2 { init } else { block_propagator(g, n, t)?.m * init };
        let out = if n >= fd { Vector3::new(ZERO, out[1], out[2]) } else { out };
        scatter_block(&mut v, n, fd, out);
    }
    StateVector::normalized(v, Space::atoms_and_mode(2, cutoff))
}

/// One term `phase · |atoms⟩ ⊗ |alpha⟩` of the coherent-state expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch {
    /// Two-atom amplitudes `(gg, ge, eg, ee)`, not normalized.
    pub atoms: Vector4<C64>,
    pub alpha: C64,
    pub phase: C64,
}

/// Large-`n̄` approximation of the evolved state as three coherent branches
/// with labels `α`, `e^{−i2gt}α` and `e^{+i2gt}α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentBranchState {
    pub branch0: Branch,
    pub branch_minus: Branch,
    pub branch_plus: Branch,
}

/// Mean photon number below which the coherent-branch expansion is
/// considered unreliable.
pub const COHERENT_BRANCH_MIN_NBAR: f64 = 10.0;

/// Builds the coherent-branch form. With `φ = arg α` and `d± = d_{2φ}±`:
///
/// * branch 0: `(c_−|Ψ−⟩ + d−|Φ_{2φ}−⟩)|α⟩`
/// * branch ∓: `e^{∓igt} (c_+ ± d+)/2 (|Ψ+⟩ ± |Φ_{2φ∓4gt}+⟩)|e^{∓i2gt}α⟩`
pub fn coherent_branch_state(c: &AtomCoeffs, alpha: C64, g: f64, t: f64) -> CoherentBranchState {
    let phi = alpha.arg();
    let d_plus = c.d_plus(2.0 * phi);
    let d_minus = c.d_minus(2.0 * phi);
    let psi_m = bell_vector(BellKind::PsiMinus, 0.0);
    let psi_p = bell_vector(BellKind::PsiPlus, 0.0);
    let gt = g * t;
    let branch0 = Branch {
        atoms: psi_m * c.c_minus + bell_vector(BellKind::PhiMinus, 2.0 * phi) * d_minus,
        alpha,
        phase: ONE,
    };
    let branch_minus = Branch {
        atoms: (psi_p + bell_vector(BellKind::PhiPlus, 2.0 * phi - 4.0 * gt)) * ((c.c_plus + d_plus) * 0.5),
        alpha: alpha * cis(-2.0 * gt),
        phase: cis(-gt),
    };
    let branch_plus = Branch {
        atoms: (psi_p - bell_vector(BellKind::PhiPlus, 2.0 * phi + 4.0 * gt)) * ((c.c_plus - d_plus) * 0.5),
        alpha: alpha * cis(2.0 * gt),
        phase: cis(gt),
    };
    CoherentBranchState { branch0, branch_minus, branch_plus }
}

impl CoherentBranchState {
    pub fn branches(&self) -> [&Branch; 3] {
        [&self.branch0, &self.branch_minus, &self.branch_plus]
    }

    /// Unnormalized sum of the branches in the truncated space.
    pub fn amplitudes(&self, cutoff: FockCutoff) -> Result<DVector<C64>> {
        let fd = cutoff.dim();
        let mut v = DVector::zeros(4 * fd);
        for b in self.branches() {
            let field = coherent_state(b.alpha, cutoff)?;
            for atoms in 0..4 {
                let z = b.phase * b.atoms[atoms];
                if z == ZERO {
                    continue;
                }
                for (n, f) in field.amplitudes().iter().enumerate() {
                    v[atom_index(atoms, n, fd)] += z * f;
                }
            }
        }
        Ok(v)
    }

    /// The branch sum, renormalized.
    pub fn to_state(&self, cutoff: FockCutoff) -> Result<StateVector> {
        StateVector::normalized(self.amplitudes(cutoff)?, Space::atoms_and_mode(2, cutoff))
    }
}

/// `⟨S_ee⟩(t) = 1 + Re[e^{−|α|²(1−e^{i2gt}) − i3gt}]` for the initial state `|ee⟩|α⟩`.
pub fn rabi_see_analytic(alpha: C64, g: f64, t: f64) -> f64 {
    let r2 = alpha.norm_sqr();
    let exponent = -r2 * (ONE - cis(2.0 * g * t)) - I * (3.0 * g * t);
    1.0 + exponent.exp().re
}

/// Revival time `t_r = π/|g|`, independent of the photon number.
pub fn revival_time(g: f64) -> Result<f64> {
    if g == 0.0 || !g.is_finite() {
        return Err(Error::InvalidParameter(format!("revival time undefined for g={g}")));
    }
    Ok(PI / g.abs())
}
