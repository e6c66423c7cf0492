//! GHZ generation, the two-cavity Bell measurement and homodyne detection.
//!
//! Each cavity interaction is reduced to a linear map from two-atom states
//! to atom ⊗ field states; detection then acts as a 4 × 4 Kraus matrix on
//! the atoms. The record `(d1, d2)` of the two cavities realizes the
//! composed element `M_{φ+π/4}^{d2} M_φ^{d1}`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{quadrature_wavefunctions, sample_rng, DensityMatrix};
use crate::dynamics::{coherent_branch_state, revival_time, Propagator};
use crate::error::{Error, Result};
use crate::hilbert::{
    bell_state, bell_vector, cis, coherent_state, tensor, AtomCoeffs, BellKind, FockCutoff, Space, StateVector,
    C64, I, ONE, ZERO,
};
use crate::models::{two_photon_w, EffectiveModelParams};

/// Probability below which an outcome is reported without a fidelity.
pub const DEGENERATE_PROBABILITY: f64 = 1e-12;

/// Detector sign: `+` for `|β⟩`, `−` for `|−β⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn of(x: f64) -> Sign {
        if x >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    fn index(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// Detector record of the two cavities; `d2` refers to the field
/// `e^{iπ/4}α` of the second cavity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub d1: Sign,
    pub d2: Sign,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 4] = [
        OutcomeLabel { d1: Sign::Plus, d2: Sign::Plus },
        OutcomeLabel { d1: Sign::Minus, d2: Sign::Plus },
        OutcomeLabel { d1: Sign::Plus, d2: Sign::Minus },
        OutcomeLabel { d1: Sign::Minus, d2: Sign::Minus },
    ];

    pub fn new(d1: Sign, d2: Sign) -> Self {
        OutcomeLabel { d1, d2 }
    }

    pub fn index(self) -> usize {
        self.d1.index() + 2 * self.d2.index()
    }

    /// Bell state identified by this record after the correction gate.
    pub fn target(self) -> BellKind {
        match (self.d1, self.d2) {
            (Sign::Plus, Sign::Plus) => BellKind::PsiMinus,
            (Sign::Minus, Sign::Plus) => BellKind::PsiPlus,
            (Sign::Plus, Sign::Minus) => BellKind::PhiMinus,
            (Sign::Minus, Sign::Minus) => BellKind::PhiPlus,
        }
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.d1.symbol(), self.d2.symbol())
    }
}

fn outer(a: &Vector4<C64>, b: &Vector4<C64>) -> Matrix4<C64> {
    a * b.adjoint()
}

/// Single-cavity measurement operator:
/// `M_φ+ = |Ψ−⟩⟨Ψ−| + |Φ_{2φ}−⟩⟨Φ_{2φ}−|`,
/// `M_φ− = −i(|Φ_{2φ}+⟩⟨Ψ+| + |Ψ+⟩⟨Φ_{2φ}+|)`.
pub fn measurement_operator(phi: f64, sign: Sign) -> Matrix4<C64> {
    let psi_m = bell_vector(BellKind::PsiMinus, 0.0);
    let psi_p = bell_vector(BellKind::PsiPlus, 0.0);
    let phi_m = bell_vector(BellKind::PhiMinus, 2.0 * phi);
    let phi_p = bell_vector(BellKind::PhiPlus, 2.0 * phi);
    match sign {
        Sign::Plus => outer(&psi_m, &psi_m) + outer(&phi_m, &phi_m),
        Sign::Minus => (outer(&phi_p, &psi_p) + outer(&psi_p, &phi_p)) * (-I),
    }
}

/// `M^{s2 s1} = M_{φ+π/4}^{s2} M_φ^{s1}`.
pub fn composed_measurement(phi: f64, s1: Sign, s2: Sign) -> Matrix4<C64> {
    measurement_operator(phi + FRAC_PI_4, s2) * measurement_operator(phi, s1)
}

/// `σ_φ = e^{iφ}|e⟩⟨g| + e^{−iφ}|g⟩⟨e|` on one atom.
pub fn sigma_phi(phi: f64) -> Matrix2<C64> {
    Matrix2::new(ZERO, cis(-phi), cis(phi), ZERO)
}

/// `σ_z = |e⟩⟨e| − |g⟩⟨g|` on one atom.
pub fn sigma_z() -> Matrix2<C64> {
    Matrix2::new(-ONE, ZERO, ZERO, ONE)
}

fn on_atom_a(m: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| if r % 2 == c % 2 { m[(r / 2, c / 2)] } else { ZERO })
}

/// Gate applied to atom A after the record `outcome`:
/// `(+,+) → 1`, `(−,+) → iσ_{2φ}`, `(+,−) → σ_{2φ}σ_z`, `(−,−) → iσ_z`.
pub fn correction_gate(outcome: OutcomeLabel, phi: f64) -> Matrix4<C64> {
    let local = match (outcome.d1, outcome.d2) {
        (Sign::Plus, Sign::Plus) => Matrix2::identity(),
        (Sign::Minus, Sign::Plus) => sigma_phi(2.0 * phi) * I,
        (Sign::Plus, Sign::Minus) => sigma_phi(2.0 * phi) * sigma_z(),
        (Sign::Minus, Sign::Minus) => sigma_z() * I,
    };
    on_atom_a(&local)
}

/// Correction gate composed with the measurement element of the record.
pub fn corrected_measurement(outcome: OutcomeLabel, phi: f64) -> Matrix4<C64> {
    correction_gate(outcome, phi) * composed_measurement(phi, outcome.d1, outcome.d2)
}

/// Per-atom GHZ input `|φ_φ⟩ = e^{iπ/4}(e^{−iφ}|g⟩ − i e^{iφ}|e⟩)/√2`
/// together with the two-atom coefficients of `|φ_φ⟩|φ_φ⟩`.
pub fn ghz_input(phi: f64) -> (AtomCoeffs, Vector2<C64>) {
    let pre = cis(FRAC_PI_4) * FRAC_1_SQRT_2;
    let atom = Vector2::new(pre * cis(-phi), pre * (-I) * cis(phi));
    let two = Vector4::new(atom[0] * atom[0], atom[0] * atom[1], atom[1] * atom[0], atom[1] * atom[1]);
    (AtomCoeffs::from_computational(&two).expect("product of normalized states"), atom)
}

/// GHZ state `i/√2 (|Φ_{2φ}−⟩|α⟩ − |Φ_{2φ}+⟩|−α⟩)` with `φ = arg α`.
pub fn ghz_target(alpha: C64, cutoff: FockCutoff) -> Result<StateVector> {
    ghz_target_for_coupling(alpha, 1.0, cutoff)
}

/// GHZ state reached at `t_r/2` for a coupling of sign `sign(g)`: a
/// negative coupling flips the relative sign of the `|−α⟩` branch.
pub fn ghz_target_for_coupling(alpha: C64, g: f64, cutoff: FockCutoff) -> Result<StateVector> {
    let phi = alpha.arg();
    let plus = coherent_state(alpha, cutoff)?;
    let minus = coherent_state(-alpha, cutoff)?;
    let s = if g < 0.0 { -1.0 } else { 1.0 };
    let a = tensor(&bell_state(BellKind::PhiMinus, 2.0 * phi), &plus);
    let b = tensor(&bell_state(BellKind::PhiPlus, 2.0 * phi), &minus);
    let v = (a.amplitudes() - b.amplitudes() * C64::new(s, 0.0)) * (I * FRAC_1_SQRT_2);
    StateVector::normalized(v, a.space().clone())
}

/// Cat-state form `(|gg⟩|α,−⟩ + |ee⟩|α,+⟩)/√2` of the GHZ state for `φ = π/4`.
pub fn ghz_cat_form(alpha_abs: f64, cutoff: FockCutoff) -> Result<StateVector> {
    use crate::hilbert::{cat_state, Parity};
    let alpha = C64::from_polar(alpha_abs, FRAC_PI_4);
    let odd = cat_state(alpha, Parity::Odd, cutoff)?;
    let even = cat_state(alpha, Parity::Even, cutoff)?;
    let gg = StateVector::basis(0, Space::two_atoms(2))?;
    let ee = StateVector::basis(3, Space::two_atoms(2))?;
    let v = (tensor(&gg, &odd).amplitudes() + tensor(&ee, &even).amplitudes()) * C64::new(FRAC_1_SQRT_2, 0.0);
    StateVector::normalized(v, Space::atoms_and_mode(2, cutoff))
}

/// Propagation engine for a cavity interaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Engine {
    /// Exact evolution under `W` in the truncated space.
    Exact,
    /// Coherent-branch closed form.
    Analytic,
}

/// Decomposition of `W` shared across calls with the same coupling and cutoff.
fn w_propagator(g: f64, cutoff: FockCutoff) -> Result<Arc<Propagator>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), Arc<Propagator>>>> = OnceLock::new();
    let key = (g.to_bits(), cutoff.n_max());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().expect("cache lock").get(&key) {
        return Ok(Arc::clone(p));
    }
    let p = Arc::new(Propagator::new(&two_photon_w(&EffectiveModelParams::new(g, cutoff)?))?);
    let mut guard = cache.lock().expect("cache lock");
    if guard.len() >= 16 {
        guard.clear();
    }
    guard.insert(key, Arc::clone(&p));
    Ok(p)
}

/// `|GHZ⟩` fidelity of `e^{−iWt_r/2}(|φ_φ⟩|φ_φ⟩|α⟩)`.
pub fn run_ghz(alpha: C64, g: f64, cutoff: FockCutoff, engine: Engine) -> Result<f64> {
    let phi = alpha.arg();
    let (c, _) = ghz_input(phi);
    let t = revival_time(g)? / 2.0;
    let target = ghz_target_for_coupling(alpha, g, cutoff)?;
    let out = match engine {
        Engine::Exact => {
            let psi0 = tensor(&c.to_state(), &coherent_state(alpha, cutoff)?);
            w_propagator(g, cutoff)?.evolve(&psi0, t)?
        }
        Engine::Analytic => coherent_branch_state(&c, alpha, g, t).to_state(cutoff)?,
    };
    Ok(target.inner(&out)?.norm_sqr())
}

/// `⟨x|±α⟩ = (2/π)^{1/4} exp[−(x ∓ |α|)²]` for the quadrature along the
/// phase of `α`.
pub fn quadrature_overlap(x: f64, alpha_abs: f64, sign: Sign) -> f64 {
    (2.0 / PI).powf(0.25) * (-(x - sign.value() * alpha_abs).powi(2)).exp()
}

/// Smearing variance `Δ_ε² = (1−ε)/(4ε)` of a detector with efficiency `ε`.
pub fn homodyne_variance(efficiency: f64) -> Result<f64> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(Error::InvalidParameter(format!("efficiency must lie in (0, 1], got {efficiency}")));
    }
    Ok((1.0 - efficiency) / (4.0 * efficiency))
}

/// Lowest efficiency for which the detection model applies: `ε > 4/|α|²`.
pub fn efficiency_bound(alpha_abs: f64) -> f64 {
    4.0 / (alpha_abs * alpha_abs)
}

/// Balanced homodyne detection settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomodyneConfig {
    /// Local-oscillator phase of the first cavity; `None` selects the
    /// optimal value `φ = arg α`. The second cavity uses `θ + π/4`.
    pub lo_phase: Option<f64>,
    pub efficiency: f64,
    /// Spacing of the quadrature grid.
    pub grid_step: f64,
}

impl HomodyneConfig {
    pub fn new(efficiency: f64) -> Result<Self> {
        homodyne_variance(efficiency)?;
        Ok(HomodyneConfig { lo_phase: None, efficiency, grid_step: 0.02 })
    }

    pub fn variance(&self) -> f64 {
        (1.0 - self.efficiency) / (4.0 * self.efficiency)
    }
}

/// How the fields are read out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Detection {
    /// Projection onto the truncated coherent states `|±β⟩`.
    Ideal,
    Homodyne(HomodyneConfig),
}

/// Linear map from two-atom states to the atom ⊗ field state after one
/// cavity interaction: column `k` is `U(e_k ⊗ |β⟩)`.
#[derive(Clone, Debug)]
pub struct CavityMap {
    pub beta: C64,
    pub cutoff: FockCutoff,
    cols: DMatrix<C64>,
}

impl CavityMap {
    pub fn new(engine: Engine, beta: C64, g: f64, t: f64, cutoff: FockCutoff) -> Result<Self> {
        let fd = cutoff.dim();
        let mut cols = DMatrix::zeros(4 * fd, 4);
        let field = coherent_state(beta, cutoff)?;
        let w = match engine {
            Engine::Exact => Some(w_propagator(g, cutoff)?),
            Engine::Analytic => None,
        };
        for k in 0..4 {
            let e = StateVector::basis(k, Space::two_atoms(2))?;
            let col = match &w {
                Some(w) => w.evolve(&tensor(&e, &field), t)?.into_amplitudes(),
                None => coherent_branch_state(&AtomCoeffs::from_state(&e)?, beta, g, t).amplitudes(cutoff)?,
            };
            cols.set_column(k, &col);
        }
        Ok(CavityMap { beta, cutoff, cols })
    }

    /// Joint state for atomic input `psi`, not normalized.
    pub fn joint(&self, psi: &Vector4<C64>) -> DVector<C64> {
        &self.cols * DVector::from_iterator(4, psi.iter().copied())
    }

    /// Kraus matrix `A[j,k] = Σ_n f_n* ⟨j,n|U|k,β⟩` for field bra amplitudes `f`.
    fn contract(&self, f: &[C64]) -> Matrix4<C64> {
        let fd = self.cutoff.dim();
        Matrix4::from_fn(|j, k| (0..fd).map(|n| f[n].conj() * self.cols[(j * fd + n, k)]).sum())
    }

    /// Kraus matrices of projecting the field onto `|β⟩` and `|−β⟩`.
    pub fn ideal_kraus(&self) -> Result<[Matrix4<C64>; 2]> {
        let p = coherent_state(self.beta, self.cutoff)?;
        let m = coherent_state(-self.beta, self.cutoff)?;
        let pv: Vec<C64> = p.amplitudes().iter().copied().collect();
        let mv: Vec<C64> = m.amplitudes().iter().copied().collect();
        Ok([self.contract(&pv), self.contract(&mv)])
    }

    /// Kraus matrix of the quadrature eigenstate `|x, θ⟩`,
    /// `⟨n|x,θ⟩ = e^{iθn} ψ_n(x)`.
    pub fn quadrature_kraus(&self, x: f64, theta: f64) -> Matrix4<C64> {
        let psi = quadrature_wavefunctions(x, self.cutoff.n_max());
        let f: Vec<C64> = psi.iter().enumerate().map(|(n, &v)| cis(theta * n as f64) * v).collect();
        self.contract(&f)
    }
}

/// Result of the protocol for one detector record.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolResult {
    pub outcome: OutcomeLabel,
    pub probability: f64,
    /// Corrected two-atom state, averaged over records with this label;
    /// `None` when the outcome is degenerate.
    pub post_state: Option<DensityMatrix>,
    pub target: BellKind,
    /// `⟨target|ρ|target⟩`; `None` when the outcome is degenerate.
    pub fidelity: Option<f64>,
}

/// Quadrature samples and Kraus matrices of one cavity for homodyne
/// detection.
#[derive(Clone, Debug)]
struct HomodyneTable {
    xs: Vec<f64>,
    step: f64,
    kraus: Vec<Matrix4<C64>>,
    /// `∫ K(y)†K(y) G_Δ(x−y) dy` on the same grid.
    smoothed: Vec<Matrix4<C64>>,
}

impl HomodyneTable {
    fn new(map: &CavityMap, theta: f64, cfg: &HomodyneConfig) -> Self {
        let var = cfg.variance();
        let sd = var.sqrt();
        let reach = map.beta.norm() + 6.0 + 8.0 * sd;
        let step = cfg.grid_step;
        let n = (2.0 * reach / step).ceil() as usize + 1;
        // symmetric grid that never contains x = 0 exactly
        let x0 = -step * (n as f64 - 1.0) / 2.0 - step / 2.0;
        let xs: Vec<f64> = (0..=n).map(|k| x0 + k as f64 * step).collect();
        let kraus: Vec<Matrix4<C64>> = xs.iter().map(|&x| map.quadrature_kraus(x, theta)).collect();
        let kk: Vec<Matrix4<C64>> = kraus.iter().map(|k| k.adjoint() * k).collect();
        let smoothed = if var == 0.0 {
            kk
        } else {
            let norm = 1.0 / (2.0 * PI * var).sqrt();
            let span = (8.0 * sd / step).ceil() as isize;
            (0..xs.len())
                .map(|i| {
                    let mut acc = Matrix4::zeros();
                    for d in -span..=span {
                        let j = i as isize + d;
                        if j < 0 || j >= xs.len() as isize {
                            continue;
                        }
                        let dx = d as f64 * step;
                        let wgt = norm * (-dx * dx / (2.0 * var)).exp() * step;
                        acc += kk[j as usize] * C64::new(wgt, 0.0);
                    }
                    acc
                })
                .collect()
        };
        HomodyneTable { xs, step, kraus, smoothed }
    }

    /// Unnormalized record density `ψ† S(x) ψ` at every grid point.
    fn density(&self, psi: &Vector4<C64>) -> Vec<f64> {
        self.smoothed.iter().map(|s| psi.dotc(&(s * psi)).re.max(0.0)).collect()
    }
}

/// Collapsed states below this norm are treated as lost records.
const COLLAPSE_FLOOR: f64 = 1e-150;

/// The complete two-cavity Bell measurement.
#[derive(Clone, Debug)]
pub struct BellProtocol {
    pub alpha: C64,
    pub g: f64,
    pub detection: Detection,
    pub times: (f64, f64),
    ideal: Option<([Matrix4<C64>; 2], [Matrix4<C64>; 2])>,
    homodyne: Option<(HomodyneTable, HomodyneTable)>,
}

impl BellProtocol {
    /// Both cavities interact for `t_r/2`.
    pub fn new(alpha: C64, g: f64, cutoff: FockCutoff, engine: Engine, detection: Detection) -> Result<Self> {
        let t = revival_time(g)? / 2.0;
        BellProtocol::with_times(alpha, g, cutoff, engine, detection, (t, t))
    }

    pub fn with_times(
        alpha: C64,
        g: f64,
        cutoff: FockCutoff,
        engine: Engine,
        detection: Detection,
        times: (f64, f64),
    ) -> Result<Self> {
        if alpha == ZERO {
            return Err(Error::InvalidParameter("coherent amplitude must be nonzero".into()));
        }
        let beta2 = alpha * cis(FRAC_PI_4);
        let cavity1 = CavityMap::new(engine, alpha, g, times.0, cutoff)?;
        let cavity2 = CavityMap::new(engine, beta2, g, times.1, cutoff)?;
        let (ideal, homodyne) = match detection {
            Detection::Ideal => (Some((cavity1.ideal_kraus()?, cavity2.ideal_kraus()?)), None),
            Detection::Homodyne(cfg) => {
                homodyne_variance(cfg.efficiency)?;
                if !(cfg.grid_step > 0.0) {
                    return Err(Error::InvalidParameter("homodyne grid step must be positive".into()));
                }
                let theta = cfg.lo_phase.unwrap_or(alpha.arg());
                let t1 = HomodyneTable::new(&cavity1, theta, &cfg);
                let t2 = HomodyneTable::new(&cavity2, theta + FRAC_PI_4, &cfg);
                (None, Some((t1, t2)))
            }
        };
        Ok(BellProtocol { alpha, g, detection, times, ideal, homodyne })
    }

    pub fn phi(&self) -> f64 {
        self.alpha.arg()
    }

    /// Probability, conditional state and fidelity for all four records.
    pub fn outcomes(&self, c: &AtomCoeffs) -> Result<[ProtocolResult; 4]> {
        let psi = c.to_computational();
        let mut acc: [(f64, Matrix4<C64>); 4] = [(0.0, Matrix4::zeros()); 4];
        let phi = self.phi();
        let gates: Vec<Matrix4<C64>> = OutcomeLabel::ALL.iter().map(|o| correction_gate(*o, phi)).collect();
        let mut record = |label: OutcomeLabel, weight: f64, state: &Vector4<C64>| {
            let v = gates[label.index()] * state;
            let slot = &mut acc[label.index()];
            slot.0 += weight;
            slot.1 += outer(&v, &v) * C64::new(weight, 0.0);
        };
        if let Some((k1, k2)) = &self.ideal {
            for s1 in Sign::BOTH {
                let v1 = k1[s1.index()] * psi;
                for s2 in Sign::BOTH {
                    let v2 = k2[s2.index()] * v1;
                    let w = v2.norm_squared();
                    if w > 0.0 {
                        record(OutcomeLabel::new(s1, s2), w, &v2.unscale(w.sqrt()));
                    }
                }
            }
        } else if let Some((h1, h2)) = &self.homodyne {
            let p1 = h1.density(&psi);
            for (i, &w1) in p1.iter().enumerate() {
                let w1 = w1 * h1.step;
                if w1 < 1e-18 {
                    continue;
                }
                let v1 = h1.kraus[i] * psi;
                let n1 = v1.norm();
                if n1 < COLLAPSE_FLOOR {
                    continue;
                }
                let v1 = v1.unscale(n1);
                let s1 = Sign::of(h1.xs[i]);
                for (j, s) in h2.smoothed.iter().enumerate() {
                    let w2 = v1.dotc(&(s * v1)).re.max(0.0) * h2.step;
                    if w2 < 1e-18 {
                        continue;
                    }
                    let v2 = h2.kraus[j] * v1;
                    let n2 = v2.norm();
                    if n2 < COLLAPSE_FLOOR {
                        continue;
                    }
                    record(OutcomeLabel::new(s1, Sign::of(h2.xs[j])), w1 * w2, &v2.unscale(n2));
                }
            }
        }
        let total: f64 = acc.iter().map(|a| a.0).sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateOutcome);
        }
        let results: Vec<ProtocolResult> = OutcomeLabel::ALL
            .iter()
            .map(|&label| {
                let (w, rho) = &acc[label.index()];
                self.finish(label, w / total, if *w > 0.0 { Some(rho.unscale(*w)) } else { None })
            })
            .collect::<Result<_>>()?;
        Ok(results.try_into().expect("four outcomes"))
    }

    fn finish(&self, label: OutcomeLabel, probability: f64, rho: Option<Matrix4<C64>>) -> Result<ProtocolResult> {
        let target = label.target();
        let degenerate = probability < DEGENERATE_PROBABILITY;
        let (post_state, fidelity) = match rho {
            Some(r) if !degenerate => {
                let dm = DensityMatrix::normalized(DMatrix::from_iterator(4, 4, r.iter().copied()), Space::two_atoms(2))?;
                let f = crate::analysis::fidelity(&dm, &bell_state(target, 2.0 * self.phi()))?;
                (Some(dm), Some(f))
            }
            _ => (None, None),
        };
        Ok(ProtocolResult { outcome: label, probability, post_state, target, fidelity })
    }

    /// One simulated run with a sampled detector record.
    pub fn sample<R: Rng + ?Sized>(&self, c: &AtomCoeffs, rng: &mut R) -> Result<ProtocolResult> {
        let (label, v) = self.draw(&c.to_computational(), rng)?;
        let corrected = correction_gate(label, self.phi()) * v;
        // the probability of the sampled record comes from the full distribution
        let probs = self.outcomes(c)?;
        let p = probs[label.index()].probability;
        self.finish(label, p.max(DEGENERATE_PROBABILITY), Some(outer(&corrected, &corrected)))
    }

    /// Sampled record label only; cheaper than [`BellProtocol::sample`].
    pub fn sample_outcome<R: Rng + ?Sized>(&self, c: &AtomCoeffs, rng: &mut R) -> Result<OutcomeLabel> {
        Ok(self.draw(&c.to_computational(), rng)?.0)
    }

    fn draw<R: Rng + ?Sized>(&self, psi: &Vector4<C64>, rng: &mut R) -> Result<(OutcomeLabel, Vector4<C64>)> {
        let (s1, s2, v) = if let Some((k1, k2)) = &self.ideal {
            let (s1, v1) = pick_kraus(k1, psi, rng)?;
            let (s2, v2) = pick_kraus(k2, &v1, rng)?;
            (s1, s2, v2)
        } else if let Some((h1, h2)) = &self.homodyne {
            let (s1, v1) = sample_quadrature(h1, psi, rng)?;
            let (s2, v2) = sample_quadrature(h2, &v1, rng)?;
            (s1, s2, v2)
        } else {
            unreachable!("detection tables are built in the constructor")
        };
        Ok((OutcomeLabel::new(s1, s2), v))
    }

    /// Outcome probabilities only.
    pub fn probabilities(&self, c: &AtomCoeffs) -> Result<[f64; 4]> {
        let r = self.outcomes(c)?;
        Ok([r[0].probability, r[1].probability, r[2].probability, r[3].probability])
    }
}

fn pick_kraus<R: Rng + ?Sized>(k: &[Matrix4<C64>; 2], psi: &Vector4<C64>, rng: &mut R) -> Result<(Sign, Vector4<C64>)> {
    let v = [k[0] * psi, k[1] * psi];
    let w = [v[0].norm_squared(), v[1].norm_squared()];
    let total = w[0] + w[1];
    if !(total > 0.0) {
        return Err(Error::DegenerateOutcome);
    }
    let idx = if rng.random::<f64>() * total < w[0] { 0 } else { 1 };
    let sign = if idx == 0 { Sign::Plus } else { Sign::Minus };
    Ok((sign, v[idx].unscale(w[idx].sqrt())))
}

fn sample_quadrature<R: Rng + ?Sized>(
    table: &HomodyneTable,
    psi: &Vector4<C64>,
    rng: &mut R,
) -> Result<(Sign, Vector4<C64>)> {
    let dens = table.density(psi);
    let total: f64 = dens.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateOutcome);
    }
    // resample when the collapse underflows; bounded to avoid looping forever
    for _ in 0..64 {
        let u = rng.random::<f64>() * total;
        let mut cum = 0.0;
        let mut idx = dens.len() - 1;
        for (i, d) in dens.iter().enumerate() {
            cum += d;
            if cum >= u {
                idx = i;
                break;
            }
        }
        let v = table.kraus[idx] * psi;
        let n = v.norm();
        if n >= COLLAPSE_FLOOR {
            return Ok((Sign::of(table.xs[idx]), v.unscale(n)));
        }
    }
    Err(Error::DegenerateOutcome)
}

/// One sampled run of the Bell measurement with both cavities at `t_r/2`.
#[allow(clippy::too_many_arguments)]
pub fn run_bell_protocol(
    c: &AtomCoeffs,
    alpha: C64,
    g: f64,
    cutoff: FockCutoff,
    engine: Engine,
    detection: Detection,
    rng_seed: u64,
) -> Result<ProtocolResult> {
    let protocol = BellProtocol::new(alpha, g, cutoff, engine, detection)?;
    let mut rng = sample_rng(rng_seed, 0);
    protocol.sample(c, &mut rng)
}

/// Per-outcome fidelities when both cavities interact for the same time `t`.
#[derive(Clone, Debug)]
pub struct TimingPoint {
    pub t: f64,
    pub results: [ProtocolResult; 4],
}

/// Scans the interaction time of both cavities over `times`.
pub fn timing_sensitivity(
    c: &AtomCoeffs,
    alpha: C64,
    g: f64,
    cutoff: FockCutoff,
    engine: Engine,
    times: &[f64],
) -> Result<Vec<TimingPoint>> {
    let t_r = revival_time(g)?;
    if let Some(bad) = times.iter().find(|&&t| !(0.0..=t_r).contains(&t)) {
        return Err(Error::InvalidParameter(format!("time {bad} outside [0, t_r]")));
    }
    use rayon::prelude::*;
    times
        .par_iter()
        .map(|&t| {
            let p = BellProtocol::with_times(alpha, g, cutoff, engine, Detection::Ideal, (t, t))?;
            Ok(TimingPoint { t, results: p.outcomes(c)? })
        })
        .collect()
}
