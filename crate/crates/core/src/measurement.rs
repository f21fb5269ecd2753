//! Operators of the single-round protocol maps.
//!
//! Bob's two optical modes (reference `S'`, signal `R'`) are measured by two
//! threshold detectors behind a balanced beam splitter. The squashing
//! reduction replaces that measurement with a two-qubit POVM on `S⊗R`, and
//! Alice's source is represented by a qubit `A` whose marginal `σ_A` is fixed
//! by the coherent-state overlaps.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::linalg::{c64, tensor, CMatrix, HermitianOperator, RegisterSignature};

/// Public announcement alphabet of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    /// Key round with a click; the outcome stays private.
    Bot,
    /// Test round, Bob's detector agrees with Alice's bit.
    CC,
    /// Test round, wrong detector clicked.
    WC,
    /// No click (key or test round).
    NC,
}

impl Symbol {
    pub const ALL: [Symbol; 4] = [Symbol::Bot, Symbol::CC, Symbol::WC, Symbol::NC];
    /// Symbols whose probability is linear in the state.
    pub const TESTED: [Symbol; 3] = [Symbol::CC, Symbol::WC, Symbol::NC];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Symbol::Bot => "bot",
            Symbol::CC => "cc",
            Symbol::WC => "wc",
            Symbol::NC => "nc",
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Two-mode register `S'⊗R'`, each mode truncated at `n_max` photons.
pub fn fock_signature(n_max: usize) -> RegisterSignature {
    RegisterSignature::new(&[("S'", n_max + 1), ("R'", n_max + 1)])
        .expect("static labels are distinct")
}

pub fn sr_signature() -> RegisterSignature {
    RegisterSignature::new(&[("S", 2), ("R", 2)]).expect("static labels are distinct")
}

pub fn asr_signature() -> RegisterSignature {
    RegisterSignature::new(&[("A", 2), ("S", 2), ("R", 2)]).expect("static labels are distinct")
}

/// Ideal threshold-detector POVM on the truncated two-mode Fock space.
#[derive(Debug, Clone)]
pub struct ThresholdPovm {
    pub n_max: usize,
    pub no_click: HermitianOperator,
    pub click0: HermitianOperator,
    pub click1: HermitianOperator,
    pub double_click: HermitianOperator,
}

impl ThresholdPovm {
    pub fn elements(&self) -> [&HermitianOperator; 4] {
        [&self.no_click, &self.click0, &self.click1, &self.double_click]
    }
}

/// Largest entrywise deviation of `Σ_k E_k` from the identity.
pub fn completeness_error<'a>(elements: impl IntoIterator<Item = &'a HermitianOperator>) -> f64 {
    let mut it = elements.into_iter();
    let first = match it.next() {
        Some(e) => e,
        None => return f64::INFINITY,
    };
    let mut sum = first.entries().clone();
    for e in it {
        sum += e.entries();
    }
    let d = sum.nrows();
    sum -= CMatrix::identity(d, d);
    sum.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Threshold POVM with each mode truncated at `n_max` photons.
///
/// The truncation is per mode, so the double-click element collects every
/// `|a, b⟩` with `a, b ≥ 1` and the four elements resolve the identity on the
/// full `(n_max+1)²`-dimensional space. On the total-photon-number sector
/// `N ≤ n_max` this coincides with the photon-number-ordered sum.
pub fn build_threshold_povm(n_max: usize) -> Result<ThresholdPovm> {
    if n_max < 1 {
        return Err(Error::InvalidParameter {
            name: "n_max",
            value: n_max as f64,
            expected: "at least 1",
        });
    }
    let sig = fock_signature(n_max);
    let side = n_max + 1;
    let mut diag = [
        vec![0.0; side * side],
        vec![0.0; side * side],
        vec![0.0; side * side],
        vec![0.0; side * side],
    ];
    for a in 0..side {
        for b in 0..side {
            let slot = match (a, b) {
                (0, 0) => 0,
                (_, 0) => 1,
                (0, _) => 2,
                _ => 3,
            };
            diag[slot][a * side + b] = 1.0;
        }
    }
    let [d0, d1, d2, d3] = diag;
    Ok(ThresholdPovm {
        n_max,
        no_click: HermitianOperator::from_real_diagonal(sig.clone(), &d0)?,
        click0: HermitianOperator::from_real_diagonal(sig.clone(), &d1)?,
        click1: HermitianOperator::from_real_diagonal(sig.clone(), &d2)?,
        double_click: HermitianOperator::from_real_diagonal(sig, &d3)?,
    })
}

/// Three-outcome POVM after dark counts and double-click reassignment.
#[derive(Debug, Clone)]
pub struct NoisyPovm {
    pub no_click: HermitianOperator,
    pub click0: HermitianOperator,
    pub click1: HermitianOperator,
}

impl NoisyPovm {
    pub fn elements(&self) -> [&HermitianOperator; 3] {
        [&self.no_click, &self.click0, &self.click1]
    }
}

/// Rows of the linear map taking `(M^⊥, M^0, M^1, M^dc)` to
/// `(M̄^⊥, M̄^0, M̄^1)`. Double clicks (real or dark) are assigned to a
/// uniformly random detector.
pub fn dark_count_transform(pd0: f64, pd1: f64) -> [[f64; 4]; 3] {
    [
        [(1.0 - pd0) * (1.0 - pd1), 0.0, 0.0, 0.0],
        [pd0 * (1.0 - pd1 / 2.0), 1.0 - pd1 / 2.0, pd0 / 2.0, 0.5],
        [pd1 * (1.0 - pd0 / 2.0), pd1 / 2.0, 1.0 - pd0 / 2.0, 0.5],
    ]
}

pub fn apply_dark_counts(povm: &ThresholdPovm, pd0: f64, pd1: f64) -> Result<NoisyPovm> {
    check_range("pd0", pd0, (0.0..=1.0).contains(&pd0), "in [0, 1]")?;
    check_range("pd1", pd1, (0.0..=1.0).contains(&pd1), "in [0, 1]")?;
    let t = dark_count_transform(pd0, pd1);
    let src = povm.elements();
    let combine = |row: &[f64; 4]| {
        let mut acc = HermitianOperator::zeros(src[0].signature().clone());
        for (w, e) in row.iter().zip(src) {
            if *w != 0.0 {
                acc = &acc + &(e * *w);
            }
        }
        acc
    };
    Ok(NoisyPovm {
        no_click: combine(&t[0]),
        click0: combine(&t[1]),
        click1: combine(&t[2]),
    })
}

/// `U†_bs (M^0 − M^1) U_bs` on the total-photon sector `N ≤ n_max`,
/// expressed on the incoming modes `S'⊗R'`.
///
/// Detector 0 sits on the constructive port `(S' + R')/√2`.
pub fn bs_click_difference(n_max: usize) -> HermitianOperator {
    let sig = fock_signature(n_max);
    let side = n_max + 1;
    let mut m = CMatrix::zeros(side * side, side * side);
    let ln_binom = |n: usize, k: usize| ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    for big_n in 1..=n_max {
        let scale = -(big_n as f64) * std::f64::consts::LN_2;
        for k in 0..=big_n {
            for l in 0..=big_n {
                if (k + l) % 2 == 0 {
                    continue;
                }
                let w = 2.0 * (scale + 0.5 * (ln_binom(big_n, k) + ln_binom(big_n, l))).exp();
                let row = (big_n - k) * side + k;
                let col = (big_n - l) * side + l;
                m[(row, col)] += c64(w);
            }
        }
    }
    HermitianOperator::from_computed(sig, m)
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Squashed two-qubit POVM with symmetric dark counts.
#[derive(Debug, Clone)]
pub struct SquashedPovm {
    pub n_bot: HermitianOperator,
    pub n_0: HermitianOperator,
    pub n_1: HermitianOperator,
    /// Total click operator `n_0 + n_1`.
    pub n_top: HermitianOperator,
    pub dark_count: f64,
}

impl SquashedPovm {
    pub fn click(&self, bit: usize) -> &HermitianOperator {
        if bit == 0 {
            &self.n_0
        } else {
            &self.n_1
        }
    }
}

/// Noiseless squashed elements `(N^⊥, N^0, N^1)` in the `|SR⟩` basis
/// `00, 01, 10, 11`.
fn ideal_squashed() -> [CMatrix; 3] {
    let h = 0.5;
    let mut n0 = CMatrix::zeros(4, 4);
    let mut n1 = CMatrix::zeros(4, 4);
    // φ± = (|01⟩ ± |10⟩)/√2
    n0[(1, 1)] = c64(h);
    n0[(2, 2)] = c64(h);
    n0[(1, 2)] = c64(h);
    n0[(2, 1)] = c64(h);
    n1[(1, 1)] = c64(h);
    n1[(2, 2)] = c64(h);
    n1[(1, 2)] = c64(-h);
    n1[(2, 1)] = c64(-h);
    n0[(3, 3)] = c64(0.5);
    n1[(3, 3)] = c64(0.5);
    let mut nb = CMatrix::zeros(4, 4);
    nb[(0, 0)] = c64(1.0);
    [nb, n0, n1]
}

pub fn build_squashed_povm(p_d: f64) -> Result<SquashedPovm> {
    check_range("p_d", p_d, (0.0..1.0).contains(&p_d), "in [0, 1)")?;
    let sig = sr_signature();
    let [nb, n0, n1] = ideal_squashed();
    let keep = (1.0 - p_d) * (1.0 - p_d);
    let id = CMatrix::identity(4, 4);
    let diff = &n0 - &n1;
    let base = &id * c64(0.5) - &nb * c64(keep / 2.0);
    let bar0 = &base + &diff * c64((1.0 - p_d) / 2.0);
    let bar1 = &base - &diff * c64((1.0 - p_d) / 2.0);
    let top = &id - &nb * c64(keep);
    Ok(SquashedPovm {
        n_bot: HermitianOperator::from_computed(sig.clone(), nb * c64(keep)),
        n_0: HermitianOperator::from_computed(sig.clone(), bar0),
        n_1: HermitianOperator::from_computed(sig.clone(), bar1),
        n_top: HermitianOperator::from_computed(sig, top),
        dark_count: p_d,
    })
}

/// Parameter-estimation operators on `A⊗S⊗R`.
#[derive(Debug, Clone)]
pub struct GammaOperators {
    pub gamma_cc: HermitianOperator,
    pub gamma_wc: HermitianOperator,
    pub gamma_nc: HermitianOperator,
    /// `I_A ⊗ n_top`, the click operator of key rounds.
    pub key_click: HermitianOperator,
    pub p_k: f64,
}

impl GammaOperators {
    /// Operator of a tested symbol. `Bot` maps to `p^K·(I_A ⊗ n_top)`.
    pub fn operator(&self, symbol: Symbol) -> HermitianOperator {
        match symbol {
            Symbol::CC => self.gamma_cc.clone(),
            Symbol::WC => self.gamma_wc.clone(),
            Symbol::NC => self.gamma_nc.clone(),
            Symbol::Bot => &self.key_click * self.p_k,
        }
    }

    /// Probability of each symbol in state `ω` (`Bot` uses the key click).
    pub fn probabilities(&self, omega: &HermitianOperator) -> [f64; 4] {
        let mut out = [0.0; 4];
        for s in Symbol::ALL {
            out[s.index()] = self.operator(s).inner(omega);
        }
        out
    }
}

pub fn build_gamma_operators(p_k: f64, p_d: f64) -> Result<GammaOperators> {
    check_range("p_k", p_k, (0.0..=1.0).contains(&p_k), "in [0, 1]")?;
    let sq = build_squashed_povm(p_d)?;
    let sig_a = RegisterSignature::single("A", 2);
    let proj = |x| HermitianOperator::basis_projector(sig_a.clone(), x).expect("qubit index");
    let test = 1.0 - p_k;
    let mut cc = tensor(&proj(0), &sq.n_0)?;
    cc = &cc + &tensor(&proj(1), &sq.n_1)?;
    let mut wc = tensor(&proj(0), &sq.n_1)?;
    wc = &wc + &tensor(&proj(1), &sq.n_0)?;
    let id_a = HermitianOperator::identity(sig_a.clone());
    Ok(GammaOperators {
        gamma_cc: &cc * test,
        gamma_wc: &wc * test,
        gamma_nc: tensor(&id_a, &sq.n_bot)?,
        key_click: tensor(&id_a, &sq.n_top)?,
        p_k,
    })
}

/// Facially reduced key map `ω ↦ G̃ ω G̃†` followed by the pinching on `A`.
#[derive(Debug, Clone)]
pub struct KeySuperoperator {
    pub kraus: CMatrix,
    pub input: RegisterSignature,
    pub output: RegisterSignature,
    pub pinch_projectors: Vec<HermitianOperator>,
}

impl KeySuperoperator {
    pub fn apply(&self, omega: &HermitianOperator) -> Result<HermitianOperator> {
        omega.conjugate_by(&self.kraus, self.output.clone())
    }

    /// `Z(X) = Σ_x P_x X P_x`.
    pub fn pinch(&self, op: &HermitianOperator) -> HermitianOperator {
        HermitianOperator::from_computed(self.output.clone(), self.pinch_raw(op.entries()))
    }

    pub(crate) fn apply_raw(&self, omega: &CMatrix) -> CMatrix {
        &self.kraus * omega * self.kraus.adjoint()
    }

    /// Adjoint of the conjugation, `G̃† X G̃`.
    pub(crate) fn adjoint_raw(&self, x: &CMatrix) -> CMatrix {
        self.kraus.adjoint() * x * &self.kraus
    }

    /// The pinching projectors are `|x⟩⟨x|_A ⊗ I`, so `Z` zeroes the
    /// off-diagonal `A` blocks.
    pub(crate) fn pinch_raw(&self, x: &CMatrix) -> CMatrix {
        let d = x.nrows();
        let half = d / 2;
        CMatrix::from_fn(d, d, |i, j| {
            if (i < half) == (j < half) {
                x[(i, j)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

pub fn build_key_superoperator(p_d: f64) -> Result<KeySuperoperator> {
    check_range("p_d", p_d, (0.0..1.0).contains(&p_d), "in [0, 1)")?;
    let input = asr_signature();
    let (bob, output) = if p_d > 0.0 {
        let mut b = CMatrix::identity(4, 4);
        b[(0, 0)] = c64((2.0 * p_d - p_d * p_d).sqrt());
        (b, asr_signature())
    } else {
        // the no-click vector |00⟩ is dropped and K spans {|01⟩, |10⟩, |11⟩}
        let mut b = CMatrix::zeros(3, 4);
        b[(0, 1)] = c64(1.0);
        b[(1, 2)] = c64(1.0);
        b[(2, 3)] = c64(1.0);
        let sig = RegisterSignature::new(&[("A", 2), ("K", 3)]).expect("distinct labels");
        (b, sig)
    };
    let kraus = CMatrix::identity(2, 2).kronecker(&bob);
    let sig_a = RegisterSignature::single("A", 2);
    let rest_dim = output.dim() / 2;
    let rest_sig = RegisterSignature::single("rest", rest_dim);
    let pinch_projectors = (0..2)
        .map(|x| {
            let p = HermitianOperator::basis_projector(sig_a.clone(), x).expect("qubit index");
            tensor(&p, &HermitianOperator::identity(rest_sig.clone()))
                .and_then(|t| t.with_signature(output.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KeySuperoperator {
        kraus,
        input,
        output,
        pinch_projectors,
    })
}

/// Alice's fixed marginal on `A`.
#[derive(Debug, Clone)]
pub struct AliceMarginal {
    pub sigma_a: HermitianOperator,
    pub beta: f64,
    pub gamma_mod: f64,
}

/// Inner product `⟨a|b⟩` of coherent states with real amplitudes.
pub fn coherent_overlap(a: f64, b: f64) -> f64 {
    (-(a * a + b * b) / 2.0 + a * b).exp()
}

pub fn build_alice_marginal(beta: f64, gamma_mod: f64) -> Result<AliceMarginal> {
    check_range("beta", beta, beta > 0.0, "positive")?;
    check_range("gamma_mod", gamma_mod, gamma_mod > 0.0, "positive")?;
    let amps = [-beta, gamma_mod * beta];
    let m = CMatrix::from_fn(2, 2, |j, k| c64(0.5 * coherent_overlap(amps[k], amps[j])));
    Ok(AliceMarginal {
        sigma_a: HermitianOperator::new(RegisterSignature::single("A", 2), m)?,
        beta,
        gamma_mod,
    })
}
