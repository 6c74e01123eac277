//! Cocycle systems over a finite base and stable accumulation of long products.
//!
//! A system is a finitely supported measure `μ` on a group `G` acting on a finite set
//! `X` by permutations, together with a matrix `A(g, x) ∈ SL(n, R)` for every atom and
//! state. Along a word `u = (u_1, u_2, …)` the forward product is
//! `A^n(u, x) = A(u_n, x_{n−1}) ⋯ A(u_1, x_0)` with `x_i = u_i(x_{i−1})`. Along
//! `v = (v_0, v_1, …)` the backward product is
//! `A^{−n}(v, y) = A(v_{n−1}, y_n)^{-1} ⋯ A(v_0, y_1)^{-1}` with `y_{i+1} = v_i^{-1}(y_i)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::liegroup::GroupElement;
use crate::linalg::{self, Mat};
use crate::rng::{Domain, Stream};
use crate::{math, Error, Result};

/// Tolerance on `Σ p = 1`.
pub const PROBABILITY_TOL: f64 = 1e-12;
/// Tolerance on stationarity of a supplied base distribution.
pub const STATIONARITY_TOL: f64 = 1e-9;
/// Relative tolerance when matching an atom with its inverse.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Input description of one atom of `μ`.
#[derive(Clone, Debug)]
pub struct AtomSpec {
    pub probability: f64,
    /// Image of each state; `None` is the identity map.
    pub base_map: Option<Vec<usize>>,
    /// One matrix per state, or a single matrix shared by all states.
    pub matrices: Vec<Mat>,
}

#[derive(Clone, Debug)]
struct Atom {
    probability: f64,
    base_map: Vec<usize>,
    inverse_map: Vec<usize>,
    matrices: Vec<GroupElement>,
    inverses: Vec<Mat>,
}

/// Validated cocycle system. Immutable once built and cheap to share by reference.
#[derive(Clone, Debug)]
pub struct CocycleSystem {
    n: usize,
    states: Vec<String>,
    atoms: Vec<Atom>,
    cumulative: Vec<f64>,
    base_distribution: Vec<f64>,
    inverse_atom: Vec<Option<usize>>,
}

impl CocycleSystem {
    /// Builds and validates a system.
    ///
    /// `allow_asymmetric` skips the symmetry requirement on `μ`; everything else is
    /// always checked. Without an explicit base distribution the uniform one is used,
    /// which is stationary because base maps are bijections.
    pub fn new(
        n: usize,
        states: Vec<String>,
        atoms: Vec<AtomSpec>,
        base_distribution: Option<Vec<f64>>,
        allow_asymmetric: bool,
    ) -> Result<Self> {
        let bad = |msg: String| Error::InvalidSystem(msg);
        if n < 2 {
            return Err(bad(format!("matrix dimension must be at least 2, got {n}")));
        }
        let ns = states.len();
        if ns == 0 {
            return Err(bad("at least one state is required".into()));
        }
        if atoms.is_empty() {
            return Err(bad("at least one atom is required".into()));
        }
        let mut total = 0.0;
        let mut built = Vec::with_capacity(atoms.len());
        for (a, spec) in atoms.into_iter().enumerate() {
            if !(spec.probability > 0.0) || !spec.probability.is_finite() {
                return Err(bad(format!("atom {a}: probabilities must be positive, got {}", spec.probability)));
            }
            total += spec.probability;
            let base_map = spec.base_map.unwrap_or_else(|| (0..ns).collect());
            if base_map.len() != ns {
                return Err(bad(format!("atom {a}: base map has {} entries for {ns} states", base_map.len())));
            }
            let mut inverse_map = vec![usize::MAX; ns];
            for (x, &y) in base_map.iter().enumerate() {
                if y >= ns || inverse_map[y] != usize::MAX {
                    return Err(bad(format!("atom {a}: base map must be a permutation of the states")));
                }
                inverse_map[y] = x;
            }
            let mats = match spec.matrices.len() {
                1 => vec![spec.matrices[0].clone(); ns],
                l if l == ns => spec.matrices,
                l => return Err(bad(format!("atom {a}: {l} matrices for {ns} states"))),
            };
            let mut matrices = Vec::with_capacity(ns);
            for (x, m) in mats.into_iter().enumerate() {
                if m.rows() != n || m.cols() != n {
                    return Err(bad(format!("atom {a}, state {x}: matrix is {}x{}, expected {n}x{n}", m.rows(), m.cols())));
                }
                let g = GroupElement::new(m).map_err(|e| bad(format!("atom {a}, state {x}: {e}")))?;
                matrices.push(g);
            }
            let inverses = matrices.iter().map(|g| g.inverse().into_matrix()).collect();
            built.push(Atom { probability: spec.probability, base_map, inverse_map, matrices, inverses });
        }
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(bad(format!("atom probabilities must sum to 1 within 1e-12, got {total}")));
        }

        let base_distribution = match base_distribution {
            None => vec![1.0 / ns as f64; ns],
            Some(d) => {
                check_base_distribution(&d, &built)?;
                d
            }
        };

        let inverse_atom: Vec<Option<usize>> = (0..built.len()).map(|a| find_inverse(&built, a)).collect();
        if !allow_asymmetric {
            if let Some(a) = inverse_atom.iter().position(Option::is_none) {
                return Err(bad(format!(
                    "measure must be symmetric: atom {a} has no atom of equal probability carrying its inverse"
                )));
            }
        }

        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = built.iter().map(|a| { acc += a.probability / total; acc }).collect();
        *cumulative.last_mut().expect("nonempty") = 1.0;
        Ok(Self { n, states, atoms: built, cumulative, base_distribution, inverse_atom })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn probability(&self, atom: usize) -> f64 {
        self.atoms[atom].probability
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.probability).collect()
    }

    pub fn base_distribution(&self) -> &[f64] {
        &self.base_distribution
    }

    /// `g(x)`.
    pub fn image(&self, atom: usize, x: usize) -> usize {
        self.atoms[atom].base_map[x]
    }

    /// `g^{-1}(y)`.
    pub fn preimage(&self, atom: usize, y: usize) -> usize {
        self.atoms[atom].inverse_map[y]
    }

    /// `A(g, x)`.
    pub fn matrix(&self, atom: usize, x: usize) -> &GroupElement {
        &self.atoms[atom].matrices[x]
    }

    /// `A(g, x)^{-1}`.
    pub fn inverse_matrix(&self, atom: usize, x: usize) -> &Mat {
        &self.atoms[atom].inverses[x]
    }

    /// Index of the atom carrying the inverse of `atom`, if any.
    pub fn inverse_atom(&self, atom: usize) -> Option<usize> {
        self.inverse_atom[atom]
    }

    pub fn is_symmetric(&self) -> bool {
        self.inverse_atom.iter().all(Option::is_some)
    }

    /// Cumulative atom probabilities, for categorical sampling.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Forward step: `(A(g, x), g(x))`.
    pub fn step_forward(&self, atom: usize, x: usize) -> (&Mat, usize) {
        let a = &self.atoms[atom];
        (a.matrices[x].matrix(), a.base_map[x])
    }

    /// Backward step: `(A(g, g^{-1}y)^{-1}, g^{-1}y)`.
    pub fn step_backward(&self, atom: usize, y: usize) -> (&Mat, usize) {
        let a = &self.atoms[atom];
        let prev = a.inverse_map[y];
        (&a.inverses[prev], prev)
    }

    pub fn check_state(&self, x: usize) -> Result<()> {
        if x >= self.n_states() {
            Err(Error::InvalidInput(format!("state {x} out of range (system has {} states)", self.n_states())))
        } else {
            Ok(())
        }
    }

    /// Draws a state from the base distribution.
    pub fn sample_state(&self, rng: &mut Stream) -> usize {
        if self.n_states() == 1 {
            return 0;
        }
        let mut acc = 0.0;
        let cum: Vec<f64> = self.base_distribution.iter().map(|p| { acc += p; acc }).collect();
        rng.categorical(&cum)
    }
}

fn check_base_distribution(d: &[f64], atoms: &[Atom]) -> Result<()> {
    let ns = atoms[0].base_map.len();
    if d.len() != ns {
        return Err(Error::InvalidSystem(format!("base distribution has {} entries for {ns} states", d.len())));
    }
    if d.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidSystem("base distribution must be non-negative".into()));
    }
    let s: f64 = d.iter().sum();
    if (s - 1.0).abs() > PROBABILITY_TOL {
        return Err(Error::InvalidSystem(format!("base distribution must sum to 1, got {s}")));
    }
    let mut pushed = vec![0.0; ns];
    for a in atoms {
        for (x, &y) in a.base_map.iter().enumerate() {
            pushed[y] += a.probability * d[x];
        }
    }
    for (y, (p, q)) in pushed.iter().zip(d).enumerate() {
        if (p - q).abs() > STATIONARITY_TOL {
            return Err(Error::InvalidSystem(format!(
                "base distribution is not stationary for the base chain at state {y} ({q} vs {p})"
            )));
        }
    }
    Ok(())
}

fn find_inverse(atoms: &[Atom], a: usize) -> Option<usize> {
    let atom = &atoms[a];
    (0..atoms.len()).find(|&b| {
        let cand = &atoms[b];
        if (cand.probability - atom.probability).abs() > PROBABILITY_TOL || cand.base_map != atom.inverse_map {
            return false;
        }
        // A(b, y) must equal A(a, b(y))^{-1} for every y.
        (0..cand.base_map.len()).all(|y| {
            let target = &atom.inverses[cand.base_map[y]];
            let scale = target.max_abs().max(1.0);
            cand.matrices[y].matrix().max_abs_diff(target) <= SYMMETRY_TOL * scale
        })
    })
}

/// How the atoms of a [`Word`] are read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Orientation {
    /// `atoms = [u_1, u_2, …]`.
    Forward,
    /// `atoms = [v_0, v_1, …]`.
    Backward,
    /// `atoms = [v_{origin−1}, …, v_0, u_1, u_2, …]`: the past sits left of `origin`.
    TwoSided { origin: usize },
}

/// Finite piece of a one- or two-sided sequence of atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Word {
    atoms: Vec<usize>,
    orientation: Orientation,
}

impl Word {
    pub fn new(atoms: Vec<usize>, orientation: Orientation, n_atoms: usize) -> Result<Self> {
        if let Some(&a) = atoms.iter().find(|&&a| a >= n_atoms) {
            return Err(Error::IndexOutOfRange { index: a, max: n_atoms.saturating_sub(1) });
        }
        if let Orientation::TwoSided { origin } = orientation {
            if origin > atoms.len() {
                return Err(Error::InvalidInput(format!("origin {origin} beyond word length {}", atoms.len())));
            }
        }
        Ok(Self { atoms, orientation })
    }

    pub fn forward(atoms: Vec<usize>) -> Self {
        Self { atoms, orientation: Orientation::Forward }
    }

    pub fn backward(atoms: Vec<usize>) -> Self {
        Self { atoms, orientation: Orientation::Backward }
    }

    pub fn atoms(&self) -> &[usize] {
        &self.atoms
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `[u_1, u_2, …]`; empty for backward words.
    pub fn future(&self) -> Vec<usize> {
        match self.orientation {
            Orientation::Forward => self.atoms.clone(),
            Orientation::Backward => Vec::new(),
            Orientation::TwoSided { origin } => self.atoms[origin..].to_vec(),
        }
    }

    /// `[v_0, v_1, …]`; empty for forward words.
    pub fn past(&self) -> Vec<usize> {
        match self.orientation {
            Orientation::Forward => Vec::new(),
            Orientation::Backward => self.atoms.clone(),
            Orientation::TwoSided { origin } => self.atoms[..origin].iter().rev().copied().collect(),
        }
    }

    /// Two-sided word seen from time `m` (the origin moved `m` steps into the future,
    /// or into the past for negative `m`).
    pub fn shifted(&self, m: isize) -> Result<Word> {
        match self.orientation {
            Orientation::TwoSided { origin } => {
                let o = origin as isize + m;
                if o < 0 || o as usize > self.atoms.len() {
                    return Err(Error::InvalidInput("shift moves the origin outside the word".into()));
                }
                Ok(Word { atoms: self.atoms.clone(), orientation: Orientation::TwoSided { origin: o as usize } })
            }
            _ => Err(Error::InvalidInput("only two-sided words can be shifted".into())),
        }
    }
}

fn draw_atoms(system: &CocycleSystem, seed: u64, trial: u64, domain: Domain, len: usize) -> Vec<usize> {
    let mut rng = Stream::new(seed, trial, domain, 0);
    let cum = system.cumulative();
    (0..len).map(|_| if cum.len() == 1 { 0 } else { rng.categorical(cum) }).collect()
}

/// Samples a word of `length` atoms i.i.d. from `μ`.
///
/// Future atoms come from the forward stream and past atoms from the backward stream
/// of `(seed, trial)`, so the future half of a two-sided word coincides with the
/// forward word drawn from the same seed and trial.
pub fn sample_word(system: &CocycleSystem, seed: u64, trial: u64, length: usize, orientation: Orientation) -> Word {
    let atoms = match orientation {
        Orientation::Forward => draw_atoms(system, seed, trial, Domain::Forward, length),
        Orientation::Backward => draw_atoms(system, seed, trial, Domain::Backward, length),
        Orientation::TwoSided { origin } => {
            let origin = origin.min(length);
            let mut past = draw_atoms(system, seed, trial, Domain::Backward, origin);
            past.reverse();
            past.extend(draw_atoms(system, seed, trial, Domain::Forward, length - origin));
            past
        }
    };
    Word { atoms, orientation }
}

/// `Q · diag(e^L) · U` representation of a product, `Q` orthogonal, `U` unit upper
/// triangular. Log-diagonal entries grow linearly with the number of steps while
/// every stored number stays representable.
#[derive(Clone, Debug)]
pub struct ProductAccumulator {
    q: Mat,
    log_diag: Vec<f64>,
    upper: Mat,
    steps: usize,
    state: Option<usize>,
    period: usize,
    pending: Mat,
    pending_steps: usize,
}

impl ProductAccumulator {
    /// Identity accumulator with QR renormalisation after every step.
    pub fn identity(n: usize) -> Self {
        Self::with_period(n, 1)
    }

    /// Identity accumulator renormalising every `period` steps.
    pub fn with_period(n: usize, period: usize) -> Self {
        Self {
            q: Mat::identity(n),
            log_diag: vec![0.0; n],
            upper: Mat::identity(n),
            steps: 0,
            state: None,
            period: period.max(1),
            pending: Mat::identity(n),
            pending_steps: 0,
        }
    }

    /// Identity accumulator whose base point is tracked from `x0`.
    pub fn at_state(n: usize, x0: usize) -> Self {
        let mut a = Self::identity(n);
        a.state = Some(x0);
        a
    }

    /// Accumulator representing an arbitrary invertible starting matrix.
    pub fn from_matrix(m: &Mat) -> Self {
        let mut a = Self::identity(m.rows());
        a.absorb(m);
        a.steps = 0;
        a
    }

    pub fn dim(&self) -> usize {
        self.q.rows()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn state(&self) -> Option<usize> {
        self.state
    }

    pub fn set_state(&mut self, state: Option<usize>) {
        self.state = state;
    }

    /// Left-multiplies the product by `m`.
    pub fn advance(&mut self, m: &Mat) {
        self.steps += 1;
        if self.period == 1 {
            self.absorb(m);
            return;
        }
        self.pending = m.matmul(&self.pending);
        self.pending_steps += 1;
        if self.pending_steps >= self.period {
            self.flush();
        }
    }

    /// One forward step of the cocycle from the tracked state.
    pub fn advance_forward(&mut self, system: &CocycleSystem, atom: usize) {
        let x = self.state.expect("accumulator does not track a state");
        let (m, next) = system.step_forward(atom, x);
        self.advance(m);
        self.state = Some(next);
    }

    /// One backward step of the cocycle from the tracked state.
    pub fn advance_backward(&mut self, system: &CocycleSystem, atom: usize) {
        let y = self.state.expect("accumulator does not track a state");
        let (m, prev) = system.step_backward(atom, y);
        self.advance(m);
        self.state = Some(prev);
    }

    fn flush(&mut self) {
        if self.pending_steps > 0 {
            let n = self.dim();
            let p = core::mem::replace(&mut self.pending, Mat::identity(n));
            self.pending_steps = 0;
            self.absorb(&p);
        }
    }

    fn absorb(&mut self, m: &Mat) {
        let n = self.dim();
        let f = linalg::qr(&m.matmul(&self.q));
        let d: Vec<f64> = (0..n).map(|i| f.r[(i, i)]).collect();
        // Graded update: U_new = (D⁻¹ U' D) U, U' = D'⁻¹ R'.
        let mut conj = Mat::identity(n);
        for i in 0..n {
            for j in i + 1..n {
                let u = f.r[(i, j)] / d[i];
                conj[(i, j)] = u * math::exp(self.log_diag[j] - self.log_diag[i]);
            }
        }
        self.upper = conj.matmul(&self.upper);
        for (l, di) in self.log_diag.iter_mut().zip(&d) {
            *l += math::ln(*di);
        }
        self.q = f.q;
    }

    fn settled(&self) -> alloc::borrow::Cow<'_, Self> {
        if self.pending_steps == 0 {
            alloc::borrow::Cow::Borrowed(self)
        } else {
            let mut c = self.clone();
            c.flush();
            alloc::borrow::Cow::Owned(c)
        }
    }

    pub fn q(&self) -> Mat {
        self.settled().q.clone()
    }

    /// Log-diagonal `L` of the triangular factor (in QR order, not sorted).
    pub fn log_diagonal(&self) -> Vec<f64> {
        self.settled().log_diag.clone()
    }

    /// Unit upper-triangular factor `U`.
    pub fn upper(&self) -> Mat {
        self.settled().upper.clone()
    }

    /// Explicit product. Overflows for long, strongly hyperbolic words.
    pub fn reassemble(&self) -> Mat {
        let s = self.settled();
        let n = self.dim();
        let d = Mat::from_fn(n, n, |i, j| if i == j { math::exp(s.log_diag[i]) } else { 0.0 });
        s.q.matmul(&d).matmul(&s.upper)
    }

    /// Log singular values of the product, non-increasing.
    ///
    /// Computed from `ω_k = log σ_1(∧^k(DU))`, the entries of `∧^k` being scaled
    /// minors, so no product entry is ever formed.
    pub fn a_log(&self) -> Vec<f64> {
        let s = self.settled();
        let n = self.dim();
        let mut omega = vec![0.0; n + 1];
        for k in 1..n {
            omega[k] = log_top_wedge(&s.log_diag, &s.upper, k);
        }
        omega[n] = s.log_diag.iter().sum();
        let mut a: Vec<f64> = (0..n).map(|k| omega[k + 1] - omega[k]).collect();
        // Rounding may leave adjacent near-equal values out of order.
        for i in 1..n {
            if a[i] > a[i - 1] {
                a[i] = a[i - 1];
            }
        }
        a
    }

    /// Row permutation sorting `L` in non-increasing order (stable).
    pub fn grading(&self) -> Vec<usize> {
        let l = self.log_diagonal();
        let mut idx: Vec<usize> = (0..l.len()).collect();
        idx.sort_by(|&a, &b| l[b].partial_cmp(&l[a]).unwrap_or(core::cmp::Ordering::Equal));
        idx
    }

    /// Orthonormal basis `f_1, …, f_n` (columns) of the domain, ordered from the
    /// fastest to the slowest growth: Gram–Schmidt of the rows of `U` taken in order of
    /// decreasing `L`. Up to errors of order `e^{−gap · n}` these are the right
    /// singular vectors of the product, so trailing spans are the slow subspaces.
    pub fn fast_first_basis(&self) -> Mat {
        self.fast_first_factor().0
    }

    /// `(F, T, order)` with `F` from [`fast_first_basis`](Self::fast_first_basis),
    /// `order` the grading and `T` lower triangular such that row `order[j]` of `U` is
    /// `Σ_i T[j][i] f_iᵀ`.
    pub fn fast_first_factor(&self) -> (Mat, Mat, Vec<usize>) {
        let u = self.upper();
        let order = self.grading();
        let rows = Mat::from_fn(self.dim(), self.dim(), |i, j| u[(order[j], i)]);
        let f = linalg::qr(&rows);
        (f.q, f.r.transpose(), order)
    }
}

/// `log σ_1(∧^k(diag(e^L) U))`.
fn log_top_wedge(log_diag: &[f64], upper: &Mat, k: usize) -> f64 {
    let n = log_diag.len();
    let sets = linalg::subsets(n, k);
    let logs: Vec<f64> = sets.iter().map(|s| s.iter().map(|&i| log_diag[i]).sum()).collect();
    let c = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m = sets.len();
    let mut w = Mat::zeros(m, m);
    for (a, s) in sets.iter().enumerate() {
        let scale = math::exp(logs[a] - c);
        if scale == 0.0 {
            continue;
        }
        let sub = upper.select_rows(s);
        for (b, t) in sets.iter().enumerate() {
            w[(a, b)] = scale * linalg::lu_det(&sub.select_cols(t));
        }
    }
    c + math::ln(linalg::svd(&w).s[0])
}

/// `A^n(u, x0)` for the future part of `word`.
pub fn forward_product(system: &CocycleSystem, word: &Word, x0: usize) -> Result<ProductAccumulator> {
    if word.orientation() == Orientation::Backward {
        return Err(Error::InvalidInput("forward_product needs a forward or two-sided word".into()));
    }
    system.check_state(x0)?;
    let mut acc = ProductAccumulator::at_state(system.dim(), x0);
    for a in word.future() {
        acc.advance_forward(system, a);
    }
    Ok(acc)
}

/// `A^{−n}(v, y0)` for the past part of `word`.
pub fn backward_product(system: &CocycleSystem, word: &Word, y0: usize) -> Result<ProductAccumulator> {
    if word.orientation() == Orientation::Forward {
        return Err(Error::InvalidInput("backward_product needs a backward or two-sided word".into()));
    }
    system.check_state(y0)?;
    let mut acc = ProductAccumulator::at_state(system.dim(), y0);
    for a in word.past() {
        acc.advance_backward(system, a);
    }
    Ok(acc)
}

/// Base trajectory `x_0, x_1, …, x_n` along `atoms`.
pub fn base_path(system: &CocycleSystem, atoms: &[usize], x0: usize) -> Vec<usize> {
    let mut path = Vec::with_capacity(atoms.len() + 1);
    let mut x = x0;
    path.push(x);
    for &a in atoms {
        x = system.image(a, x);
        path.push(x);
    }
    path
}
