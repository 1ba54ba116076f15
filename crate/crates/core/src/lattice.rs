//! Coupled fixed points of multivalued mixed-monotone operators on finite
//! products of chains, checked exhaustively.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// The order interval `[alpha, beta]` in a product of chains `{0..d_1-1} x ...`,
/// ordered componentwise. Elements are addressed by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteLattice {
    dims: Vec<usize>,
    alpha: Vec<usize>,
    beta: Vec<usize>,
    elements: Vec<Vec<usize>>,
    strides: Vec<usize>,
}

impl FiniteLattice {
    pub fn new(dims: Vec<usize>, alpha: Vec<usize>, beta: Vec<usize>) -> Result<Self> {
        let bad = |m: &str| Error::InvalidOperator(m.to_string());
        if dims.is_empty() || dims.contains(&0) {
            return Err(bad("every chain needs at least one element"));
        }
        if alpha.len() != dims.len() || beta.len() != dims.len() {
            return Err(bad("alpha and beta must have one coordinate per chain"));
        }
        if (0..dims.len()).any(|k| alpha[k] > beta[k] || beta[k] >= dims[k]) {
            return Err(bad("need alpha <= beta inside the chains"));
        }
        let sizes: Vec<usize> = (0..dims.len()).map(|k| beta[k] - alpha[k] + 1).collect();
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * sizes[k + 1];
        }
        let total: usize = sizes.iter().product();
        let elements = (0..total)
            .map(|mut i| {
                (0..dims.len())
                    .map(|k| {
                        let c = i / strides[k];
                        i %= strides[k];
                        alpha[k] + c
                    })
                    .collect()
            })
            .collect();
        Ok(FiniteLattice { dims, alpha, beta, elements, strides })
    }

    /// The whole product `{0..d_1-1} x ...`.
    pub fn full(dims: Vec<usize>) -> Result<Self> {
        let alpha = vec![0; dims.len()];
        let beta = dims.iter().map(|d| d.saturating_sub(1)).collect();
        Self::new(dims, alpha, beta)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, i: usize) -> &[usize] {
        &self.elements[i]
    }

    pub fn index_of(&self, tuple: &[usize]) -> Option<usize> {
        if tuple.len() != self.dims.len() {
            return None;
        }
        let mut i = 0;
        for k in 0..tuple.len() {
            if tuple[k] < self.alpha[k] || tuple[k] > self.beta[k] {
                return None;
            }
            i += (tuple[k] - self.alpha[k]) * self.strides[k];
        }
        Some(i)
    }

    pub fn bottom(&self) -> usize {
        0
    }

    pub fn top(&self) -> usize {
        self.len() - 1
    }

    pub fn leq(&self, i: usize, j: usize) -> bool {
        self.elements[i].iter().zip(&self.elements[j]).all(|(a, b)| a <= b)
    }

    pub fn meet(&self, i: usize, j: usize) -> usize {
        let t: Vec<usize> = self.elements[i].iter().zip(&self.elements[j]).map(|(a, b)| *a.min(b)).collect();
        self.index_of(&t).expect("meet stays in the interval")
    }

    pub fn join(&self, i: usize, j: usize) -> usize {
        let t: Vec<usize> = self.elements[i].iter().zip(&self.elements[j]).map(|(a, b)| *a.max(b)).collect();
        self.index_of(&t).expect("join stays in the interval")
    }

    /// Elements covering `i` (one coordinate raised by one).
    pub fn covers(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dims.len()).filter(move |&k| self.elements[i][k] < self.beta[k]).map(move |k| i + self.strides[k])
    }
}

/// `A(v, w)` for every pair, stored as its sorted members; the first member
/// is the min selection `A_*` and the last the max selection `A^*`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMultiOp {
    lattice: FiniteLattice,
    members: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Witness {
    /// `selection` fails to rise when `v` (argument 1) or to fall when `w` (argument 2) moves up to `cover`.
    MonotonicityViolation { selection: String, argument: usize, v: Vec<usize>, w: Vec<usize>, cover: Vec<usize> },
    /// The set `{(v, w) : A_*(v, w) <= v, A^*(w, v) >= w}` has no minimum for the order
    /// `(v, w) <= (v', w')` iff `v <= v'` and `w >= w'`.
    NoMinimum { candidate: (Vec<usize>, Vec<usize>), not_below: (Vec<usize>, Vec<usize>) },
    /// The enumerated coupled fixed points have no extremal pair.
    NoExtremal { candidate: (Vec<usize>, Vec<usize>) },
    /// Iteration, extremal pair and minimum disagree.
    Mismatch { iteration: (Vec<usize>, Vec<usize>), extremal: (Vec<usize>, Vec<usize>), minimum: (Vec<usize>, Vec<usize>) },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacterizationReport {
    pub holds: bool,
    pub fixed_points: usize,
    pub d_size: usize,
    pub iteration_steps: usize,
    pub result: Option<(Vec<usize>, Vec<usize>)>,
    pub witness: Option<Witness>,
}

impl FiniteMultiOp {
    /// Every member list must be nonempty, sorted by index and inside the interval.
    pub fn new(lattice: FiniteLattice, members: Vec<Vec<usize>>) -> Result<Self> {
        let m = lattice.len();
        if members.len() != m * m {
            return Err(Error::InvalidOperator(format!("need {} member sets, got {}", m * m, members.len())));
        }
        for (p, s) in members.iter().enumerate() {
            if s.is_empty() || s.iter().any(|&z| z >= m) {
                return Err(Error::InvalidOperator(format!("member set {p} is empty or out of range")));
            }
            let (lo, hi) = (s[0], s[s.len() - 1]);
            if s.windows(2).any(|w| w[0] >= w[1]) || !s.iter().all(|&z| lattice.leq(lo, z) && lattice.leq(z, hi)) {
                return Err(Error::InvalidOperator(format!("member set {p} has no min and max at its ends")));
            }
        }
        Ok(FiniteMultiOp { lattice, members })
    }

    /// `A(v, w) = {lower(v, w), upper(v, w)}` from tuple maps.
    pub fn from_selections(
        lattice: FiniteLattice,
        lower: impl Fn(&[usize], &[usize]) -> Vec<usize>,
        upper: impl Fn(&[usize], &[usize]) -> Vec<usize>,
    ) -> Result<Self> {
        let m = lattice.len();
        let mut members = Vec::with_capacity(m * m);
        for v in 0..m {
            for w in 0..m {
                let idx = |t: Vec<usize>| {
                    lattice.index_of(&t).ok_or_else(|| Error::InvalidOperator(format!("{t:?} lies outside [alpha, beta]")))
                };
                let lo = idx(lower(lattice.element(v), lattice.element(w)))?;
                let hi = idx(upper(lattice.element(v), lattice.element(w)))?;
                if !lattice.leq(lo, hi) {
                    return Err(Error::InvalidOperator("min selection exceeds max selection".into()));
                }
                members.push(if lo == hi { vec![lo] } else { vec![lo, hi] });
            }
        }
        Self::new(lattice, members)
    }

    pub fn lattice(&self) -> &FiniteLattice {
        &self.lattice
    }

    fn pair(&self, v: usize, w: usize) -> usize {
        v * self.lattice.len() + w
    }

    pub fn members(&self, v: usize, w: usize) -> &[usize] {
        &self.members[self.pair(v, w)]
    }

    pub fn lower(&self, v: usize, w: usize) -> usize {
        self.members(v, w)[0]
    }

    pub fn upper(&self, v: usize, w: usize) -> usize {
        *self.members(v, w).last().expect("nonempty")
    }

    pub fn contains(&self, v: usize, w: usize, z: usize) -> bool {
        self.members(v, w).binary_search(&z).is_ok()
    }

    fn tuple_pair(&self, v: usize, w: usize) -> (Vec<usize>, Vec<usize>) {
        (self.lattice.element(v).to_vec(), self.lattice.element(w).to_vec())
    }

    /// Checks both selections on all covering pairs in each argument.
    pub fn audit(&self) -> Option<Witness> {
        let lat = &self.lattice;
        let m = lat.len();
        let sels: [(&str, fn(&Self, usize, usize) -> usize); 2] = [("A_*", Self::lower), ("A^*", Self::upper)];
        for v in 0..m {
            for w in 0..m {
                for (name, sel) in sels {
                    let here = sel(self, v, w);
                    for c in lat.covers(v) {
                        if !lat.leq(here, sel(self, c, w)) {
                            return Some(Witness::MonotonicityViolation {
                                selection: name.into(),
                                argument: 1,
                                v: lat.element(v).to_vec(),
                                w: lat.element(w).to_vec(),
                                cover: lat.element(c).to_vec(),
                            });
                        }
                    }
                    for c in lat.covers(w) {
                        if !lat.leq(sel(self, v, c), here) {
                            return Some(Witness::MonotonicityViolation {
                                selection: name.into(),
                                argument: 2,
                                v: lat.element(v).to_vec(),
                                w: lat.element(w).to_vec(),
                                cover: lat.element(c).to_vec(),
                            });
                        }
                    }
                }
            }
        }
        None
    }

    /// All `(v, w)` with `v in A(v, w)` and `w in A(w, v)`.
    pub fn enumerate_coupled_fixed_points(&self) -> Vec<(usize, usize)> {
        let m = self.lattice.len();
        (0..m)
            .flat_map(|v| (0..m).map(move |w| (v, w)))
            .filter(|&(v, w)| self.contains(v, w, v) && self.contains(w, v, w))
            .collect()
    }

    /// `v_{n+1} = A_*(v_n, w_n)`, `w_{n+1} = A^*(w_n, v_n)` from `(alpha, beta)` until stationary.
    pub fn iterate_theorem21(&self) -> Result<((usize, usize), Vec<(usize, usize)>)> {
        if let Some(w) = self.audit() {
            return Err(Error::InvalidOperator(format!("{w:?}")));
        }
        let lat = &self.lattice;
        let mut trace = vec![(lat.bottom(), lat.top())];
        loop {
            let (v, w) = *trace.last().expect("nonempty");
            let next = (self.lower(v, w), self.upper(w, v));
            if !(lat.leq(v, next.0) && lat.leq(next.1, w)) {
                return Err(Error::InvalidOperator("iteration is not monotone".into()));
            }
            if next == (v, w) {
                return Ok((next, trace));
            }
            trace.push(next);
        }
    }

    /// The `<=`-least pair of `{(v, w) : A_*(v, w) <= v and A^*(w, v) >= w}`.
    pub fn characterization_minimum(&self) -> std::result::Result<(usize, usize), Witness> {
        let lat = &self.lattice;
        let m = lat.len();
        let d: Vec<(usize, usize)> = (0..m)
            .flat_map(|v| (0..m).map(move |w| (v, w)))
            .filter(|&(v, w)| lat.leq(self.lower(v, w), v) && lat.leq(w, self.upper(w, v)))
            .collect();
        minimum_pair(lat, &d).map_err(|(c, o)| Witness::NoMinimum { candidate: self.tuple_pair(c.0, c.1), not_below: self.tuple_pair(o.0, o.1) })
    }

    pub fn verify_characterization(&self) -> CharacterizationReport {
        let lat = &self.lattice;
        let m = lat.len();
        let fixed = self.enumerate_coupled_fixed_points();
        let d_size = (0..m)
            .flat_map(|v| (0..m).map(move |w| (v, w)))
            .filter(|&(v, w)| lat.leq(self.lower(v, w), v) && lat.leq(w, self.upper(w, v)))
            .count();
        let mut rep = CharacterizationReport {
            holds: false,
            fixed_points: fixed.len(),
            d_size,
            iteration_steps: 0,
            result: None,
            witness: None,
        };
        if let Some(w) = self.audit() {
            rep.witness = Some(w);
            return rep;
        }
        let (it, trace) = match self.iterate_theorem21() {
            Ok(r) => r,
            Err(_) => return rep,
        };
        rep.iteration_steps = trace.len() - 1;
        let extremal = match extremal_pair(lat, &fixed) {
            Some(p) => p,
            None => {
                rep.witness = Some(Witness::NoExtremal { candidate: self.tuple_pair(it.0, it.1) });
                return rep;
            }
        };
        let minimum = match self.characterization_minimum() {
            Ok(p) => p,
            Err(w) => {
                rep.witness = Some(w);
                return rep;
            }
        };
        if it == extremal && extremal == minimum {
            rep.holds = true;
            rep.result = Some(self.tuple_pair(it.0, it.1));
        } else {
            rep.witness = Some(Witness::Mismatch {
                iteration: self.tuple_pair(it.0, it.1),
                extremal: self.tuple_pair(extremal.0, extremal.1),
                minimum: self.tuple_pair(minimum.0, minimum.1),
            });
        }
        rep
    }

    /// Breaks mixed monotonicity at one pair by sending it to `{beta}`.
    pub fn inject_violation(&mut self) -> bool {
        let lat = self.lattice.clone();
        let m = lat.len();
        let top = lat.top();
        for v in 0..m {
            for w in 0..m {
                if lat.covers(v).any(|c| self.lower(c, w) != top) {
                    let p = self.pair(v, w);
                    self.members[p] = vec![top];
                    return true;
                }
            }
        }
        false
    }
}

/// Componentwise comparison `(v, w) <= (v', w')` iff `v <= v'` and `w >= w'`.
fn below(lat: &FiniteLattice, p: (usize, usize), q: (usize, usize)) -> bool {
    lat.leq(p.0, q.0) && lat.leq(q.1, p.1)
}

/// The `<=`-minimum of `set`, or (candidate, element it fails to lie below).
fn minimum_pair(lat: &FiniteLattice, set: &[(usize, usize)]) -> std::result::Result<(usize, usize), ((usize, usize), (usize, usize))> {
    let first = *set.first().ok_or(((lat.bottom(), lat.top()), (lat.bottom(), lat.top())))?;
    let cand = set.iter().fold(first, |acc, &p| (lat.meet(acc.0, p.0), lat.join(acc.1, p.1)));
    if !set.contains(&cand) {
        return Err((cand, first));
    }
    match set.iter().find(|&&p| !below(lat, cand, p)) {
        Some(&p) => Err((cand, p)),
        None => Ok(cand),
    }
}

/// `(v_*, w^*)` in `set` with `v_* <= v` and `w <= w^*` for all members.
pub fn extremal_pair(lat: &FiniteLattice, set: &[(usize, usize)]) -> Option<(usize, usize)> {
    minimum_pair(lat, set).ok()
}

/// A random operator whose selections are mixed monotone by construction:
/// random tables are repaired by cumulative maxima over smaller first
/// arguments and cumulative minima over smaller second arguments.
pub fn random_mixed_monotone(seed: u64, lattice: &FiniteLattice, interior_density: f64) -> FiniteMultiOp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = lattice.len();
    let table = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let raw: Vec<usize> = (0..m * m).map(|_| rng.gen_range(0..m)).collect();
        let mut up = vec![0; m * m];
        for v in 0..m {
            for w in 0..m {
                up[v * m + w] = (0..m).filter(|&u| lattice.leq(u, v)).fold(raw[v * m + w], |acc, u| lattice.join(acc, raw[u * m + w]));
            }
        }
        let mut out = vec![0; m * m];
        for v in 0..m {
            for w in 0..m {
                out[v * m + w] = (0..m).filter(|&z| lattice.leq(z, w)).fold(up[v * m + w], |acc, z| lattice.meet(acc, up[v * m + z]));
            }
        }
        out
    };
    let lower = table(&mut rng);
    let upper = table(&mut rng);
    let members = (0..m * m)
        .map(|p| {
            let lo = lower[p];
            let hi = lattice.join(upper[p], lo);
            let mut s = vec![lo];
            if interior_density > 0.0 {
                for z in 0..m {
                    if z != lo && z != hi && lattice.leq(lo, z) && lattice.leq(z, hi) && rng.gen_bool(interior_density.min(1.0)) {
                        s.push(z);
                    }
                }
            }
            if hi != lo {
                s.push(hi);
            }
            s.sort_unstable();
            s
        })
        .collect();
    FiniteMultiOp { lattice: lattice.clone(), members }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub dims: Vec<usize>,
    pub seeds: usize,
    pub passed: usize,
    pub first_failure: Option<(u64, CharacterizationReport)>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.seeds
    }
}

/// `verify_characterization` over `seeds`; with `inject`, each operator is broken first.
pub fn run_suite(seeds: &[u64], lattice: &FiniteLattice, density: f64, inject: bool) -> SuiteReport {
    let reports: Vec<(u64, CharacterizationReport)> = seeds
        .par_iter()
        .map(|&s| {
            let mut op = random_mixed_monotone(s, lattice, density);
            if inject {
                op.inject_violation();
            }
            (s, op.verify_characterization())
        })
        .collect();
    SuiteReport {
        dims: lattice.dims().to_vec(),
        seeds: reports.len(),
        passed: reports.iter().filter(|r| r.1.holds).count(),
        first_failure: reports.into_iter().find(|r| !r.1.holds),
    }
}
