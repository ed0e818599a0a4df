//! Height-bounded independence certificates and simultaneous approximation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{frac, Direction2, Direction3};

/// Residual below which an integer relation is accepted.
pub const RELATION_TOL: f64 = 1e-9;

/// Default number of candidate coefficient vectors a certificate may examine.
pub const DEFAULT_CERTIFY_BUDGET: u64 = 100_000_000;

/// Default number of multipliers `m` scanned by [`lemma34_search`].
pub const DEFAULT_SCAN_BUDGET: u64 = 10_000_000;

/// Height used for the precondition check of [`lemma34_search`].
pub const LEMMA34_CERTIFY_HEIGHT: u64 = 50;

/// Height of the certificates attached to quadratic test vectors.
pub const QUADRATIC_HEIGHT: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiophantineError {
    #[error("height {height} in dimension {dim} needs {needed} candidates, budget is {budget}")]
    HeightTooLarge {
        height: u64,
        dim: usize,
        needed: f64,
        budget: u64,
    },
    #[error("certification supports 1 to 3 components, got {0}")]
    UnsupportedDimension(usize),
    #[error("height must be at least 1")]
    InvalidHeight,
    #[error("epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("no covering list found within {scanned} multipliers")]
    BudgetExceeded { scanned: u64 },
    #[error("input list is empty")]
    EmptyInput,
    #[error("values are not a Kronecker vector: relation {coefficients:?}")]
    NotKronecker { coefficients: Vec<i64> },
    #[error("seed {0} must be an integer at least 2, distinct from the others")]
    InvalidSeed(u64),
    #[error("quadratic seeds {seeds:?} are dependent: relation {coefficients:?}")]
    CertificationFailed {
        seeds: Vec<u64>,
        coefficients: Vec<i64>,
    },
    #[error("non-finite component")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum CertificateStatus {
    NoRelationUpToH,
    /// Coefficients `(a0, a1, …, ad)` of `a0 + Σ ai·vi = 0`.
    RelationFound { coefficients: Vec<i64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KroneckerCertificate {
    pub components: Vec<f64>,
    pub height: u64,
    #[serde(flatten)]
    pub status: CertificateStatus,
}

impl KroneckerCertificate {
    pub fn is_kronecker(&self) -> bool {
        self.status == CertificateStatus::NoRelationUpToH
    }

    /// Re-evaluates a found relation; vacuously true otherwise.
    pub fn verify(&self) -> bool {
        match &self.status {
            CertificateStatus::NoRelationUpToH => true,
            CertificateStatus::RelationFound { coefficients } => {
                coefficients.len() == self.components.len() + 1
                    && coefficients.iter().skip(1).any(|&a| a != 0)
                    && coefficients.iter().all(|a| a.unsigned_abs() <= self.height)
                    && relation_residual(coefficients, &self.components) < RELATION_TOL
            }
        }
    }
}

/// `|a0 + Σ ai·vi|`.
pub fn relation_residual(coefficients: &[i64], v: &[f64]) -> f64 {
    let tail: f64 = coefficients[1..]
        .iter()
        .zip(v)
        .map(|(&a, &x)| a as f64 * x)
        .sum();
    (coefficients[0] as f64 + tail).abs()
}

/// Searches for an integer relation among `1, v1, …, vd` of height at most `height`.
///
/// The search is exhaustive when `(2H+1)^d` fits the budget: for every
/// `(a1, …, ad)` the best `a0` is the rounded negative of `Σ ai·vi`. Larger
/// heights fall back to lattice reduction, which can only exhibit relations;
/// if it finds none the height is reported as too large.
pub fn certify_kronecker(
    v: &[f64],
    height: u64,
    budget: u64,
) -> Result<KroneckerCertificate, DiophantineError> {
    let d = v.len();
    if !(1..=3).contains(&d) {
        return Err(DiophantineError::UnsupportedDimension(d));
    }
    if height == 0 {
        return Err(DiophantineError::InvalidHeight);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(DiophantineError::NonFinite);
    }
    let needed = ((2 * height + 1) as f64).powi(d as i32);
    let status = if needed <= budget as f64 {
        exhaustive_relation(v, height as i64)
    } else {
        match lll_relation(v) {
            Some(c) if c.iter().all(|a| a.unsigned_abs() <= height) => {
                CertificateStatus::RelationFound { coefficients: c }
            }
            _ => {
                return Err(DiophantineError::HeightTooLarge {
                    height,
                    dim: d,
                    needed,
                    budget,
                })
            }
        }
    };
    Ok(KroneckerCertificate {
        components: v.to_vec(),
        height,
        status,
    })
}

fn exhaustive_relation(v: &[f64], h: i64) -> CertificateStatus {
    let d = v.len();
    let mut best: Option<(i64, Vec<i64>)> = None;
    let mut a = vec![-h; d];
    loop {
        // Canonical sign: the first nonzero tail coefficient is positive.
        if let Some(&first) = a.iter().find(|&&x| x != 0) {
            if first > 0 {
                let s: f64 = a.iter().zip(v).map(|(&ai, &x)| ai as f64 * x).sum();
                let a0 = -s.round();
                if a0.abs() <= h as f64 && (a0 + s).abs() < RELATION_TOL {
                    let a0 = a0 as i64;
                    let ht = a.iter().map(|x| x.abs()).max().unwrap_or(0).max(a0.abs());
                    if best.as_ref().is_none_or(|(bh, _)| ht < *bh) {
                        let mut c = Vec::with_capacity(d + 1);
                        c.push(a0);
                        c.extend_from_slice(&a);
                        best = Some((ht, c));
                    }
                }
            }
        }
        // Odometer increment over [-h, h]^d.
        let mut i = d;
        loop {
            if i == 0 {
                return match best {
                    Some((_, coefficients)) => CertificateStatus::RelationFound { coefficients },
                    None => CertificateStatus::NoRelationUpToH,
                };
            }
            i -= 1;
            if a[i] < h {
                a[i] += 1;
                break;
            }
            a[i] = -h;
        }
    }
}

/// Integer relation candidate for `(1, v…)` via LLL reduction.
fn lll_relation(v: &[f64]) -> Option<Vec<i64>> {
    let x: Vec<f64> = std::iter::once(1.0).chain(v.iter().copied()).collect();
    let n = x.len();
    let scale = 1e10;
    let mut basis: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n + 1];
            row[i] = 1.0;
            row[n] = scale * x[i];
            row
        })
        .collect();
    lll_reduce(&mut basis, 0.75);
    basis
        .iter()
        .map(|row| row[..n].iter().map(|c| c.round() as i64).collect::<Vec<i64>>())
        .filter(|c| c[1..].iter().any(|&a| a != 0))
        .filter(|c| relation_residual(c, v) < RELATION_TOL)
        .min_by_key(|c| c.iter().map(|a| a.unsigned_abs()).max())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Textbook LLL on row vectors, recomputing Gram–Schmidt after each change.
fn lll_reduce(b: &mut [Vec<f64>], delta: f64) {
    let n = b.len();
    let gram_schmidt = |b: &[Vec<f64>]| {
        let mut bs: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut mu = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut v = b[i].clone();
            for j in 0..i {
                mu[i][j] = dot(&b[i], &bs[j]) / dot(&bs[j], &bs[j]);
                for (vk, bk) in v.iter_mut().zip(&bs[j]) {
                    *vk -= mu[i][j] * bk;
                }
            }
            bs.push(v);
        }
        (bs, mu)
    };
    let (mut bs, mut mu) = gram_schmidt(b);
    let mut k = 1;
    let mut guard = 0;
    while k < n && guard < 10_000 {
        guard += 1;
        for j in (0..k).rev() {
            let q = mu[k][j].round();
            if q != 0.0 {
                let bj = b[j].clone();
                for (x, y) in b[k].iter_mut().zip(&bj) {
                    *x -= q * y;
                }
                let r = gram_schmidt(b);
                bs = r.0;
                mu = r.1;
            }
        }
        if dot(&bs[k], &bs[k]) >= (delta - mu[k][k - 1].powi(2)) * dot(&bs[k - 1], &bs[k - 1]) {
            k += 1;
        } else {
            b.swap(k, k - 1);
            let r = gram_schmidt(b);
            bs = r.0;
            mu = r.1;
            k = (k - 1).max(1);
        }
    }
}

/// Distance to the nearest integer.
pub fn nearest_int_distance(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Largest gap between circularly consecutive points of `[0,1)`.
pub fn circular_gap(points: &[f64]) -> Result<f64, DiophantineError> {
    if points.is_empty() {
        return Err(DiophantineError::EmptyInput);
    }
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(sorted_gap(&p))
}

fn sorted_gap(p: &[f64]) -> f64 {
    let wrap = 1.0 - p[p.len() - 1] + p[0];
    p.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma34Result {
    pub epsilon: f64,
    pub m_list: Vec<u64>,
    pub k: usize,
    pub max_gap: f64,
    /// Multipliers examined before the list covered the circle.
    pub scanned: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma34Options {
    pub scan_budget: u64,
    pub certify_height: u64,
}

impl Default for Lemma34Options {
    fn default() -> Self {
        Self {
            scan_budget: DEFAULT_SCAN_BUDGET,
            certify_height: LEMMA34_CERTIFY_HEIGHT,
        }
    }
}

/// Finds `m1 < … < mk` with `‖mj·v1‖, ‖mj·v2‖ < eps` whose `{mj·w}` have
/// circular gap below `eps`, so that every arc of length `eps` is visited.
///
/// Multipliers are scanned in increasing order and kept when both
/// approximations hold; the scan stops as soon as the kept values of
/// `{m·w}` cover the circle. For `eps = 1` any single point visits the only
/// arc of length 1.
pub fn lemma34_search(
    v1: f64,
    v2: f64,
    w: f64,
    eps: f64,
    options: Lemma34Options,
) -> Result<Lemma34Result, DiophantineError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(DiophantineError::InvalidEpsilon(eps));
    }
    let cert = certify_kronecker(&[v1, v2, w], options.certify_height, DEFAULT_CERTIFY_BUDGET)?;
    if let CertificateStatus::RelationFound { coefficients } = cert.status {
        return Err(DiophantineError::NotKronecker { coefficients });
    }

    let mut m_list = Vec::new();
    let mut sorted: Vec<f64> = Vec::new();
    let min_points = (1.0 / eps).floor() as usize;
    for m in 1..=options.scan_budget {
        let mf = m as f64;
        if nearest_int_distance(mf * v1) >= eps || nearest_int_distance(mf * v2) >= eps {
            continue;
        }
        m_list.push(m);
        let z = frac(mf * w);
        let at = sorted.partition_point(|&p| p < z);
        sorted.insert(at, z);
        if sorted.len() < min_points {
            continue;
        }
        let gap = sorted_gap(&sorted);
        if gap < eps || eps >= 1.0 {
            return Ok(Lemma34Result {
                epsilon: eps,
                k: m_list.len(),
                m_list,
                max_gap: gap,
                scanned: m,
            });
        }
    }
    Err(DiophantineError::BudgetExceeded {
        scanned: options.scan_budget,
    })
}

/// Square roots of small integers with a height-100 independence certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticKronecker {
    pub seeds: Vec<u64>,
    pub components: Vec<f64>,
    pub certificate: KroneckerCertificate,
}

impl QuadraticKronecker {
    /// `(√a, √b)` from the first two seeds.
    pub fn step(&self) -> Direction2 {
        Direction2 {
            v1: self.components[0],
            v2: self.components[1],
        }
    }

    pub fn direction(&self) -> Direction3 {
        self.step().kronecker_direction()
    }

    /// Third component, the circle step `w3` of a `w`-shift.
    pub fn lift(&self) -> Option<f64> {
        self.components.get(2).copied()
    }
}

pub fn quadratic_kronecker(seeds: &[u64]) -> Result<QuadraticKronecker, DiophantineError> {
    if !(2..=3).contains(&seeds.len()) {
        return Err(DiophantineError::UnsupportedDimension(seeds.len()));
    }
    for (i, &s) in seeds.iter().enumerate() {
        if s < 2 || seeds[..i].contains(&s) {
            return Err(DiophantineError::InvalidSeed(s));
        }
    }
    let components: Vec<f64> = seeds.iter().map(|&s| (s as f64).sqrt()).collect();
    let certificate = certify_kronecker(&components, QUADRATIC_HEIGHT, DEFAULT_CERTIFY_BUDGET)?;
    if let CertificateStatus::RelationFound { coefficients } = &certificate.status {
        return Err(DiophantineError::CertificationFailed {
            seeds: seeds.to_vec(),
            coefficients: coefficients.clone(),
        });
    }
    Ok(QuadraticKronecker {
        seeds: seeds.to_vec(),
        components,
        certificate,
    })
}
