//! Per-slot entanglement supply on the user links.
//!
//! Each of the `k` users attempts `alpha_max` pair generations per slot,
//! each succeeding with probability `p_i`, so the raw count on link `i`
//! is `Binomial(alpha_max, p_i)`. Purification maps the raw count
//! through a yield law. Links are independent, so joint probabilities
//! are products of marginals and the joint state space `{0..alpha_max}^k`
//! is only ever iterated, never materialized.

use crate::purify::{binomial_pmf, YieldModel};
use crate::{pairs, par};
use thiserror::Error;

/// Marginal pmfs must sum to 1 within this tolerance.
pub const LAW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("{name} out of range: {value}")]
    BadParam { name: &'static str, value: f64 },
    #[error("{name} has length {got}, expected {expected}")]
    BadLength {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("p[{i}] = {p} is inconsistent with exp(-theta*d) = {expected}")]
    AttenuationMismatch { i: usize, p: f64, expected: f64 },
    #[error("swap matrix asymmetric at ({i},{j}): {a} vs {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("yield table covers x <= {x_max}, need {needed}")]
    YieldTooShort { x_max: usize, needed: usize },
}

/// Static link-layer parameters: user count, attempts per slot, per-link
/// generation probabilities, and the fresh-pair fidelity.
///
/// `theta` (attenuation, 1/km) and `d` (link lengths, km) are optional
/// metadata; when both are present each `p_i` must equal `exp(-theta*d_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub k: usize,
    pub alpha_max: usize,
    pub p: Vec<f64>,
    pub f_link: f64,
    pub theta: Option<f64>,
    pub d: Option<Vec<f64>>,
}

impl LinkParams {
    pub fn new(k: usize, alpha_max: usize, p: Vec<f64>, f_link: f64) -> Result<Self, LinkError> {
        let params = Self {
            k,
            alpha_max,
            p,
            f_link,
            theta: None,
            d: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_attenuation(mut self, theta: f64, d: Vec<f64>) -> Result<Self, LinkError> {
        self.theta = Some(theta);
        self.d = Some(d);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if self.k < 2 {
            return Err(LinkError::BadParam {
                name: "k",
                value: self.k as f64,
            });
        }
        if self.alpha_max < 1 {
            return Err(LinkError::BadParam {
                name: "alpha_max",
                value: self.alpha_max as f64,
            });
        }
        if self.p.len() != self.k {
            return Err(LinkError::BadLength {
                name: "p",
                expected: self.k,
                got: self.p.len(),
            });
        }
        for &pi in &self.p {
            if !pi.is_finite() || pi <= 0.0 || pi > 1.0 {
                return Err(LinkError::BadParam {
                    name: "p",
                    value: pi,
                });
            }
        }
        if !self.f_link.is_finite() || self.f_link <= 0.25 || self.f_link > 1.0 {
            return Err(LinkError::BadParam {
                name: "f_link",
                value: self.f_link,
            });
        }
        if let (Some(theta), Some(d)) = (self.theta, &self.d) {
            if !theta.is_finite() || theta < 0.0 {
                return Err(LinkError::BadParam {
                    name: "theta",
                    value: theta,
                });
            }
            if d.len() != self.k {
                return Err(LinkError::BadLength {
                    name: "d",
                    expected: self.k,
                    got: d.len(),
                });
            }
            for (i, &di) in d.iter().enumerate() {
                let expected = (-theta * di).exp();
                if (self.p[i] - expected).abs() > LAW_TOL {
                    return Err(LinkError::AttenuationMismatch {
                        i,
                        p: self.p[i],
                        expected,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Joint law of the per-link counts, stored as independent marginals
/// over `0..=alpha_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountLaw {
    marginals: Vec<Vec<f64>>,
}

impl CountLaw {
    fn new(marginals: Vec<Vec<f64>>) -> Self {
        for m in &marginals {
            debug_assert!((m.iter().sum::<f64>() - 1.0).abs() <= LAW_TOL);
        }
        Self { marginals }
    }

    pub fn k(&self) -> usize {
        self.marginals.len()
    }

    pub fn alpha_max(&self) -> usize {
        self.marginals[0].len() - 1
    }

    pub fn marginal(&self, i: usize) -> &[f64] {
        &self.marginals[i]
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.marginals[i]
            .iter()
            .enumerate()
            .map(|(a, p)| a as f64 * p)
            .sum()
    }

    /// Joint probability of the count vector `a`.
    pub fn joint(&self, a: &[usize]) -> f64 {
        debug_assert_eq!(a.len(), self.k());
        a.iter()
            .zip(&self.marginals)
            .map(|(&ai, m)| m[ai])
            .product()
    }

    /// Iterates `(a, P(a))` over states with `P(a) > p_cut`, in odometer
    /// order (last coordinate fastest). The skipped mass is the
    /// complement of the yielded total.
    pub fn states(&self, p_cut: f64) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        StateIter {
            law: self,
            current: Some(vec![0; self.k()]),
            p_cut,
        }
    }
}

struct StateIter<'a> {
    law: &'a CountLaw,
    current: Option<Vec<usize>>,
    p_cut: f64,
}

impl Iterator for StateIter<'_> {
    type Item = (Vec<usize>, f64);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let state = self.current.as_ref()?.clone();
            let prob = self.law.joint(&state);
            // Advance the odometer.
            let alpha_max = self.law.alpha_max();
            let cur = self.current.as_mut().unwrap();
            let mut pos = cur.len();
            loop {
                if pos == 0 {
                    self.current = None;
                    break;
                }
                pos -= 1;
                if cur[pos] < alpha_max {
                    cur[pos] += 1;
                    for v in &mut cur[pos + 1..] {
                        *v = 0;
                    }
                    break;
                }
            }
            if prob > self.p_cut {
                return Some((state, prob));
            }
            self.current.as_ref()?;
        }
    }
}

/// Law of the raw counts: link `i` is `Binomial(alpha_max, p_i)`.
pub fn raw_link_law(params: &LinkParams) -> CountLaw {
    CountLaw::new(
        params
            .p
            .iter()
            .map(|&pi| binomial_pmf(params.alpha_max, pi))
            .collect(),
    )
}

/// Pushes the raw law through a yield table:
/// `P(T̃ = y) = Σ_a P(Y = y | X = a) P(T = a)`.
pub fn purified_link_law(raw: &CountLaw, ym: &YieldModel) -> Result<CountLaw, LinkError> {
    let alpha_max = raw.alpha_max();
    if ym.x_max() < alpha_max {
        return Err(LinkError::YieldTooShort {
            x_max: ym.x_max(),
            needed: alpha_max,
        });
    }
    let marginals = par::map(&raw.marginals, |m| {
        let mut out = vec![0.0; alpha_max + 1];
        for (a, &pa) in m.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (y, o) in out.iter_mut().enumerate() {
                *o += pa * ym.prob(a, y);
            }
        }
        out
    });
    Ok(CountLaw::new(marginals))
}

/// Symmetric matrix of swap success probabilities `q_ij`, stored per
/// unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapMatrix {
    k: usize,
    q: Vec<f64>,
}

impl SwapMatrix {
    pub fn from_constant(k: usize, q: f64) -> Result<Self, LinkError> {
        Self::from_pair_values(k, vec![q; pairs::pair_count(k)])
    }

    pub fn from_pair_values(k: usize, q: Vec<f64>) -> Result<Self, LinkError> {
        if q.len() != pairs::pair_count(k) {
            return Err(LinkError::BadLength {
                name: "q",
                expected: pairs::pair_count(k),
                got: q.len(),
            });
        }
        for &qij in &q {
            if !qij.is_finite() || qij <= 0.0 || qij > 1.0 {
                return Err(LinkError::BadParam {
                    name: "q",
                    value: qij,
                });
            }
        }
        Ok(Self { k, q })
    }

    /// Builds from a full matrix, rejecting asymmetry; the diagonal is
    /// ignored.
    pub fn from_matrix(m: &[Vec<f64>]) -> Result<Self, LinkError> {
        let k = m.len();
        for (i, row) in m.iter().enumerate() {
            if row.len() != k {
                return Err(LinkError::BadLength {
                    name: "q",
                    expected: k,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate().skip(i + 1) {
                if v != m[j][i] {
                    return Err(LinkError::Asymmetric {
                        i,
                        j,
                        a: v,
                        b: m[j][i],
                    });
                }
            }
        }
        Self::from_pair_values(k, pairs::pairs(k).map(|(i, j)| m[i][j]).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[pairs::pair_index(self.k, i, j)]
    }

    pub fn pair_values(&self) -> &[f64] {
        &self.q
    }
}
