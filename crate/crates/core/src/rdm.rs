//! Spin-summed active-space reduced density matrices.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chem_io::ActiveHamiltonian;
use crate::error::{Error, Result};
use crate::fermion::RdmIndex;

/// `one[(t, u)] = sum_s <a+_ts a_us>`; `two(t, u, v, w) = sum_st <a+_ts a+_vt a_wt a_us>`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RdmPair {
    pub n: usize,
    #[serde(serialize_with = "ser_matrix")]
    pub one: DMatrix<f64>,
    #[serde(skip)]
    pub two: Vec<f64>,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(s)
}

impl RdmPair {
    pub fn zeros(n: usize) -> RdmPair {
        RdmPair { n, one: DMatrix::zeros(n, n), two: vec![0.0; n * n * n * n] }
    }

    #[inline]
    pub fn two(&self, t: usize, u: usize, v: usize, w: usize) -> f64 {
        self.two[((t * self.n + u) * self.n + v) * self.n + w]
    }

    pub fn trace(&self) -> f64 {
        self.one.trace()
    }

    /// `sum_i w_i R_i`.
    pub fn weighted_sum(items: &[(f64, &RdmPair)]) -> Result<RdmPair> {
        let n = items.first().map(|(_, r)| r.n).ok_or_else(|| Error::Invalid("no RDMs to average".into()))?;
        let mut out = RdmPair::zeros(n);
        for (w, r) in items {
            if r.n != n {
                return Err(Error::WidthMismatch(r.n, n));
            }
            out.one += &r.one * *w;
            for (a, b) in out.two.iter_mut().zip(&r.two) {
                *a += w * b;
            }
        }
        Ok(out)
    }

    /// Builds the spin-summed matrices from canonical spin-orbital elements;
    /// missing elements are zero.
    pub fn from_elements(n_active: usize, values: &BTreeMap<RdmIndex, f64>) -> RdmPair {
        let nm = 2 * n_active;
        let mut d1 = vec![0.0; nm * nm];
        let mut d2 = vec![0.0; nm * nm * nm * nm];
        let i2 = |p: usize, q: usize, r: usize, s: usize| ((p * nm + q) * nm + r) * nm + s;
        for (&idx, &v) in values {
            match idx {
                RdmIndex::One(p, q) => {
                    d1[p * nm + q] = v;
                    d1[q * nm + p] = v;
                }
                RdmIndex::Two(p, q, r, s) => {
                    for (a, b, c, d) in [(p, q, r, s), (r, s, p, q)] {
                        d2[i2(a, b, c, d)] = v;
                        d2[i2(b, a, c, d)] = -v;
                        d2[i2(a, b, d, c)] = -v;
                        d2[i2(b, a, d, c)] = v;
                    }
                }
            }
        }
        let n = n_active;
        let mut out = RdmPair::zeros(n);
        for t in 0..n {
            for u in 0..n {
                out.one[(t, u)] = d1[t * nm + u] + d1[(n + t) * nm + n + u];
            }
        }
        out.one = (&out.one + out.one.transpose()) * 0.5;
        for t in 0..n {
            for u in 0..n {
                for v in 0..n {
                    for w in 0..n {
                        let mut acc = 0.0;
                        for s1 in [0, n] {
                            for s2 in [0, n] {
                                acc += d2[i2(t + s1, v + s2, u + s1, w + s2)];
                            }
                        }
                        out.two[((t * n + u) * n + v) * n + w] = acc;
                    }
                }
            }
        }
        out
    }
}

/// `e_const + sum h_eff gamma + 1/2 sum (tu|vw) Gamma`.
pub fn rdm_energy(ah: &ActiveHamiltonian, rdm: &RdmPair) -> Result<f64> {
    let n = ah.h_eff.nrows();
    if rdm.n != n {
        return Err(Error::WidthMismatch(rdm.n, n));
    }
    let mut e = ah.e_const;
    for t in 0..n {
        for u in 0..n {
            e += ah.h_eff[(t, u)] * rdm.one[(t, u)];
        }
    }
    for t in 0..n {
        for u in 0..n {
            for v in 0..n {
                for w in 0..n {
                    e += 0.5 * ah.v_act.get(t, u, v, w) * rdm.two(t, u, v, w);
                }
            }
        }
    }
    Ok(e)
}
