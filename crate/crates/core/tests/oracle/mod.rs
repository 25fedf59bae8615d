//! Dense brute-force Fock-space reference used only by tests.
//!
//! Shares no code with the sparse engine. Creation operators act on an
//! explicitly enumerated basis and linear transforms are evaluated through
//! matrix permanents, `⟨m|U|n⟩ = perm(U[m; n]) / √(Π n_i! Π m_j!)`.

#![allow(dead_code)]

use std::collections::HashMap;

use num_complex::Complex64 as C;

pub fn c(re: f64) -> C {
    C::new(re, 0.0)
}

pub struct DenseSpace {
    pub nmodes: usize,
    pub cap: u32,
    pub basis: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

fn enumerate(nmodes: usize, budget: u32, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if prefix.len() == nmodes {
        out.push(prefix.clone());
        return;
    }
    for n in 0..=budget {
        prefix.push(n as u8);
        enumerate(nmodes, budget - n, prefix, out);
        prefix.pop();
    }
}

fn fact(n: u8) -> f64 {
    (1..=n as u32).map(|k| k as f64).product()
}

/// Permanent by summing over all permutations (k ≤ 6 in practice).
pub fn permanent(m: &[Vec<C>]) -> C {
    let k = m.len();
    if k == 0 {
        return c(1.0);
    }
    let mut cols: Vec<usize> = (0..k).collect();
    let mut acc = c(0.0);
    permute(&mut cols, 0, &mut |p| {
        let mut prod = c(1.0);
        for (r, &col) in p.iter().enumerate() {
            prod *= m[r][col];
        }
        acc += prod;
    });
    acc
}

fn permute(v: &mut Vec<usize>, start: usize, f: &mut dyn FnMut(&[usize])) {
    if start == v.len() {
        f(v);
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permute(v, start + 1, f);
        v.swap(start, i);
    }
}

impl DenseSpace {
    pub fn new(nmodes: usize, cap: u32) -> Self {
        let mut basis = Vec::new();
        enumerate(nmodes, cap, &mut Vec::new(), &mut basis);
        let index = basis
            .iter()
            .enumerate()
            .map(|(i, b)| (b.clone(), i))
            .collect();
        DenseSpace {
            nmodes,
            cap,
            basis,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn idx(&self, occ: &[u8]) -> usize {
        self.index[occ]
    }

    pub fn vacuum(&self) -> Vec<C> {
        let mut v = vec![c(0.0); self.dim()];
        v[self.idx(&vec![0; self.nmodes])] = c(1.0);
        v
    }

    pub fn zero(&self) -> Vec<C> {
        vec![c(0.0); self.dim()]
    }

    /// `a†_mode v`, dropping anything above the cap.
    pub fn create(&self, mode: usize, v: &[C]) -> Vec<C> {
        let mut out = self.zero();
        for (i, occ) in self.basis.iter().enumerate() {
            if v[i] == c(0.0) {
                continue;
            }
            let mut next = occ.clone();
            next[mode] += 1;
            if let Some(&j) = self.index.get(&next) {
                out[j] += v[i] * (occ[mode] as f64 + 1.0).sqrt();
            }
        }
        out
    }

    /// `coeff · Π a†_m v`.
    pub fn monomial(&self, coeff: C, modes: &[usize], v: &[C]) -> Vec<C> {
        let mut w = v.to_vec();
        for &m in modes {
            w = self.create(m, &w);
        }
        w.iter().map(|x| x * coeff).collect()
    }

    /// `Σ coeff · Π a†_m |vac⟩`.
    pub fn polynomial_on_vacuum(&self, terms: &[(C, Vec<usize>)]) -> Vec<C> {
        let vac = self.vacuum();
        let mut acc = self.zero();
        for (coeff, modes) in terms {
            let w = self.monomial(*coeff, modes, &vac);
            for (a, b) in acc.iter_mut().zip(w) {
                *a += b;
            }
        }
        acc
    }

    /// Applies `a†_i -> Σ_j u[j][i] a†_j` on all modes via permanents.
    pub fn transform(&self, u: &[Vec<C>], v: &[C]) -> Vec<C> {
        let mut out = self.zero();
        for (i, n) in self.basis.iter().enumerate() {
            if v[i] == c(0.0) {
                continue;
            }
            let cols: Vec<usize> = n
                .iter()
                .enumerate()
                .flat_map(|(mode, &k)| std::iter::repeat(mode).take(k as usize))
                .collect();
            let total: u32 = n.iter().map(|&k| k as u32).sum();
            for (j, m) in self.basis.iter().enumerate() {
                if m.iter().map(|&k| k as u32).sum::<u32>() != total {
                    continue;
                }
                let rows: Vec<usize> = m
                    .iter()
                    .enumerate()
                    .flat_map(|(mode, &k)| std::iter::repeat(mode).take(k as usize))
                    .collect();
                let sub: Vec<Vec<C>> = rows
                    .iter()
                    .map(|&r| cols.iter().map(|&col| u[r][col]).collect())
                    .collect();
                let denom: f64 = n.iter().chain(m.iter()).map(|&k| fact(k)).product();
                out[j] += v[i] * permanent(&sub) / denom.sqrt();
            }
        }
        out
    }

    /// Keeps basis vectors whose listed modes carry exactly the given counts.
    pub fn project(&self, v: &[C], fixed: &[(usize, u8)]) -> Vec<C> {
        self.basis
            .iter()
            .zip(v)
            .map(|(occ, &a)| {
                if fixed.iter().all(|&(m, n)| occ[m] == n) {
                    a
                } else {
                    c(0.0)
                }
            })
            .collect()
    }

    pub fn norm_sqr(v: &[C]) -> f64 {
        v.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(a: &[C], b: &[C]) -> C {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }
}

/// Largest `|a - b|` over two amplitude lists.
pub fn max_diff(a: &[C], b: &[C]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
