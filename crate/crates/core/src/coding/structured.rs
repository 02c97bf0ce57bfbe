//! Structured immersion for large models.
//!
//! A dense `ñ×n` matrix is out of reach once `n` is in the hundreds of
//! thousands, so large keys use the factored form
//!
//! ```text
//! Π1 = P · diag(H_1, …, H_k) · [S; 0]        N1 = P · diag(H_1, …, H_k) · [0; I]
//! ```
//!
//! where `S` is block diagonal with small dense blocks, every `H_g` is a
//! Householder reflection acting on one group of `n_g + e_g` internal rows
//! (`n_g` rows carrying `S`, `e_g ≥ 1` kernel rows) and `P` is a row
//! permutation. Each group owns at least one kernel column, so no row of
//! `N1` is zero. Because the middle factor is orthogonal the Moore–Penrose
//! left inverse is `S⁻¹·[I 0]·diag(H_g)·Pᵀ`, and all maps cost `O(ñ·b)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub(crate) const BLOCK: usize = 16;

#[derive(Debug, Clone)]
pub(crate) struct DenseBlock {
    pub start: usize,
    pub s: DMatrix<f64>,
    pub s_inv: DMatrix<f64>,
}

impl DenseBlock {
    pub fn size(&self) -> usize {
        self.s.nrows()
    }
}

/// One Householder group: `top` rows of `S` plus `extra` kernel rows.
#[derive(Debug, Clone)]
pub(crate) struct Group {
    /// Start of this group's slice of the n-dimensional space.
    pub top_start: usize,
    pub top: usize,
    /// Start of this group's slice of the kernel coordinates.
    pub extra_start: usize,
    pub extra: usize,
    /// Start of this group's rows in internal (pre-permutation) order.
    pub offset: usize,
    /// Unit Householder vector of length `top + extra`.
    pub v: DVector<f64>,
}

impl Group {
    fn reflect(&self, y: &mut [f64]) {
        let dot: f64 = self.v.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        for (yi, vi) in y.iter_mut().zip(self.v.iter()) {
            *yi -= 2.0 * dot * vi;
        }
    }
}

#[derive(Debug, Clone)]
pub struct StructuredMap {
    pub(crate) n: usize,
    pub(crate) n_tilde: usize,
    /// `perm[internal] = external row`.
    pub(crate) perm: Vec<usize>,
    pub(crate) groups: Vec<Group>,
    pub(crate) blocks: Vec<DenseBlock>,
}

fn split_even(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let rem = total % parts;
    (0..parts).map(|i| base + usize::from(i < rem)).collect()
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

impl StructuredMap {
    /// Draws a structured map with every `S` block's condition number at most
    /// `max_condition`. Blocks are normalised to unit spectral norm, so the
    /// whole map inherits the same bound.
    pub(crate) fn generate<R: Rng + ?Sized>(
        n: usize,
        n_tilde: usize,
        max_condition: f64,
        retries: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let extra_total = n_tilde - n;
        let n_groups = extra_total.min(n);

        let mut blocks = Vec::new();
        let mut start = 0;
        while start < n {
            let size = BLOCK.min(n - start);
            let mut accepted = None;
            for _ in 0..retries {
                let s = DMatrix::<f64>::from_fn(size, size, |_, _| rng.sample(StandardNormal));
                if condition(&s) <= max_condition {
                    accepted = Some(s);
                    break;
                }
            }
            let s = accepted.ok_or_else(|| Error::GenerationFailure {
                attempts: retries,
                reason: format!("block at {start} exceeds condition bound {max_condition}"),
            })?;
            let norm = s.singular_values().max();
            let s = s / norm;
            let s_inv = s.clone().try_inverse().ok_or_else(|| Error::GenerationFailure {
                attempts: retries,
                reason: format!("singular block at {start}"),
            })?;
            blocks.push(DenseBlock { start, s, s_inv });
            start += size;
        }

        let tops = split_even(n, n_groups);
        let extras = split_even(extra_total, n_groups);
        let mut groups = Vec::with_capacity(n_groups);
        let (mut top_start, mut extra_start, mut offset) = (0, 0, 0);
        for (&top, &extra) in tops.iter().zip(&extras) {
            let len = top + extra;
            // Entries bounded away from zero: every row of N1 inside a
            // group has norm proportional to |v_i|.
            let mut v = DVector::<f64>::from_fn(len, |_, _| {
                let m: f64 = rng.random_range(0.5..1.5);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            });
            v /= v.norm();
            groups.push(Group {
                top_start,
                top,
                extra_start,
                extra,
                offset,
                v,
            });
            top_start += top;
            extra_start += extra;
            offset += len;
        }

        let mut perm: Vec<usize> = (0..n_tilde).collect();
        for i in (1..n_tilde).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }

        Ok(Self {
            n,
            n_tilde,
            perm,
            groups,
            blocks,
        })
    }

    pub(crate) fn rescale(&mut self, factor: f64) {
        for b in &mut self.blocks {
            b.s *= factor;
            b.s_inv /= factor;
        }
    }

    /// Recomputes block inverses, used after loading from a key file.
    pub(crate) fn from_parts(
        n: usize,
        n_tilde: usize,
        perm: Vec<usize>,
        groups: Vec<Group>,
        blocks: Vec<(usize, DMatrix<f64>)>,
    ) -> Result<Self> {
        let blocks = blocks
            .into_iter()
            .map(|(start, s)| {
                let s_inv = s
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Wire(format!("singular block at {start}")))?;
                Ok(DenseBlock { start, s, s_inv })
            })
            .collect::<Result<Vec<_>>>()?;
        let map = Self {
            n,
            n_tilde,
            perm,
            groups,
            blocks,
        };
        map.check_layout()?;
        Ok(map)
    }

    fn check_layout(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Wire(format!("structured key layout: {m}")));
        if self.perm.len() != self.n_tilde {
            return bad("permutation length");
        }
        let mut seen = vec![false; self.n_tilde];
        for &p in &self.perm {
            if p >= self.n_tilde || std::mem::replace(&mut seen[p], true) {
                return bad("not a permutation");
            }
        }
        let (mut top, mut extra, mut offset) = (0, 0, 0);
        for g in &self.groups {
            if g.top_start != top || g.extra_start != extra || g.offset != offset {
                return bad("groups not contiguous");
            }
            if g.v.len() != g.top + g.extra {
                return bad("householder vector length");
            }
            top += g.top;
            extra += g.extra;
            offset += g.top + g.extra;
        }
        if top != self.n || offset != self.n_tilde {
            return bad("groups do not cover the dimensions");
        }
        let mut start = 0;
        for b in &self.blocks {
            if b.start != start || b.s.nrows() != b.s.ncols() {
                return bad("blocks not contiguous");
            }
            start += b.size();
        }
        if start != self.n {
            return bad("blocks do not cover n");
        }
        Ok(())
    }

    fn apply_s(&self, w: &[f64], inverse: bool) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for b in &self.blocks {
            let m = if inverse { &b.s_inv } else { &b.s };
            let size = b.size();
            for r in 0..size {
                let mut acc = 0.0;
                for c in 0..size {
                    acc += m[(r, c)] * w[b.start + c];
                }
                out[b.start + r] = acc;
            }
        }
        out
    }

    /// `Π1·w`.
    pub fn lift(&self, w: &[f64]) -> Vec<f64> {
        let z = self.apply_s(w, false);
        let mut internal = vec![0.0; self.n_tilde];
        for g in &self.groups {
            let y = &mut internal[g.offset..g.offset + g.top + g.extra];
            y[..g.top].copy_from_slice(&z[g.top_start..g.top_start + g.top]);
            g.reflect(y);
        }
        self.scatter(&internal)
    }

    /// `N1·r`.
    pub fn kernel(&self, r: &[f64]) -> Vec<f64> {
        let mut internal = vec![0.0; self.n_tilde];
        for g in &self.groups {
            let y = &mut internal[g.offset..g.offset + g.top + g.extra];
            y[g.top..].copy_from_slice(&r[g.extra_start..g.extra_start + g.extra]);
            g.reflect(y);
        }
        self.scatter(&internal)
    }

    /// `Π1ᴸ·x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut internal = self.gather(x);
        let mut z = vec![0.0; self.n];
        for g in &self.groups {
            let y = &mut internal[g.offset..g.offset + g.top + g.extra];
            g.reflect(y);
            z[g.top_start..g.top_start + g.top].copy_from_slice(&y[..g.top]);
        }
        self.apply_s(&z, true)
    }

    fn scatter(&self, internal: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_tilde];
        for (i, &row) in self.perm.iter().enumerate() {
            out[row] = internal[i];
        }
        out
    }

    fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&row| x[row]).collect()
    }

    /// Per-row (ℓ1, ℓ2) norms of `Π1` and ℓ2 norms of `N1`, in external
    /// row order.
    pub(crate) fn row_norms(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut pi_l1 = vec![0.0; self.n_tilde];
        let mut pi_l2 = vec![0.0; self.n_tilde];
        let mut n1_l2 = vec![0.0; self.n_tilde];
        for g in &self.groups {
            let len = g.top + g.extra;
            // Columns touched by the S rows of this group.
            let first = self.block_index(g.top_start);
            let last = self.block_index(g.top_start + g.top - 1);
            let col_lo = self.blocks[first].start;
            let col_hi = self.blocks[last].start + self.blocks[last].size();
            let width = col_hi - col_lo;

            // Rows of [S; 0] restricted to the group, dense over [col_lo, col_hi).
            let s_row = |i: usize, out: &mut [f64]| {
                out.iter_mut().for_each(|x| *x = 0.0);
                if i < g.top {
                    let row = g.top_start + i;
                    let b = &self.blocks[self.block_index(row)];
                    for c in 0..b.size() {
                        out[b.start - col_lo + c] = b.s[(row - b.start, c)];
                    }
                }
            };
            // u = [S;0]ᵀ v restricted to the same columns.
            let mut u = vec![0.0; width];
            let mut buf = vec![0.0; width];
            for i in 0..g.top {
                s_row(i, &mut buf);
                for (uj, bj) in u.iter_mut().zip(&buf) {
                    *uj += g.v[i] * bj;
                }
            }
            let v_extra_sq: f64 = g.v.iter().skip(g.top).map(|x| x * x).sum();
            for i in 0..len {
                s_row(i, &mut buf);
                let (mut l1, mut l2) = (0.0, 0.0);
                for (bj, uj) in buf.iter().zip(&u) {
                    let x = bj - 2.0 * g.v[i] * uj;
                    l1 += x.abs();
                    l2 += x * x;
                }
                // Row i of H·[0; I]: e_i restricted to extras minus 2 v_i v_extra.
                let vi = g.v[i];
                let mut k2 = 4.0 * vi * vi * v_extra_sq;
                if i >= g.top {
                    k2 += 1.0 - 4.0 * vi * vi;
                }
                let row = self.perm[g.offset + i];
                pi_l1[row] = l1;
                pi_l2[row] = l2.sqrt();
                n1_l2[row] = k2.max(0.0).sqrt();
            }
        }
        (pi_l1, pi_l2, n1_l2)
    }

    fn block_index(&self, col: usize) -> usize {
        col / BLOCK
    }

    /// Extreme singular values of `Π1` (equal to those of `S`).
    pub(crate) fn singular_range(&self) -> (f64, f64) {
        let mut max = 0.0_f64;
        let mut min = f64::INFINITY;
        for b in &self.blocks {
            let sv = b.s.singular_values();
            max = max.max(sv.max());
            min = min.min(sv.min());
        }
        (max, min)
    }
}
