//! Scan passes over rows in breadth-first position order.
//!
//! All buffers are row-major `L x w`; `pp[k]` is the position of the parent
//! of position `k` (`NO_PARENT` for the root at position 0). Children always
//! sit at larger positions than their parent, and the parents of
//! consecutive positions are non-decreasing, so every pass streams through
//! memory.

use num_traits::Float;

use super::{prefetch, PathConvention, ScanMode, ScanWorkspace, PREFETCH_AHEAD};
use crate::matrix::Matrix;
use crate::mst::{RootedTree, NO_PARENT};

#[inline]
fn rows<T>(v: &[T], k: usize, w: usize) -> &[T] {
    &v[k * w..(k + 1) * w]
}

/// `s = sum of up over positions lo..hi`, added in position order.
#[inline]
fn child_sum<T: Float>(up: &[T], lo: usize, hi: usize, w: usize, s: &mut [T]) {
    s.fill(T::zero());
    for c in lo..hi {
        for (x, &y) in s.iter_mut().zip(rows(up, c, w)) {
            *x = *x + y;
        }
    }
}

/// Returns `(up, s)`: `up_k = u_k + a_k * s_k` with `s_k` the sum of the
/// children's `up`.
pub(super) fn upward<T: Float>(kids: &[usize], a: &[T], u: &[T], w: usize) -> (Vec<T>, Vec<T>) {
    let n = kids.len() - 1;
    let mut up = vec![T::zero(); n * w];
    let mut s = vec![T::zero(); n * w];
    for k in (0..n).rev() {
        let sk = &mut s[k * w..(k + 1) * w];
        child_sum(&up, kids[k], kids[k + 1], w, sk);
        for (((o, &uu), &aa), &ss) in up[k * w..(k + 1) * w].iter_mut().zip(rows(u, k, w)).zip(rows(a, k, w)).zip(&*sk)
        {
            *o = uu + aa * ss;
        }
    }
    (up, s)
}

/// Writes `out_k = up_p + a_p * (out_p - up_k)` into `out` (zero at the
/// root): what reaches the parent of `k` from outside the subtree of `k`.
/// The edge-count full state is `up + a * out`, interior-only `u + s + out`.
pub(super) fn downward<T: Float>(pp: &[usize], a: &[T], up: &[T], out: &mut [T], w: usize) {
    out[..w].fill(T::zero());
    for k in 1..pp.len() {
        let p = pp[k];
        let (head, tail) = out.split_at_mut(k * w);
        let op = &head[p * w..(p + 1) * w];
        for ((((o, &opc), &upp), &ap), &upk) in
            tail[..w].iter_mut().zip(op).zip(rows(up, p, w)).zip(rows(a, p, w)).zip(rows(up, k, w))
        {
            *o = upp + ap * (opc - upk);
        }
    }
}

/// `s = sum of up over positions lo..hi`, with `up` stored back to front
/// (position `k` at slot `n - 1 - k`), added in position order.
#[inline]
fn child_sum_rev<T: Float>(up: &[T], n: usize, lo: usize, hi: usize, w: usize, s: &mut [T]) {
    s.fill(T::zero());
    for c in lo..hi {
        for (x, &y) in s.iter_mut().zip(rows(up, n - 1 - c, w)) {
            *x = *x + y;
        }
    }
}

/// Forward scan of columns `start..start + w`. `ws.a` must hold the
/// transitions in position order; `u` is read straight from node order.
/// Each finished row of `h` is handed to `sink` with its position, in
/// increasing position order. Buffers only ever grow by appending, so
/// nothing is zero-filled.
#[allow(clippy::too_many_arguments)]
pub(super) fn forward<T: Float>(
    tree: &RootedTree,
    ws: &mut ScanWorkspace<T>,
    u: &Matrix<T>,
    start: usize,
    w: usize,
    mode: ScanMode,
    conv: PathConvention,
    mut sink: impl FnMut(usize, &[T]),
) {
    let (order, pp, kids) = (tree.order(), tree.parent_positions(), tree.child_offsets());
    let n = order.len();
    let ScanWorkspace { a, up, out, s, h } = ws;
    let a = &a[..n * w];
    let urow = |k: usize| &u.row(order[k])[start..start + w];
    s.clear();
    s.resize(w, T::zero());
    h.clear();
    h.resize(w, T::zero());

    // children sit after their parent, so filling up back to front sees
    // every child before its parent
    up.clear();
    up.reserve(n * w);
    for k in (0..n).rev() {
        if k >= PREFETCH_AHEAD {
            prefetch(urow(k - PREFETCH_AHEAD));
        }
        child_sum_rev(up, n, kids[k], kids[k + 1], w, s);
        up.extend(urow(k).iter().zip(rows(a, k, w)).zip(s.iter()).map(|((&uu, &aa), &ss)| uu + aa * ss));
    }
    let up = &up[..];
    let uprow = |k: usize| rows(up, n - 1 - k, w);
    let interior = |k: usize, s: &mut [T], h: &mut [T]| {
        child_sum_rev(up, n, kids[k], kids[k + 1], w, s);
        for ((x, &uu), &ss) in h.iter_mut().zip(urow(k)).zip(&*s) {
            *x = uu + ss;
        }
    };
    match mode {
        ScanMode::Rooted => {
            for k in 0..n {
                match conv {
                    PathConvention::EdgeCount => sink(k, uprow(k)),
                    PathConvention::InteriorOnly => {
                        interior(k, s, h);
                        sink(k, h);
                    }
                }
            }
        }
        ScanMode::Full => {
            // out_k = up_p + a_p * (out_p - up_k), zero at the root
            out.clear();
            out.reserve(n * w);
            out.resize(w, T::zero());
            for k in 0..n {
                if k > 0 {
                    let p = pp[k];
                    for ((((x, &upp), &ap), &opc), &upk) in
                        h.iter_mut().zip(uprow(p)).zip(rows(a, p, w)).zip(rows(out, p, w)).zip(uprow(k))
                    {
                        *x = upp + ap * (opc - upk);
                    }
                    out.extend_from_slice(h);
                }
                let ok = rows(out, k, w);
                match conv {
                    PathConvention::EdgeCount => {
                        for (((x, &upc), &ac), &oc) in h.iter_mut().zip(uprow(k)).zip(rows(a, k, w)).zip(ok) {
                            *x = upc + ac * oc;
                        }
                    }
                    PathConvention::InteriorOnly => {
                        interior(k, s, h);
                        for (x, &oc) in h.iter_mut().zip(ok) {
                            *x = *x + oc;
                        }
                    }
                }
                sink(k, h);
            }
        }
    }
}

/// Returns `[d_a, d_u]` in position order.
#[allow(clippy::too_many_arguments)]
pub(super) fn backward<T: Float>(
    pp: &[usize],
    kids: &[usize],
    a: &[T],
    u: &[T],
    g: &[T],
    w: usize,
    mode: ScanMode,
    conv: PathConvention,
) -> [Vec<T>; 2] {
    let n = pp.len();
    let (up, s) = upward(kids, a, u, w);
    let zero = || vec![T::zero(); n * w];
    let (mut ga, mut gu, mut g_up, mut g_s) = (zero(), zero(), zero(), zero());

    match conv {
        PathConvention::EdgeCount => g_up.copy_from_slice(g),
        PathConvention::InteriorOnly => {
            gu.copy_from_slice(g);
            g_s.copy_from_slice(g);
        }
    }

    if mode == ScanMode::Full {
        let mut out = zero();
        downward(pp, a, &up, &mut out, w);
        let mut g_out = zero();
        match conv {
            PathConvention::EdgeCount => {
                for c in 0..n * w {
                    ga[c] = g[c] * out[c];
                    g_out[c] = g[c] * a[c];
                }
            }
            PathConvention::InteriorOnly => g_out.copy_from_slice(g),
        }
        // children sit after their parent, so walking backwards finishes
        // every g_out before it is pushed to the parent
        for k in (1..n).rev() {
            let (p, kk) = (pp[k] * w, k * w);
            for c in 0..w {
                let go = g_out[kk + c];
                g_up[p + c] = g_up[p + c] + go;
                ga[p + c] = ga[p + c] + go * (out[p + c] - up[kk + c]);
                g_out[p + c] = g_out[p + c] + go * a[p + c];
                g_up[kk + c] = g_up[kk + c] - go * a[p + c];
            }
        }
    }

    for k in 0..n {
        let kk = k * w;
        if pp[k] != NO_PARENT {
            let p = pp[k] * w;
            for c in 0..w {
                g_up[kk + c] = g_up[kk + c] + g_s[p + c];
            }
        }
        for c in kk..kk + w {
            gu[c] = gu[c] + g_up[c];
            ga[c] = ga[c] + g_up[c] * s[c];
            g_s[c] = g_s[c] + g_up[c] * a[c];
        }
    }
    [ga, gu]
}
