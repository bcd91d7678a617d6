//! Gated recurrent units.
//!
//! ```text
//! z  = σ(x·W_z + h·U_z + b_z)
//! r  = σ(x·W_r + h·U_r + b_r)
//! h̃  = tanh(x·W_h + (r⊙h)·U_h + b_h)
//! h' = (1 − z)⊙h + z⊙h̃
//! ```

use ndarray::{concatenate, s, Array2, Array3, Axis};

use super::layers::{sigmoid, step};
use super::params::GruLayerParams;
use crate::error::{Error, Result};
use crate::num::Scalar;

pub struct GruLayerCache<T> {
    x: Array3<T>,
    /// `[batch, steps + 1, units]`, slot 0 is the initial state.
    h: Array3<T>,
    z: Array3<T>,
    r: Array3<T>,
    cand: Array3<T>,
}

fn input_weights<T: Scalar>(p: &GruLayerParams<T>) -> Array2<T> {
    concatenate![Axis(1), p.w_z, p.w_r, p.w_h]
}

fn gate_recurrent<T: Scalar>(p: &GruLayerParams<T>) -> Array2<T> {
    concatenate![Axis(1), p.u_z, p.u_r]
}

/// Run one layer over a `[batch, steps, in]` sequence from initial state
/// `h0` (zeros when `None`). Returns all hidden states `[batch, steps, units]`.
pub fn gru_layer_forward<T: Scalar>(
    x: &Array3<T>,
    h0: Option<&Array2<T>>,
    p: &GruLayerParams<T>,
    keep_cache: bool,
) -> Result<(Array3<T>, Option<GruLayerCache<T>>)> {
    let (b, steps, input) = x.dim();
    let u = p.units();
    if input != p.input_size() {
        return Err(Error::shape(format!("GRU layer expects {} inputs, got {input}", p.input_size())));
    }
    if steps == 0 {
        return Err(Error::shape("GRU input sequence is empty"));
    }
    if let Some(h0) = h0 {
        if h0.dim() != (b, u) {
            return Err(Error::shape(format!("initial state {:?} should be {:?}", h0.dim(), (b, u))));
        }
    }
    let bias = concatenate![Axis(0), p.b_z, p.b_r, p.b_h];
    let xw = x.view().into_shape_with_order((b * steps, input)).expect("contiguous").dot(&input_weights(p)) + &bias;
    let xw = xw.into_shape_with_order((b, steps, 3 * u)).expect("contiguous");
    let u_zr = gate_recurrent(p);

    let mut h = Array3::zeros((b, steps + 1, u));
    if let Some(h0) = h0 {
        h.slice_mut(s![.., 0, ..]).assign(h0);
    }
    let mut zs = Array3::zeros((b, steps, u));
    let mut rs = Array3::zeros((b, steps, u));
    let mut cands = Array3::zeros((b, steps, u));
    for t in 0..steps {
        let hp = h.slice(s![.., t, ..]).to_owned();
        let xt = step(&xw, t);
        let a_zr = &xt.slice(s![.., ..2 * u]) + &hp.dot(&u_zr);
        let z = a_zr.slice(s![.., ..u]).mapv(sigmoid);
        let r = a_zr.slice(s![.., u..]).mapv(sigmoid);
        let rh = &r * &hp;
        let cand = (&xt.slice(s![.., 2 * u..]) + &rh.dot(&p.u_h)).mapv(|v| v.tanh());
        let next = z.mapv(|v| T::one() - v) * &hp + &z * &cand;
        h.slice_mut(s![.., t + 1, ..]).assign(&next);
        zs.slice_mut(s![.., t, ..]).assign(&z);
        rs.slice_mut(s![.., t, ..]).assign(&r);
        cands.slice_mut(s![.., t, ..]).assign(&cand);
    }
    let out = h.slice(s![.., 1.., ..]).to_owned();
    let cache = keep_cache.then(|| GruLayerCache { x: x.clone(), h, z: zs, r: rs, cand: cands });
    Ok((out, cache))
}

pub struct GruLayerGrads<T> {
    pub params: GruLayerParams<T>,
    pub dx: Array3<T>,
    pub dh0: Array2<T>,
}

/// Backpropagation through time. `dout` is the loss gradient with respect
/// to every output state.
pub fn gru_layer_backward<T: Scalar>(dout: &Array3<T>, cache: &GruLayerCache<T>, p: &GruLayerParams<T>) -> GruLayerGrads<T> {
    let (b, steps, input) = cache.x.dim();
    let u = p.units();
    let u_zr = gate_recurrent(p);
    let mut grads = GruLayerParams::zeros(input, u);
    let mut d_pre = Array3::<T>::zeros((b, steps, 3 * u));
    let mut dh_next = Array2::<T>::zeros((b, u));
    let mut du_zr = Array2::<T>::zeros((u, 2 * u));

    for t in (0..steps).rev() {
        let dh = &step(dout, t) + &dh_next;
        let hp = cache.h.slice(s![.., t, ..]);
        let z = step(&cache.z, t);
        let r = step(&cache.r, t);
        let cand = step(&cache.cand, t);

        let dcand = &dh * &z;
        let dz = &dh * &(&cand - &hp);
        let mut dhp = &dh * &z.mapv(|v| T::one() - v);

        let da_h = dcand * &cand.mapv(|v| T::one() - v * v);
        let rh = &r * &hp;
        grads.u_h += &rh.t().dot(&da_h);
        let drh = da_h.dot(&p.u_h.t());
        let dr = &drh * &hp;
        dhp += &(&drh * &r);

        let da_z = dz * &z.mapv(|v| v * (T::one() - v));
        let da_r = dr * &r.mapv(|v| v * (T::one() - v));
        let da_zr = concatenate![Axis(1), da_z, da_r];
        du_zr += &hp.t().dot(&da_zr);
        dhp += &da_zr.dot(&u_zr.t());

        let mut slot = d_pre.slice_mut(s![.., t, ..]);
        slot.slice_mut(s![.., ..2 * u]).assign(&da_zr);
        slot.slice_mut(s![.., 2 * u..]).assign(&da_h);
        dh_next = dhp;
    }

    grads.u_z = du_zr.slice(s![.., ..u]).to_owned();
    grads.u_r = du_zr.slice(s![.., u..]).to_owned();
    let d_pre = d_pre.into_shape_with_order((b * steps, 3 * u)).expect("contiguous");
    let xs = cache.x.view().into_shape_with_order((b * steps, input)).expect("contiguous");
    let dw = xs.t().dot(&d_pre);
    grads.w_z = dw.slice(s![.., ..u]).to_owned();
    grads.w_r = dw.slice(s![.., u..2 * u]).to_owned();
    grads.w_h = dw.slice(s![.., 2 * u..]).to_owned();
    let db = d_pre.sum_axis(Axis(0));
    grads.b_z = db.slice(s![..u]).to_owned();
    grads.b_r = db.slice(s![u..2 * u]).to_owned();
    grads.b_h = db.slice(s![2 * u..]).to_owned();
    let dx = d_pre.dot(&input_weights(p).t()).into_shape_with_order((b, steps, input)).expect("contiguous");
    GruLayerGrads { params: grads, dx, dh0: dh_next }
}

/// A single recurrence step on unbatched vectors.
pub fn gru_cell<T: Scalar>(x_t: &[T], h_prev: &[T], p: &GruLayerParams<T>) -> Result<Vec<T>> {
    let x = Array3::from_shape_vec((1, 1, x_t.len()), x_t.to_vec()).expect("vector");
    let h0 = Array2::from_shape_vec((1, h_prev.len()), h_prev.to_vec()).expect("vector");
    let (out, _) = gru_layer_forward(&x, Some(&h0), p, false)?;
    Ok(out.into_raw_vec_and_offset().0)
}

pub struct GruStackCache<T> {
    layers: Vec<GruLayerCache<T>>,
    steps: usize,
}

/// One parallel set: stacked layers, all but the last returning full
/// sequences; the set's output is the last layer's final state.
pub fn gru_branch_forward<T: Scalar>(
    seq: &Array3<T>,
    stack: &[GruLayerParams<T>],
    keep_cache: bool,
) -> Result<(Array2<T>, Option<GruStackCache<T>>)> {
    let mut caches = Vec::new();
    let mut cur: Option<Array3<T>> = None;
    for layer in stack {
        let input = cur.as_ref().unwrap_or(seq);
        let (out, cache) = gru_layer_forward(input, None, layer, keep_cache)?;
        caches.extend(cache);
        cur = Some(out);
    }
    let out = cur.ok_or_else(|| Error::shape("GRU stack has no layers"))?;
    let steps = out.dim().1;
    let last = out.slice(s![.., steps - 1, ..]).to_owned();
    Ok((last, keep_cache.then_some(GruStackCache { layers: caches, steps })))
}

/// Returns per-layer gradients and the gradient with respect to the input sequence.
pub fn gru_branch_backward<T: Scalar>(
    dlast: &Array2<T>,
    cache: &GruStackCache<T>,
    stack: &[GruLayerParams<T>],
) -> (Vec<GruLayerParams<T>>, Array3<T>) {
    let (b, u) = dlast.dim();
    let mut dout = Array3::zeros((b, cache.steps, u));
    dout.slice_mut(s![.., cache.steps - 1, ..]).assign(dlast);
    let mut grads = Vec::with_capacity(stack.len());
    for (layer, lc) in stack.iter().zip(&cache.layers).rev() {
        let g = gru_layer_backward(&dout, lc, layer);
        grads.push(g.params);
        dout = g.dx;
    }
    grads.reverse();
    (grads, dout)
}
