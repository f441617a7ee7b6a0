use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use super::activation::tanh_in_place;
use super::{Layer, MlpParameters, Normalization};
use crate::error::{Error, Result};
use crate::parallel;

/// Rows per work item. Fixed, so that results and reduction order do not
/// depend on the number of workers.
pub(crate) const CHUNK: usize = 256;

/// Activations of one forward sweep over a block of points, in normalised
/// coordinates. The `*_dot` fields are derivatives with respect to physical
/// time and are present only for tangent sweeps.
pub(crate) struct Tape {
    pub z0: Array2<f64>,
    pub z0_dot: Option<Array2<f64>>,
    /// Hidden activations, first to last.
    pub z: Vec<Array2<f64>>,
    pub a_dot: Vec<Array2<f64>>,
    pub z_dot: Vec<Array2<f64>>,
    pub y: Array2<f64>,
    pub y_dot: Option<Array2<f64>>,
}

fn affine(z: &Array2<f64>, l: &Layer) -> Array2<f64> {
    let mut a = Array2::zeros((z.nrows(), l.w.nrows()));
    general_mat_mul(1.0, z, &l.w.t(), 0.0, &mut a);
    a += &l.b;
    a
}

fn linear(z: &Array2<f64>, l: &Layer) -> Array2<f64> {
    let mut a = Array2::zeros((z.nrows(), l.w.nrows()));
    general_mat_mul(1.0, z, &l.w.t(), 0.0, &mut a);
    a
}

pub(crate) fn check(params: &MlpParameters, norm: &Normalization, inputs: ArrayView2<f64>) -> Result<()> {
    let (Some(first), Some(last)) = (params.layers.first(), params.layers.last()) else {
        return Err(Error::Shape("network without layers".into()));
    };
    for w in params.layers.windows(2) {
        if w[1].w.ncols() != w[0].w.nrows() {
            return Err(Error::Shape("layer chain is inconsistent".into()));
        }
    }
    norm.validate(first.w.ncols(), last.w.nrows())?;
    if inputs.ncols() != first.w.ncols() {
        return Err(Error::Shape(format!(
            "{} input columns, network takes {}",
            inputs.ncols(),
            first.w.ncols()
        )));
    }
    if let Some((k, v)) = inputs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "input",
            index: k,
            value: *v,
        });
    }
    Ok(())
}

pub(crate) fn run(params: &MlpParameters, norm: &Normalization, inputs: ArrayView2<f64>, tangent: bool) -> Tape {
    let mut z0 = inputs.to_owned();
    for mut row in z0.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - norm.input_shift[j]) / norm.input_scale[j];
        }
    }
    // Time is input 0; its normalised rate is the reciprocal scale.
    let z0_dot = tangent.then(|| {
        let mut d = Array2::zeros(z0.raw_dim());
        d.column_mut(0).fill(1.0 / norm.input_scale[0]);
        d
    });

    let n_hidden = params.layers.len() - 1;
    let mut z = Vec::with_capacity(n_hidden);
    let mut a_dot = Vec::with_capacity(n_hidden);
    let mut z_dot = Vec::with_capacity(n_hidden);
    for (k, l) in params.layers[..n_hidden].iter().enumerate() {
        let prev = if k == 0 { &z0 } else { &z[k - 1] };
        let mut zk = affine(prev, l);
        tanh_in_place(zk.as_slice_mut().expect("fresh arrays are contiguous"));
        if tangent {
            let prev_dot = if k == 0 { z0_dot.as_ref().unwrap() } else { &z_dot[k - 1] };
            let ad = linear(prev_dot, l);
            let mut zd = ad.clone();
            zd.zip_mut_with(&zk, |d, &zz| *d *= 1.0 - zz * zz);
            a_dot.push(ad);
            z_dot.push(zd);
        }
        z.push(zk);
    }
    let out = &params.layers[n_hidden];
    let last = z.last().unwrap_or(&z0);
    let y = affine(last, out);
    let y_dot = tangent.then(|| linear(z_dot.last().unwrap_or(z0_dot.as_ref().unwrap()), out));
    Tape {
        z0,
        z0_dot,
        z,
        a_dot,
        z_dot,
        y,
        y_dot,
    }
}

fn denormalize(norm: &Normalization, y: &mut Array2<f64>, y_dot: Option<&mut Array2<f64>>) {
    for mut row in y.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = norm.output_shift[j] + norm.output_scale[j] * *v;
        }
    }
    if let Some(d) = y_dot {
        for mut row in d.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= norm.output_scale[j];
            }
        }
    }
}

fn chunk_starts(n: usize) -> Vec<usize> {
    (0..n).step_by(CHUNK).collect()
}

fn batched(
    params: &MlpParameters,
    norm: &Normalization,
    inputs: &Array2<f64>,
    tangent: bool,
) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
    check(params, norm, inputs.view())?;
    let n = inputs.nrows();
    let parts = parallel::par_map(&chunk_starts(n), |&s0| {
        let rows = inputs.slice(s![s0..(s0 + CHUNK).min(n), ..]);
        let tape = run(params, norm, rows, tangent);
        let (mut y, mut yd) = (tape.y, tape.y_dot);
        denormalize(norm, &mut y, yd.as_mut());
        (y, yd)
    });
    let out_dim = norm.output_dim();
    if parts.is_empty() {
        return Ok((Array2::zeros((0, out_dim)), tangent.then(|| Array2::zeros((0, out_dim)))));
    }
    let ys: Vec<_> = parts.iter().map(|p| p.0.view()).collect();
    let y = concatenate(Axis(0), &ys).expect("equal widths");
    let y_dot = tangent.then(|| {
        let ds: Vec<_> = parts.iter().map(|p| p.1.as_ref().unwrap().view()).collect();
        concatenate(Axis(0), &ds).expect("equal widths")
    });
    Ok((y, y_dot))
}

/// `forward_batch` on the calling thread, for timing.
pub fn forward_batch_single(
    params: &MlpParameters,
    norm: &Normalization,
    inputs: &Array2<f64>,
) -> Result<Array2<f64>> {
    check(params, norm, inputs.view())?;
    let n = inputs.nrows();
    let mut y = Array2::zeros((n, norm.output_dim()));
    for s0 in chunk_starts(n) {
        let rows = s![s0..(s0 + CHUNK).min(n), ..];
        let mut part = run(params, norm, inputs.slice(rows), false).y;
        denormalize(norm, &mut part, None);
        y.slice_mut(rows).assign(&part);
    }
    Ok(y)
}

/// Network output in physical units at one `(t, dP7)` point.
pub fn forward(params: &MlpParameters, norm: &Normalization, input: [f64; 2]) -> Result<Vec<f64>> {
    let x = Array2::from_shape_vec((1, 2), input.to_vec()).unwrap();
    Ok(forward_batch(params, norm, &x)?.row(0).to_vec())
}

/// Outputs for every row of `inputs` (columns `t`, `dP7`).
pub fn forward_batch(params: &MlpParameters, norm: &Normalization, inputs: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(batched(params, norm, inputs, false)?.0)
}

/// Output and its exact derivative with respect to physical time.
pub fn forward_time_grad(
    params: &MlpParameters,
    norm: &Normalization,
    input: [f64; 2],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = Array2::from_shape_vec((1, 2), input.to_vec()).unwrap();
    let (y, d) = forward_time_grad_batch(params, norm, &x)?;
    Ok((y.row(0).to_vec(), d.row(0).to_vec()))
}

pub fn forward_time_grad_batch(
    params: &MlpParameters,
    norm: &Normalization,
    inputs: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (y, d) = batched(params, norm, inputs, true)?;
    Ok((y, d.unwrap()))
}
