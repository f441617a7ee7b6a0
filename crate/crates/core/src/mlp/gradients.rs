use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis};

use super::forward::{check, run, Tape, CHUNK};
use super::{MlpParameters, Normalization};
use crate::dataset::LabelledSet;
use crate::error::{Error, Result};
use crate::parallel;
use crate::power_system::Dynamics;
use crate::training::{LossMode, LossWeightTable};

/// Training inputs with everything that does not depend on the parameters
/// precomputed: normalised labels and the vector field at the labels.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    data_inputs: Array2<f64>,
    labels_n: Array2<f64>,
    f_labels: Array2<f64>,
    colloc_inputs: Array2<f64>,
}

impl PreparedBatch {
    /// `colloc` holds `(t, dP7)` pairs; it may be empty for modes without a
    /// physics term.
    pub fn new(
        data: &LabelledSet,
        colloc: &[(f64, f64)],
        norm: &Normalization,
        sys: &dyn Dynamics,
    ) -> Result<Self> {
        let dim = sys.state_dim();
        if data.x.ncols() != dim || norm.output_dim() != dim {
            return Err(Error::Shape(format!(
                "labels have {} states, system has {dim}",
                data.x.ncols()
            )));
        }
        let mut data_inputs = Array2::zeros((data.len(), 2));
        let mut f_labels = Array2::zeros((data.len(), dim));
        for (k, (&t, &u)) in data.t.iter().zip(&data.dp7).enumerate() {
            data_inputs[[k, 0]] = t;
            data_inputs[[k, 1]] = u;
            let x = data.x.row(k).to_vec();
            sys.rhs(&x, u, f_labels.row_mut(k).as_slice_mut().unwrap());
        }
        let mut colloc_inputs = Array2::zeros((colloc.len(), 2));
        for (k, &(t, u)) in colloc.iter().enumerate() {
            colloc_inputs[[k, 0]] = t;
            colloc_inputs[[k, 1]] = u;
        }
        Ok(Self {
            data_inputs,
            labels_n: norm.normalize_outputs(&data.x),
            f_labels,
            colloc_inputs,
        })
    }

    pub fn n_x(&self) -> usize {
        self.data_inputs.nrows()
    }

    pub fn n_f(&self) -> usize {
        self.colloc_inputs.nrows()
    }
}

/// Unweighted per-state loss terms. A term that the requested mode does
/// not use is reported as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub x: Vec<f64>,
    pub dt: Vec<f64>,
    pub f: Vec<f64>,
}

impl LossTerms {
    fn zeros(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            dt: vec![0.0; n],
            f: vec![0.0; n],
        }
    }

    fn add(&mut self, o: &Self) {
        for (a, b) in [(&mut self.x, &o.x), (&mut self.dt, &o.dt), (&mut self.f, &o.f)] {
            a.iter_mut().zip(b).for_each(|(a, b)| *a += b);
        }
    }

    /// `(sum λ_x L_x, sum λ_dt L_dt, sum λ_f L_f)`.
    pub fn weighted(&self, w: &LossWeightTable) -> (f64, f64, f64) {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| a * b).sum::<f64>();
        (dot(&w.x, &self.x), dot(&w.dt, &self.dt), dot(&w.f, &self.f))
    }

    fn check_finite(&self) -> Result<()> {
        for (term, v) in [("x", &self.x), ("dt", &self.dt), ("f", &self.f)] {
            if let Some(state) = v.iter().position(|l| !l.is_finite()) {
                return Err(Error::Divergence { term, state });
            }
        }
        Ok(())
    }
}

/// Reverse sweep through a tangent-carrying forward pass. `gy` and `gy_dot`
/// are cotangents of the normalised output and of its time derivative.
fn backward(params: &MlpParameters, tape: &Tape, gy: Array2<f64>, gy_dot: Option<Array2<f64>>) -> MlpParameters {
    let n_hidden = params.layers.len() - 1;
    let mut grads = MlpParameters {
        layers: params
            .layers
            .iter()
            .map(|l| super::Layer {
                w: Array2::zeros(l.w.raw_dim()),
                b: Array1::zeros(l.b.raw_dim()),
            })
            .collect(),
    };
    let input_of = |k: usize| if k == 0 { &tape.z0 } else { &tape.z[k - 1] };
    let input_dot_of = |k: usize| {
        if k == 0 {
            tape.z0_dot.as_ref().unwrap()
        } else {
            &tape.z_dot[k - 1]
        }
    };

    let (mut ga, mut ga_dot) = (gy, gy_dot);
    for k in (0..=n_hidden).rev() {
        if k < n_hidden {
            // ga, ga_dot currently hold cotangents of z_k and z_dot_k.
            let z = &tape.z[k];
            let mut g = ga;
            if let Some(gd) = ga_dot.as_mut() {
                let ad = &tape.a_dot[k];
                ndarray::Zip::from(&mut g)
                    .and(&*gd)
                    .and(z)
                    .and(ad)
                    .for_each(|g, &gd, &z, &ad| *g -= 2.0 * z * ad * gd);
                ndarray::Zip::from(gd).and(z).for_each(|gd, &z| *gd *= 1.0 - z * z);
            }
            g.zip_mut_with(z, |g, &z| *g *= 1.0 - z * z);
            ga = g;
        }
        let l = &params.layers[k];
        let gl = &mut grads.layers[k];
        general_mat_mul(1.0, &ga.t(), input_of(k), 0.0, &mut gl.w);
        if let Some(gd) = ga_dot.as_ref() {
            general_mat_mul(1.0, &gd.t(), input_dot_of(k), 1.0, &mut gl.w);
        }
        gl.b = ga.sum_axis(Axis(0));
        if k > 0 {
            let mut next = Array2::zeros((ga.nrows(), l.w.ncols()));
            general_mat_mul(1.0, &ga, &l.w, 0.0, &mut next);
            let next_dot = ga_dot.as_ref().map(|gd| {
                let mut nd = Array2::zeros((gd.nrows(), l.w.ncols()));
                general_mat_mul(1.0, gd, &l.w, 0.0, &mut nd);
                nd
            });
            ga = next;
            ga_dot = next_dot;
        }
    }
    grads
}

struct Part {
    sums: LossTerms,
    grads: Option<MlpParameters>,
}

fn data_part(
    params: &MlpParameters,
    norm: &Normalization,
    batch: &PreparedBatch,
    w: &LossWeightTable,
    rows: std::ops::Range<usize>,
    with_dt: bool,
    with_grad: bool,
) -> Part {
    let n = batch.n_x() as f64;
    let dim = norm.output_dim();
    let tape = run(params, norm, batch.data_inputs.slice(s![rows.clone(), ..]), with_dt);
    let labels = batch.labels_n.slice(s![rows.clone(), ..]);
    let mut sums = LossTerms::zeros(dim);
    let mut gy = Array2::zeros(tape.y.raw_dim());
    for ((mut r, y), l) in gy.rows_mut().into_iter().zip(tape.y.rows()).zip(labels.rows()) {
        for j in 0..dim {
            let e = y[j] - l[j];
            sums.x[j] += e * e;
            r[j] = w.x[j] * 2.0 / n * e;
        }
    }
    let gy_dot = with_dt.then(|| {
        let yd = tape.y_dot.as_ref().unwrap();
        let f = batch.f_labels.slice(s![rows.clone(), ..]);
        let mut g = Array2::zeros(yd.raw_dim());
        for ((mut gr, ydr), fr) in g.rows_mut().into_iter().zip(yd.rows()).zip(f.rows()) {
            for j in 0..dim {
                let sc = norm.output_scale[j];
                let e = sc * ydr[j] - fr[j];
                sums.dt[j] += e * e;
                gr[j] = w.dt[j] * 2.0 / n * e * sc;
            }
        }
        g
    });
    let grads = with_grad.then(|| backward(params, &tape, gy, gy_dot));
    Part { sums, grads }
}

fn colloc_part(
    params: &MlpParameters,
    norm: &Normalization,
    batch: &PreparedBatch,
    w: &LossWeightTable,
    sys: &dyn Dynamics,
    rows: std::ops::Range<usize>,
    with_grad: bool,
) -> Part {
    let m = batch.n_f() as f64;
    let dim = norm.output_dim();
    let inputs = batch.colloc_inputs.slice(s![rows, ..]);
    let tape = run(params, norm, inputs, true);
    let yd = tape.y_dot.as_ref().unwrap();
    let mut sums = LossTerms::zeros(dim);
    let mut gy = Array2::zeros(tape.y.raw_dim());
    let mut gy_dot = Array2::zeros(tape.y.raw_dim());
    let mut x = vec![0.0; dim];
    let mut f = vec![0.0; dim];
    let mut c = vec![0.0; dim];
    let mut gx = vec![0.0; dim];
    for k in 0..tape.y.nrows() {
        for j in 0..dim {
            x[j] = norm.output_shift[j] + norm.output_scale[j] * tape.y[[k, j]];
        }
        let u = inputs[[k, 1]];
        sys.rhs(&x, u, &mut f);
        for j in 0..dim {
            let sc = norm.output_scale[j];
            let r = f[j] - sc * yd[[k, j]];
            sums.f[j] += r * r;
            c[j] = w.f[j] * 2.0 / m * r;
            gy_dot[[k, j]] = -c[j] * sc;
        }
        if with_grad {
            sys.rhs_vjp(&x, u, &c, &mut gx);
            for j in 0..dim {
                gy[[k, j]] = gx[j] * norm.output_scale[j];
            }
        }
    }
    let grads = with_grad.then(|| backward(params, &tape, gy, Some(gy_dot)));
    Part { sums, grads }
}

fn ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n)).collect()
}

/// Which terms the weights switch on. The same effective weights always take
/// the same code path, whatever mode label produced them.
fn active_terms(w: &LossWeightTable, batch: &PreparedBatch) -> (bool, bool) {
    let dt = w.dt.iter().any(|&l| l != 0.0);
    let f = batch.n_f() > 0 && w.f.iter().any(|&l| l != 0.0);
    (dt, f)
}

fn evaluate(
    params: &MlpParameters,
    norm: &Normalization,
    batch: &PreparedBatch,
    w: &LossWeightTable,
    sys: &dyn Dynamics,
    with_dt: bool,
    with_f: bool,
    with_grad: bool,
) -> Result<(LossTerms, Option<MlpParameters>)> {
    check(params, norm, batch.data_inputs.view())?;
    let dim = norm.output_dim();
    if w.x.len() != dim || w.dt.len() != dim || w.f.len() != dim || sys.state_dim() != dim {
        return Err(Error::Shape(format!("loss weights or system do not match {dim} outputs")));
    }
    if batch.n_x() == 0 {
        return Err(Error::Shape("empty training batch".into()));
    }

    let mut jobs: Vec<(bool, std::ops::Range<usize>)> =
        ranges(batch.n_x()).into_iter().map(|r| (false, r)).collect();
    if with_f {
        jobs.extend(ranges(batch.n_f()).into_iter().map(|r| (true, r)));
    }
    let parts = parallel::par_map(&jobs, |(colloc, r)| {
        if *colloc {
            colloc_part(params, norm, batch, w, sys, r.clone(), with_grad)
        } else {
            data_part(params, norm, batch, w, r.clone(), with_dt, with_grad)
        }
    });

    // Fixed reduction order: data chunks, then collocation chunks.
    let mut sums = LossTerms::zeros(dim);
    let mut grads: Option<MlpParameters> = None;
    for p in parts {
        sums.add(&p.sums);
        if let Some(g) = p.grads {
            match grads.as_mut() {
                Some(acc) => acc.add_assign(&g),
                None => grads = Some(g),
            }
        }
    }
    let nx = batch.n_x() as f64;
    let nf = batch.n_f().max(1) as f64;
    sums.x.iter_mut().for_each(|v| *v /= nx);
    sums.dt.iter_mut().for_each(|v| *v /= nx);
    sums.f.iter_mut().for_each(|v| *v /= nf);
    sums.check_finite()?;
    Ok((sums, grads))
}

/// All three loss terms, whatever the mode.
pub fn loss_terms(
    params: &MlpParameters,
    norm: &Normalization,
    batch: &PreparedBatch,
    sys: &dyn Dynamics,
) -> Result<LossTerms> {
    let ones = LossWeightTable::uniform(norm.output_dim(), 1.0);
    let with_f = batch.n_f() > 0;
    Ok(evaluate(params, norm, batch, &ones, sys, true, with_f, false)?.0)
}

/// The loss terms `mode` uses, without gradients.
pub fn mode_loss_terms(
    params: &MlpParameters,
    norm: &Normalization,
    batch: &PreparedBatch,
    mode: LossMode,
    weights: &LossWeightTable,
    sys: &dyn Dynamics,
) -> Result<LossTerms> {
    let w = weights.for_mode(mode);
    let (dt, f) = active_terms(&w, batch);
    Ok(evaluate(params, norm, batch, &w, sys, dt, f, false)?.0)
}

/// Loss terms and the exact gradient of the weighted total loss of `mode`.
pub fn loss_gradients(
    params: &MlpParameters,
    norm: &Normalization,
    batch: &PreparedBatch,
    mode: LossMode,
    weights: &LossWeightTable,
    sys: &dyn Dynamics,
) -> Result<(LossTerms, MlpParameters)> {
    let w = weights.for_mode(mode);
    let (dt, f) = active_terms(&w, batch);
    let (terms, grads) = evaluate(params, norm, batch, &w, sys, dt, f, true)?;
    Ok((terms, grads.expect("gradient requested")))
}

#[cfg(test)]
mod tests {
    use super::super::{init_params, NetworkConfig};
    use super::*;
    use crate::training::total_loss;

    /// dx/dt = -x, one state.
    struct Decay;

    impl Dynamics for Decay {
        fn state_dim(&self) -> usize {
            1
        }
        fn rhs(&self, x: &[f64], _u: f64, dx: &mut [f64]) {
            dx[0] = -x[0];
        }
        fn rhs_vjp(&self, _x: &[f64], _u: f64, c: &[f64], out: &mut [f64]) {
            out[0] = -c[0];
        }
    }

    fn one_state_config() -> NetworkConfig {
        NetworkConfig {
            n_hidden_layers: 1,
            width: 3,
            input_dim: 2,
            output_dim: 1,
            ..NetworkConfig::default()
        }
    }

    fn toy_data(n: usize) -> LabelledSet {
        let t: Vec<f64> = (0..n).map(|i| 0.3 * i as f64).collect();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| (-t[i]).exp());
        LabelledSet {
            dp7: vec![1.0; n],
            x0: Array2::ones((n, 1)),
            t,
            x,
        }
    }

    #[test]
    fn physics_residual_by_hand() {
        // Constant unit output: f = -1, dx/dt = 0, so L_f = 1.
        let c = one_state_config();
        let p = MlpParameters::zeros(&c);
        let mut n = Normalization::identity(2, 1);
        n.output_shift[0] = 1.0;
        let batch = PreparedBatch::new(&toy_data(1), &[(0.5, 1.0)], &n, &Decay).unwrap();
        let terms = loss_terms(&p, &n, &batch, &Decay).unwrap();
        assert_eq!(terms.f, vec![1.0]);
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        // Zero network, labels equal to the output shift and at equilibrium.
        let c = one_state_config();
        let p = MlpParameters::zeros(&c);
        let n = Normalization::identity(2, 1);
        let data = LabelledSet {
            t: vec![0.1, 0.9],
            dp7: vec![0.0, 3.0],
            x0: Array2::zeros((2, 1)),
            x: Array2::zeros((2, 1)),
        };
        let batch = PreparedBatch::new(&data, &[(0.2, 1.0)], &n, &Decay).unwrap();
        let w = LossWeightTable::uniform(1, 1.0);
        let (terms, g) = loss_gradients(&p, &n, &batch, LossMode::Pinn, &w, &Decay).unwrap();
        assert_eq!(total_loss(&terms, &w, LossMode::Pinn), 0.0);
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_weight_gradient_by_hand() {
        // Zero weights, so y = b and dL/db = 2/N sum(y - x).
        let c = one_state_config();
        let mut p = MlpParameters::zeros(&c);
        p.layers[1].b[0] = 0.4;
        let n = Normalization::identity(2, 1);
        let data = toy_data(3);
        let batch = PreparedBatch::new(&data, &[], &n, &Decay).unwrap();
        let w = LossWeightTable::uniform(1, 1.0);
        let (_, g) = loss_gradients(&p, &n, &batch, LossMode::Nn, &w, &Decay).unwrap();
        let hand = 2.0 / 3.0 * data.x.iter().map(|x| 0.4 - x).sum::<f64>();
        assert!((g.layers[1].b[0] - hand).abs() < 1e-15);
    }

    fn fd_check(mode: LossMode) {
        let c = one_state_config();
        let p = init_params(&c, 4).unwrap();
        let mut n = Normalization::identity(2, 1);
        n.input_shift = vec![1.0, 3.0];
        n.input_scale = vec![1.0, 3.0];
        n.output_scale[0] = 0.7;
        let colloc: Vec<(f64, f64)> = (0..5).map(|i| (0.37 * i as f64, 0.5 + i as f64)).collect();
        let batch = PreparedBatch::new(&toy_data(4), &colloc, &n, &Decay).unwrap();
        let w = LossWeightTable {
            k: 1.0,
            x: vec![1.3],
            dt: vec![0.6],
            f: vec![0.9],
        };
        let (_, g) = loss_gradients(&p, &n, &batch, mode, &w, &Decay).unwrap();
        let flat = p.flat();
        let loss_at = |v: &[f64]| {
            let q = MlpParameters::from_flat(&c, v).unwrap();
            let t = loss_terms(&q, &n, &batch, &Decay).unwrap();
            total_loss(&t, &w, mode)
        };
        for (i, gi) in g.flat().into_iter().enumerate() {
            let h = 1e-5;
            let mut a = flat.clone();
            let mut b = flat.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (loss_at(&a) - loss_at(&b)) / (2.0 * h);
            let scale = gi.abs().max(1e-6);
            assert!((fd - gi).abs() / scale < 1e-5, "{mode:?} param {i}: {fd} vs {gi}");
        }
    }

    #[test]
    fn gradients_match_finite_differences_in_every_mode() {
        for mode in [LossMode::Nn, LossMode::DtNn, LossMode::Pinn] {
            fd_check(mode);
        }
    }

    #[test]
    fn divergence_names_the_term() {
        let c = one_state_config();
        let mut p = MlpParameters::zeros(&c);
        p.layers[1].b[0] = 1e300;
        let n = Normalization::identity(2, 1);
        let batch = PreparedBatch::new(&toy_data(2), &[], &n, &Decay).unwrap();
        let w = LossWeightTable::uniform(1, 1.0);
        let err = loss_gradients(&p, &n, &batch, LossMode::Nn, &w, &Decay).unwrap_err();
        assert!(matches!(err, Error::Divergence { term: "x", state: 0 }));
    }
}
