//! Finite-difference operators and the three loss terms, built on the
//! autodiff graph so every term is differentiable wrt the predictions.
//!
//! Field tensors are `(B, 1, H, W)`; masks are flat `B * H * W` booleans
//! in the same order. Velocities entering the physics terms are in km/day,
//! concentrations are fractions, and the time step is one day.

use icepinn_autodiff::{AutodiffError, Graph, Real, Shape, Tensor, Var};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::NominalRange;
use crate::grid::GridGeometry;

/// Concentration below which ice is treated as open water.
pub const OPEN_WATER_SIC: f64 = 0.15;

/// Per-day bound on the thermodynamic source below which no penalty applies.
pub const SOURCE_BOUND: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("{0}: no valid pixels")]
    EmptyMask(&'static str),
    #[error("invalid loss weights: {0}")]
    Weights(String),
}

pub type Result<T> = std::result::Result<T, PhysicsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_sat: f64,
    pub lambda_therm: f64,
}

impl LossWeights {
    pub const NONE: LossWeights = LossWeights {
        lambda_sat: 0.0,
        lambda_therm: 0.0,
    };

    pub fn new(lambda_sat: f64, lambda_therm: f64) -> Result<Self> {
        let w = Self {
            lambda_sat,
            lambda_therm,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_sat", self.lambda_sat), ("lambda_therm", self.lambda_therm)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PhysicsError::Weights(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub data: f64,
    pub sat: f64,
    pub therm: f64,
    pub total: f64,
    pub valid_pixels: usize,
}

fn check_field<T: Real>(g: &Graph<T>, v: Var, reference: Shape, op: &'static str) -> Result<()> {
    let s = g.shape(v);
    if s != reference || s.c != 1 {
        return Err(AutodiffError::ShapeMismatch {
            op,
            expected: reference.with_channels(1),
            got: s,
        }
        .into());
    }
    Ok(())
}

fn check_mask(mask: &[bool], shape: Shape, op: &'static str) -> Result<()> {
    if mask.len() != shape.n * shape.plane() {
        return Err(AutodiffError::DataLength {
            shape,
            len: mask.len(),
            expected: shape.n * shape.plane(),
        }
        .into());
    }
    if !mask.iter().any(|m| *m) {
        return Err(PhysicsError::EmptyMask(op));
    }
    Ok(())
}

/// Mean over valid pixels of `du^2 + dv^2 + dA^2`.
#[allow(clippy::too_many_arguments)]
pub fn data_loss<T: Real>(
    g: &mut Graph<T>,
    pred_u: Var,
    pred_v: Var,
    pred_sic: Var,
    obs_u: Var,
    obs_v: Var,
    obs_sic: Var,
    mask: &[bool],
) -> Result<Var> {
    let s = g.shape(pred_u);
    for v in [pred_v, pred_sic, obs_u, obs_v, obs_sic] {
        check_field(g, v, s, "data_loss")?;
    }
    check_mask(mask, s, "data_loss")?;
    let mut acc = None;
    for (p, o) in [(pred_u, obs_u), (pred_v, obs_v), (pred_sic, obs_sic)] {
        let d = g.sub(p, o)?;
        let sq = g.square(d);
        acc = Some(match acc {
            None => sq,
            Some(a) => g.add(a, sq)?,
        });
    }
    Ok(g.masked_mean(acc.expect("three terms"), mask)?)
}

/// Mean over valid pixels of `(u^2 + v^2) * [A_p < 0.15]`. The indicator is
/// read off the current value of `pred_sic` and held constant.
pub fn sat_loss<T: Real>(g: &mut Graph<T>, u_kmday: Var, v_kmday: Var, pred_sic: Var, mask: &[bool]) -> Result<Var> {
    let s = g.shape(u_kmday);
    check_field(g, v_kmday, s, "sat_loss")?;
    check_field(g, pred_sic, s, "sat_loss")?;
    check_mask(mask, s, "sat_loss")?;
    let open: Vec<T> = g
        .value(pred_sic)
        .data()
        .iter()
        .map(|a| if *a < T::lit(OPEN_WATER_SIC) { T::one() } else { T::zero() })
        .collect();
    let uu = g.square(u_kmday);
    let vv = g.square(v_kmday);
    let speed2 = g.add(uu, vv)?;
    let gated = g.mul_const(speed2, open)?;
    Ok(g.masked_mean(gated, mask)?)
}

/// Cells whose own value and every difference-stencil neighbour are valid.
pub fn stencil_mask(mask: &[bool], batch: usize, height: usize, width: usize) -> Vec<bool> {
    let plane = height * width;
    assert_eq!(mask.len(), batch * plane, "mask does not cover {batch}x{height}x{width}");
    let taps = |i: usize, len: usize| -> [usize; 2] {
        if i == 0 {
            [0, 1]
        } else if i == len - 1 {
            [len - 2, len - 1]
        } else {
            [i - 1, i + 1]
        }
    };
    let mut out = vec![false; mask.len()];
    for b in 0..batch {
        let m = &mask[b * plane..(b + 1) * plane];
        for y in 0..height {
            for x in 0..width {
                let ok = m[y * width + x]
                    && taps(x, width).iter().all(|xx| m[y * width + xx])
                    && taps(y, height).iter().all(|yy| m[yy * width + x]);
                out[b * plane + y * width + x] = ok;
            }
        }
    }
    out
}

/// `d(uA)/dx + d(vA)/dy` in day^-1 with x to the east (increasing column)
/// and y to the north (decreasing row). Returns the divergence and the
/// stencil-restricted validity mask.
pub fn advection_divergence<T: Real>(
    g: &mut Graph<T>,
    u: Var,
    v: Var,
    a: Var,
    geometry: &GridGeometry,
    mask: &[bool],
) -> Result<(Var, Vec<bool>)> {
    let s = g.shape(a);
    check_field(g, u, s, "advection_divergence")?;
    check_field(g, v, s, "advection_divergence")?;
    if s.h != geometry.height || s.w != geometry.width {
        return Err(PhysicsError::GeometryMismatch(format!(
            "fields are {}x{}, geometry is {}x{}",
            s.h, s.w, geometry.height, geometry.width
        )));
    }
    if mask.len() != s.n * s.plane() {
        return Err(AutodiffError::DataLength {
            shape: s,
            len: mask.len(),
            expected: s.n * s.plane(),
        }
        .into());
    }
    let fx = g.mul(u, a)?;
    let fy = g.mul(v, a)?;
    let dfx = g.diff_x(fx, geometry.cell_size_km)?;
    let dfy = g.diff_y(fy, geometry.cell_size_km)?;
    let div = g.add(dfx, dfy)?;
    Ok((div, stencil_mask(mask, s.n, s.h, s.w)))
}

/// The source term `S_A = (A_p - A_prev) / 1 day + div(u A_p)` and its mask.
#[allow(clippy::too_many_arguments)]
pub fn source_term<T: Real>(
    g: &mut Graph<T>,
    pred_sic: Var,
    prev_sic: Var,
    u_kmday: Var,
    v_kmday: Var,
    geometry: &GridGeometry,
    mask: &[bool],
) -> Result<(Var, Vec<bool>)> {
    check_field(g, prev_sic, g.shape(pred_sic), "source_term")?;
    let (div, valid) = advection_divergence(g, u_kmday, v_kmday, pred_sic, geometry, mask)?;
    let dadt = g.sub(pred_sic, prev_sic)?;
    Ok((g.add(dadt, div)?, valid))
}

/// Mean over stencil-valid pixels of `relu(|S_A| - 1)`.
#[allow(clippy::too_many_arguments)]
pub fn therm_loss<T: Real>(
    g: &mut Graph<T>,
    pred_sic: Var,
    prev_sic: Var,
    u_kmday: Var,
    v_kmday: Var,
    geometry: &GridGeometry,
    mask: &[bool],
) -> Result<Var> {
    let (sa, valid) = source_term(g, pred_sic, prev_sic, u_kmday, v_kmday, geometry, mask)?;
    if !valid.iter().any(|m| *m) {
        return Err(PhysicsError::EmptyMask("therm_loss"));
    }
    let mag = g.abs(sa);
    let excess = g.affine(mag, T::one(), T::lit(-SOURCE_BOUND));
    let pen = g.relu(excess);
    Ok(g.masked_mean(pen, &valid)?)
}

/// Normalized drift back to km/day.
pub fn denormalize<T: Real>(g: &mut Graph<T>, normalized: Var, range: NominalRange) -> Var {
    g.affine(normalized, T::lit(range.half_width()), T::lit(range.midpoint()))
}

/// Everything the objective needs for one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    /// `(B, 2, H, W)` normalized drift prediction.
    pub siv: Var,
    /// `(B, 1, H, W)` concentration prediction (fraction).
    pub sic: Var,
    /// `(B, 3, H, W)` targets: normalized u, v and fraction.
    pub target: Var,
    /// `(B, 1, H, W)` last observed concentration.
    pub prev_sic: Var,
    pub mask: &'a [bool],
    pub geometry: &'a GridGeometry,
    pub u_range: NominalRange,
    pub v_range: NominalRange,
}

/// `L = L_data + lambda_sat L_sat + lambda_therm L_therm`.
pub fn total_loss<T: Real>(g: &mut Graph<T>, inp: LossInputs<'_>, weights: LossWeights) -> Result<(Var, LossBreakdown)> {
    weights.validate()?;
    let s = g.shape(inp.sic);
    let pu = g.slice_channels(inp.siv, 0, 1)?;
    let pv = g.slice_channels(inp.siv, 1, 1)?;
    let ou = g.slice_channels(inp.target, 0, 1)?;
    let ov = g.slice_channels(inp.target, 1, 1)?;
    let oa = g.slice_channels(inp.target, 2, 1)?;
    let data = data_loss(g, pu, pv, inp.sic, ou, ov, oa, inp.mask)?;

    let uk = denormalize(g, pu, inp.u_range);
    let vk = denormalize(g, pv, inp.v_range);
    let sat = sat_loss(g, uk, vk, inp.sic, inp.mask)?;
    let therm = therm_loss(g, inp.sic, inp.prev_sic, uk, vk, inp.geometry, inp.mask)?;

    let ws = g.scale(sat, T::lit(weights.lambda_sat));
    let wt = g.scale(therm, T::lit(weights.lambda_therm));
    let partial = g.add(data, ws)?;
    let total = g.add(partial, wt)?;
    let scalar = |g: &Graph<T>, v: Var| g.value(v).data()[0].to_f64_lossy();
    let breakdown = LossBreakdown {
        data: scalar(g, data),
        sat: scalar(g, sat),
        therm: scalar(g, therm),
        total: scalar(g, total),
        valid_pixels: inp.mask.iter().filter(|m| **m).count(),
    };
    debug_assert_eq!(s.c, 1);
    Ok((total, breakdown))
}

/// Plain evaluation of `S_A` for one sample of `(H, W)` fields, returning
/// values and the stencil-restricted mask.
pub fn source_term_values(
    pred_sic: &[f32],
    prev_sic: &[f32],
    u_kmday: &[f32],
    v_kmday: &[f32],
    geometry: &GridGeometry,
    mask: &[bool],
) -> Result<(Vec<f64>, Vec<bool>)> {
    let shape = Shape::new(1, 1, geometry.height, geometry.width);
    let mut g = Graph::<f64>::new();
    let mut leaf = |vals: &[f32]| -> Result<Var> {
        let data = vals.iter().map(|v| f64::from(*v)).collect();
        Ok(g.constant(Tensor::from_vec(shape, data)?))
    };
    let (a, p, u, v) = (leaf(pred_sic)?, leaf(prev_sic)?, leaf(u_kmday)?, leaf(v_kmday)?);
    let (sa, valid) = source_term(&mut g, a, p, u, v, geometry, mask)?;
    Ok((g.value(sa).data().to_vec(), valid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(h: usize, w: usize) -> GridGeometry {
        GridGeometry::ease25(h, w).unwrap()
    }

    fn field(g: &mut Graph<f64>, h: usize, w: usize, vals: Vec<f64>) -> Var {
        g.constant(Tensor::from_vec(Shape::new(1, 1, h, w), vals).unwrap())
    }

    fn val(g: &Graph<f64>, v: Var) -> f64 {
        g.value(v).data()[0]
    }

    #[test]
    fn data_loss_cases() {
        let mut g = Graph::new();
        let zero = field(&mut g, 8, 8, vec![0.0; 64]);
        let one = field(&mut g, 8, 8, vec![1.0; 64]);
        let half = field(&mut g, 8, 8, vec![0.5; 64]);
        let mask = vec![true; 64];
        let l = data_loss(&mut g, zero, zero, half, zero, zero, half, &mask).unwrap();
        assert_eq!(val(&g, l), 0.0);
        let l = data_loss(&mut g, one, zero, half, zero, zero, half, &mask).unwrap();
        assert_eq!(val(&g, l), 1.0);
        assert!(matches!(
            data_loss(&mut g, one, zero, half, zero, zero, half, &[false; 64]),
            Err(PhysicsError::EmptyMask(_))
        ));
    }

    #[test]
    fn sat_loss_cases() {
        let mut g = Graph::new();
        let mask = vec![true; 64];
        let mut u = vec![0.0; 64];
        let mut v = vec![0.0; 64];
        u[10] = 3.0;
        v[10] = 4.0;
        let (uv, vv) = (field(&mut g, 8, 8, u.clone()), field(&mut g, 8, 8, v.clone()));
        let ice = field(&mut g, 8, 8, vec![0.5; 64]);
        let l = sat_loss(&mut g, uv, vv, ice, &mask).unwrap();
        assert_eq!(val(&g, l), 0.0);
        let open = field(&mut g, 8, 8, vec![0.10; 64]);
        let l = sat_loss(&mut g, uv, vv, open, &mask).unwrap();
        assert_eq!(val(&g, l), 25.0 / 64.0);
        let z = field(&mut g, 8, 8, vec![0.0; 64]);
        let l = sat_loss(&mut g, z, z, open, &mask).unwrap();
        assert_eq!(val(&g, l), 0.0);
    }

    #[test]
    fn sat_indicator_carries_no_gradient() {
        let mut g = Graph::new();
        let s = Shape::new(1, 1, 8, 8);
        let u = g.param(Tensor::full(s, 2.0));
        let a = g.param(Tensor::full(s, 0.1));
        let l = sat_loss(&mut g, u, u, a, &[true; 64]).unwrap();
        let grads = g.backward(l).unwrap();
        assert!(grads.get(a).is_none_or(|ga| ga.iter().all(|x| *x == 0.0)));
        assert!(grads.get(u).unwrap().iter().all(|x| *x > 0.0));
    }

    #[test]
    fn divergence_of_constant_and_ramp() {
        let (h, w) = (8, 10);
        let gm = geom(h, w);
        let mask = vec![true; h * w];
        let mut g = Graph::new();
        let c = field(&mut g, h, w, vec![3.0; h * w]);
        let one = field(&mut g, h, w, vec![1.0; h * w]);
        let (d, _) = advection_divergence(&mut g, c, c, c, &gm, &mask).unwrap();
        assert!(g.value(d).data().iter().all(|x| x.abs() < 1e-12));

        // u = c * x (in km), so du/dx = c per day
        let rate = 0.04;
        let ramp: Vec<f64> = (0..h * w).map(|i| rate * (i % w) as f64 * 25.0).collect();
        let u = field(&mut g, h, w, ramp);
        let z = field(&mut g, h, w, vec![0.0; h * w]);
        let (d, _) = advection_divergence(&mut g, u, z, one, &gm, &mask).unwrap();
        for (i, x) in g.value(d).data().iter().enumerate() {
            assert!((x - rate).abs() < 1e-12, "cell {i}: {x}");
        }
    }

    #[test]
    fn northward_ramp_has_positive_divergence() {
        // v grows toward row 0 (north)
        let (h, w) = (8, 8);
        let mut g = Graph::new();
        let vals: Vec<f64> = (0..h * w).map(|i| (h - 1 - i / w) as f64 * 25.0).collect();
        let v = field(&mut g, h, w, vals);
        let z = field(&mut g, h, w, vec![0.0; h * w]);
        let one = field(&mut g, h, w, vec![1.0; h * w]);
        let (d, _) = advection_divergence(&mut g, z, v, one, &geom(h, w), &[true; 64]).unwrap();
        assert!(g.value(d).data().iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn stencil_excludes_neighbours_of_invalid() {
        let (h, w) = (8, 8);
        let mut mask = vec![true; h * w];
        mask[3 * w + 3] = false;
        let s = stencil_mask(&mask, 1, h, w);
        for (y, x) in [(3, 3), (2, 3), (4, 3), (3, 2), (3, 4)] {
            assert!(!s[y * w + x]);
        }
        assert!(s[2 * w + 2]);
        // border cells use one-sided taps toward the interior
        let mut m2 = vec![true; h * w];
        m2[1] = false;
        let s2 = stencil_mask(&m2, 1, h, w);
        assert!(!s2[0] && !s2[2] && !s2[w + 1]);
        assert!(s2[w]);
    }

    #[test]
    fn therm_loss_cases() {
        let (h, w) = (8, 8);
        let gm = geom(h, w);
        let mask = vec![true; 64];
        let mut g = Graph::new();
        let a = field(&mut g, h, w, vec![0.6; 64]);
        let z = field(&mut g, h, w, vec![0.0; 64]);
        let l = therm_loss(&mut g, a, a, z, z, &gm, &mask).unwrap();
        assert_eq!(val(&g, l), 0.0);

        // dA/dt = 1.5 everywhere, no motion, one valid pixel
        let prev = field(&mut g, h, w, vec![-0.9; 64]);
        let mut one_pixel = vec![false; 64];
        for i in [2 * w + 2, 2 * w + 1, 2 * w + 3, w + 2, 3 * w + 2] {
            one_pixel[i] = true;
        }
        let l = therm_loss(&mut g, a, prev, z, z, &gm, &one_pixel).unwrap();
        assert!((val(&g, l) - 0.5).abs() < 1e-12);

        let mut lonely = vec![false; 64];
        lonely[20] = true;
        assert!(matches!(
            therm_loss(&mut g, a, prev, z, z, &gm, &lonely),
            Err(PhysicsError::EmptyMask("therm_loss"))
        ));
    }

    fn inputs_for<'a>(g: &mut Graph<f64>, gm: &'a GridGeometry, mask: &'a [bool], a_pred: f64) -> LossInputs<'a> {
        let (h, w) = (gm.height, gm.width);
        let n = h * w;
        let siv_vals: Vec<f64> = (0..2 * n).map(|i| 0.01 * (i % 7) as f64).collect();
        let siv = g.constant(Tensor::from_vec(Shape::new(1, 2, h, w), siv_vals).unwrap());
        let sic = field(g, h, w, vec![a_pred; n]);
        let target = g.constant(Tensor::full(Shape::new(1, 3, h, w), 0.05));
        let prev = field(g, h, w, vec![0.5; n]);
        let range = NominalRange::new(-50.0, 50.0);
        LossInputs {
            siv,
            sic,
            target,
            prev_sic: prev,
            mask,
            geometry: gm,
            u_range: range,
            v_range: range,
        }
    }

    #[test]
    fn total_loss_combines_terms() {
        let gm = geom(8, 8);
        let mask = vec![true; 64];
        let mut g = Graph::new();
        let inp = inputs_for(&mut g, &gm, &mask, 0.1);
        let (l0, b0) = total_loss(&mut g, inp, LossWeights::NONE).unwrap();
        assert_eq!(val(&g, l0), b0.data);
        let (_, b1) = total_loss(&mut g, inp, LossWeights::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(b1.data, b0.data);
        assert!((b1.total - (b1.data + b1.sat + b1.therm)).abs() < 1e-12);
        assert!(b1.sat > 0.0);
        let (_, b5) = total_loss(&mut g, inp, LossWeights::new(5.0, 5.0).unwrap()).unwrap();
        assert!((b5.total - (b5.data + 5.0 * (b5.sat + b5.therm))).abs() < 1e-12);
        assert!(LossWeights::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn hand_sum_of_components() {
        let b = LossBreakdown {
            data: 0.2,
            sat: 0.05,
            therm: 0.1,
            ..Default::default()
        };
        let w = LossWeights::new(1.0, 1.0).unwrap();
        let total = b.data + w.lambda_sat * b.sat + w.lambda_therm * b.therm;
        assert!((total - 0.35).abs() < 1e-15);
    }

    #[test]
    fn denormalize_reference_points() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.0, 1.0, -1.0]).unwrap());
        let y = denormalize(&mut g, x, NominalRange::new(-50.0, 50.0));
        assert_eq!(g.value(y).data(), &[0.0, 50.0, -50.0]);
        let t = denormalize(&mut g, x, NominalRange::new(-50.0, 30.0));
        assert_eq!(g.value(t).data(), &[-10.0, 30.0, -50.0]);
    }

    proptest! {
        #[test]
        fn physics_losses_nonnegative_and_banded(
            seed in any::<u64>(),
            ice in proptest::bool::ANY,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (h, w) = (8, 8);
            let gm = geom(h, w);
            let mask: Vec<bool> = (0..64).map(|_| rng.gen_bool(0.9)).collect();
            prop_assume!(stencil_mask(&mask, 1, h, w).iter().any(|m| *m));
            let mut g = Graph::new();
            let a: Vec<f64> = (0..64).map(|_| if ice { rng.gen_range(0.15..1.0) } else { rng.gen_range(0.0..1.0) }).collect();
            let u: Vec<f64> = (0..64).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let v: Vec<f64> = (0..64).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let prev: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (av, uv, vv, pv) = (field(&mut g, h, w, a), field(&mut g, h, w, u), field(&mut g, h, w, v), field(&mut g, h, w, prev));
            let sat = sat_loss(&mut g, uv, vv, av, &mask).unwrap();
            let therm = therm_loss(&mut g, av, pv, uv, vv, &gm, &mask).unwrap();
            prop_assert!(val(&g, sat) >= 0.0);
            prop_assert!(val(&g, therm) >= 0.0);
            if ice {
                prop_assert_eq!(val(&g, sat), 0.0);
            }
        }
    }
}
