use icepinn_autodiff::{Graph, Real, Shape, Tensor, Var};

use super::params::{Bound, WAM_COUNT};
use super::{ModelError, Result, LEVELS};

/// Vars of one attention block (channel MLP then spatial conv).
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub fc1: (Var, Var),
    pub fc2: (Var, Var),
    pub spatial: (Var, Var),
}

#[derive(Debug, Clone, Copy)]
pub struct WamParams {
    pub a_in_siv: Var,
    pub a_in_sic: Var,
    pub a_out_siv: Var,
    pub a_out_sic: Var,
    pub share: AttentionParams,
    pub siv: AttentionParams,
    pub sic: AttentionParams,
}

impl WamParams {
    pub fn lookup<T: Real>(bound: &Bound<'_, T>, k: usize) -> Result<Self> {
        let att = |path: &str| -> Result<AttentionParams> {
            let pair = |layer: &str| -> Result<(Var, Var)> {
                Ok((
                    bound.var(&format!("wam{k}.{path}.{layer}.weight"))?,
                    bound.var(&format!("wam{k}.{path}.{layer}.bias"))?,
                ))
            };
            Ok(AttentionParams {
                fc1: pair("channel.fc1")?,
                fc2: pair("channel.fc2")?,
                spatial: pair("spatial")?,
            })
        };
        Ok(Self {
            a_in_siv: bound.var(&format!("wam{k}.a_in_siv"))?,
            a_in_sic: bound.var(&format!("wam{k}.a_in_sic"))?,
            a_out_siv: bound.var(&format!("wam{k}.a_out_siv"))?,
            a_out_sic: bound.var(&format!("wam{k}.a_out_sic"))?,
            share: att("share")?,
            siv: att("siv")?,
            sic: att("sic")?,
        })
    }
}

/// `x * sigmoid(mlp(avgpool x) + mlp(maxpool x))` with one shared MLP.
pub fn channel_attention<T: Real>(g: &mut Graph<T>, x: Var, fc1: (Var, Var), fc2: (Var, Var)) -> Result<Var> {
    let avg = g.global_avg_pool(x);
    let max = g.global_max_pool(x);
    let mut mlp = |z: Var| -> Result<Var> {
        let h = g.dense(z, fc1.0, fc1.1)?;
        let h = g.relu(h);
        Ok(g.dense(h, fc2.0, fc2.1)?)
    };
    let (a, m) = (mlp(avg)?, mlp(max)?);
    let logits = g.add(a, m)?;
    let gate = g.sigmoid(logits);
    Ok(g.mul_channels(x, gate)?)
}

/// `x * sigmoid(conv([mean_c x, max_c x]))`, gate broadcast over channels.
pub fn spatial_attention<T: Real>(g: &mut Graph<T>, x: Var, conv: (Var, Var)) -> Result<Var> {
    let k = g.shape(conv.0).h;
    let mean = g.channel_mean(x);
    let max = g.channel_max(x);
    let pooled = g.concat_channels(&[mean, max])?;
    let logits = g.conv2d(pooled, conv.0, conv.1, k / 2)?;
    let gate = g.sigmoid(logits);
    Ok(g.mul_spatial(x, gate)?)
}

fn attend<T: Real>(g: &mut Graph<T>, x: Var, p: &AttentionParams) -> Result<Var> {
    let c = channel_attention(g, x, p.fc1, p.fc2)?;
    spatial_attention(g, c, p.spatial)
}

/// Weighting attention module: fuses both branches into a shared map,
/// attends all three maps and returns each branch plus its weighted share.
pub fn wam<T: Real>(g: &mut Graph<T>, xi_siv: Var, xi_sic: Var, p: &WamParams) -> Result<(Var, Var)> {
    let a = g.scale_by(xi_siv, p.a_in_siv)?;
    let b = g.scale_by(xi_sic, p.a_in_sic)?;
    let share = g.add(a, b)?;
    let att_share = attend(g, share, &p.share)?;
    let att_siv = attend(g, xi_siv, &p.siv)?;
    let att_sic = attend(g, xi_sic, &p.sic)?;
    let back_siv = g.scale_by(att_share, p.a_out_siv)?;
    let back_sic = g.scale_by(att_share, p.a_out_sic)?;
    Ok((g.add(att_siv, back_siv)?, g.add(att_sic, back_sic)?))
}

fn conv_tanh<T: Real>(g: &mut Graph<T>, bound: &Bound<'_, T>, x: Var, name: &str) -> Result<Var> {
    let w = bound.var(&format!("{name}.weight"))?;
    let b = bound.var(&format!("{name}.bias"))?;
    let y = g.conv2d(x, w, b, 1)?;
    Ok(g.tanh(y))
}

fn double_conv<T: Real>(g: &mut Graph<T>, bound: &Bound<'_, T>, x: Var, block: &str) -> Result<Var> {
    let y = conv_tanh(g, bound, x, &format!("{block}.conv1"))?;
    conv_tanh(g, bound, y, &format!("{block}.conv2"))
}

/// Appends x and y coordinate channels in `[-1, 1]` (y up).
fn with_coordinates<T: Real>(g: &mut Graph<T>, input: Var) -> Result<Var> {
    let s = g.shape(input);
    let mut data = Vec::with_capacity(2 * s.n * s.plane());
    let span = |n: usize, i: usize| if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };
    for _ in 0..s.n {
        for _ in 0..s.h {
            data.extend((0..s.w).map(|x| T::lit(span(s.w, x))));
        }
        for y in 0..s.h {
            let v = T::lit(-span(s.h, y));
            data.extend(std::iter::repeat(v).take(s.w));
        }
    }
    let coords = g.constant(Tensor::from_vec(Shape::new(s.n, 2, s.h, s.w), data)?);
    Ok(g.concat_channels(&[input, coords])?)
}

/// Runs both branches. Returns `(siv (B, 2, H, W), sic (B, 1, H, W))`.
pub fn forward<T: Real>(g: &mut Graph<T>, bound: &Bound<'_, T>, input: Var) -> Result<(Var, Var)> {
    let cfg = bound.config().clone();
    let s = g.shape(input);
    if s.c != cfg.in_channels {
        return Err(ModelError::Input {
            got: s,
            reason: format!("expected {} channels", cfg.in_channels),
        });
    }
    let factor = 1 << LEVELS;
    if s.h % factor != 0 || s.w % factor != 0 || s.h == 0 || s.w == 0 {
        return Err(ModelError::Input {
            got: s,
            reason: format!("height and width must be positive multiples of {factor}"),
        });
    }
    let x = if cfg.include_xy { with_coordinates(g, input)? } else { input };
    let wams: Vec<WamParams> = (1..=WAM_COUNT)
        .map(|k| WamParams::lookup(bound, k))
        .collect::<Result<_>>()?;

    let (mut a, mut b) = (x, x);
    let mut skips = Vec::with_capacity(LEVELS);
    for l in 1..=LEVELS {
        let ea = double_conv(g, bound, a, &format!("siv.enc{l}"))?;
        let eb = double_conv(g, bound, b, &format!("sic.enc{l}"))?;
        let (ea, eb) = wam(g, ea, eb, &wams[l - 1])?;
        skips.push((ea, eb));
        a = g.maxpool2(ea)?;
        b = g.maxpool2(eb)?;
    }
    a = double_conv(g, bound, a, "siv.bottleneck")?;
    b = double_conv(g, bound, b, "sic.bottleneck")?;
    for l in (1..=LEVELS).rev() {
        let (sa, sb) = skips[l - 1];
        let mut decode = |x: Var, skip: Var, branch: &str| -> Result<Var> {
            let w = bound.var(&format!("{branch}.dec{l}.up.weight"))?;
            let bias = bound.var(&format!("{branch}.dec{l}.up.bias"))?;
            let up = g.upconv2(x, w, bias)?;
            let cat = g.concat_channels(&[up, skip])?;
            double_conv(g, bound, cat, &format!("{branch}.dec{l}"))
        };
        let da = decode(a, sa, "siv")?;
        let db = decode(b, sb, "sic")?;
        let k = 2 * LEVELS + 1 - l;
        (a, b) = wam(g, da, db, &wams[k - 1])?;
    }
    let head = |g: &mut Graph<T>, x: Var, branch: &str| -> Result<Var> {
        let w = bound.var(&format!("{branch}.head.weight"))?;
        let bias = bound.var(&format!("{branch}.head.bias"))?;
        Ok(g.conv2d(x, w, bias, 0)?)
    };
    let siv = head(g, a, "siv")?;
    let sic = head(g, b, "sic")?;
    let sic = if cfg.sic_sigmoid { g.sigmoid(sic) } else { sic };
    Ok((siv, sic))
}
