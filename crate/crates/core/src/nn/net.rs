//! Forward and backward passes of the network, split into trunk, recurrent
//! core and heads so callers can combine them per loss.

use std::collections::HashMap;
use std::sync::Arc;

use super::ops::{
    cnp_to_ncp, conv_backward, conv_forward, deconv_backward, deconv_forward, deconv_window, linear_backward,
    linear_forward, ncp_to_cnp, relu_backward, relu_inplace, sigmoid, softmax_rows, Window,
};
use super::{Block, GoalFusion, NetError, Params, Real, DECONV_KERNEL, DECONV_STRIDE};
use crate::image::Image;

fn wb_mut<T>(g: &mut Params<T>, w: Block) -> (&mut [T], &mut [T]) {
    let i = w.index();
    let (a, b) = g.blocks.split_at_mut(i + 1);
    (&mut a[i], &mut b[0])
}

fn bias_of(w: Block) -> Block {
    Block::ALL[w.index() + 1]
}

/// One network input: the current observation and the goal image.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    pub obs: &'a Arc<Image>,
    pub target: &'a Arc<Image>,
}

/// Recurrent state of a batch: `h` and `c`, each `[B][H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Real> AgentState<T> {
    pub fn zeros(batch: usize, width: usize) -> Self {
        AgentState { h: vec![T::zero(); batch * width], c: vec![T::zero(); batch * width] }
    }

    pub fn width(&self, batch: usize) -> usize {
        self.h.len() / batch.max(1)
    }

    /// State of batch entry `b`.
    pub fn row(&self, b: usize, width: usize) -> AgentState<T> {
        AgentState { h: self.h[b * width..][..width].to_vec(), c: self.c[b * width..][..width].to_vec() }
    }

    pub fn set_row(&mut self, b: usize, width: usize, row: &AgentState<T>) {
        self.h[b * width..][..width].copy_from_slice(&row.h);
        self.c[b * width..][..width].copy_from_slice(&row.c);
    }

    pub fn reset_row(&mut self, b: usize, width: usize) {
        self.h[b * width..][..width].iter_mut().for_each(|v| *v = T::zero());
        self.c[b * width..][..width].iter_mut().for_each(|v| *v = T::zero());
    }
}

pub struct EncodeCache<T> {
    pub frames: usize,
    unique: usize,
    slots: Vec<[usize; 2]>,
    windows: [Window; 3],
    cols: [Vec<T>; 3],
    acts: [Vec<T>; 3],
    fc_in: Vec<T>,
    /// `[N][E]`, after the rectifier.
    pub emb: Vec<T>,
}

fn check_image(img: &Image, side: usize) -> Result<(), NetError> {
    if img.shape() != (3, side, side) {
        return Err(NetError::Shape { expected: (3, side, side), found: img.shape() });
    }
    Ok(())
}

/// Trunk and embedding layer over a batch of frames. Images shared between
/// frames (by pointer) are convolved once.
pub fn encode_forward<T: Real>(params: &Params<T>, frames: &[Frame<'_>]) -> Result<EncodeCache<T>, NetError> {
    let cfg = &params.config;
    let side = cfg.image_side;
    let plane = side * side;
    let mut inputs: Vec<(&Image, Option<&Image>)> = Vec::new();
    let mut slots = Vec::with_capacity(frames.len());
    match cfg.goal_fusion {
        GoalFusion::SharedTrunkConcat => {
            let mut seen: HashMap<*const Image, usize> = HashMap::new();
            for f in frames {
                check_image(f.obs, side)?;
                check_image(f.target, side)?;
                let mut sl = [0; 2];
                for (k, img) in [f.obs, f.target].into_iter().enumerate() {
                    sl[k] = *seen.entry(Arc::as_ptr(img)).or_insert_with(|| {
                        inputs.push((img.as_ref(), None));
                        inputs.len() - 1
                    });
                }
                slots.push(sl);
            }
        }
        GoalFusion::ChannelConcat => {
            let mut seen: HashMap<(*const Image, *const Image), usize> = HashMap::new();
            for f in frames {
                check_image(f.obs, side)?;
                check_image(f.target, side)?;
                let key = (Arc::as_ptr(f.obs), Arc::as_ptr(f.target));
                let u = *seen.entry(key).or_insert_with(|| {
                    inputs.push((f.obs.as_ref(), Some(f.target.as_ref())));
                    inputs.len() - 1
                });
                slots.push([u, u]);
            }
        }
    }
    let u = inputs.len();
    let cin = cfg.input_channels();
    let mut x0 = vec![T::zero(); cin * u * plane];
    for (k, (a, b)) in inputs.iter().enumerate() {
        for c in 0..3 {
            let dst = &mut x0[(c * u + k) * plane..][..plane];
            dst.iter_mut().zip(&a.data[c * plane..][..plane]).for_each(|(d, s)| *d = T::from_f32(*s));
            if let Some(b) = b {
                let dst = &mut x0[((c + 3) * u + k) * plane..][..plane];
                dst.iter_mut().zip(&b.data[c * plane..][..plane]).for_each(|(d, s)| *d = T::from_f32(*s));
            }
        }
    }

    let mut windows = [Window { channels: 0, batch: 0, height: 0, width: 0, kernel: 1, stride: 1 }; 3];
    let mut cols: [Vec<T>; 3] = Default::default();
    let mut acts: [Vec<T>; 3] = Default::default();
    let (mut ch, mut s) = (cin, side);
    let ws = [Block::Conv1W, Block::Conv2W, Block::Conv3W];
    for l in 0..3 {
        let spec = cfg.convs[l];
        let g = Window { channels: ch, batch: u, height: s, width: s, kernel: spec.kernel, stride: spec.stride };
        let input = if l == 0 { &x0 } else { &acts[l - 1] };
        let mut y = conv_forward(input, &g, params.get(ws[l]), params.get(bias_of(ws[l])), spec.channels, &mut cols[l]);
        relu_inplace(&mut y);
        acts[l] = y;
        windows[l] = g;
        ch = spec.channels;
        s = g.out_h();
    }
    let feat = cfg.trunk_features();
    let flat = cnp_to_ncp(&acts[2], ch, u, s * s);
    let fin = cfg.embedding_input();
    let n = frames.len();
    let mut fc_in = vec![T::zero(); n * fin];
    for (row, sl) in fc_in.chunks_mut(fin).zip(&slots) {
        row[..feat].copy_from_slice(&flat[sl[0] * feat..][..feat]);
        if cfg.goal_fusion == GoalFusion::SharedTrunkConcat {
            row[feat..].copy_from_slice(&flat[sl[1] * feat..][..feat]);
        }
    }
    let mut emb = linear_forward(&fc_in, params.get(Block::EmbW), params.get(Block::EmbB), n, fin, cfg.embedding);
    relu_inplace(&mut emb);
    Ok(EncodeCache { frames: n, unique: u, slots, windows, cols, acts, fc_in, emb })
}

/// Accumulates parameter gradients of the trunk and embedding layer.
pub fn encode_backward<T: Real>(params: &Params<T>, cache: &EncodeCache<T>, d_emb: &[T], grads: &mut Params<T>) {
    let cfg = &params.config;
    let n = cache.frames;
    let fin = cfg.embedding_input();
    let mut d = d_emb.to_vec();
    relu_backward(&mut d, &cache.emb);
    let (dw, db) = wb_mut(grads, Block::EmbW);
    let dfc = linear_backward(&d, &cache.fc_in, params.get(Block::EmbW), n, fin, cfg.embedding, dw, db, true)
        .expect("input gradient requested");
    let feat = cfg.trunk_features();
    let u = cache.unique;
    let mut d_flat = vec![T::zero(); u * feat];
    for (row, sl) in dfc.chunks(fin).zip(&cache.slots) {
        d_flat[sl[0] * feat..][..feat].iter_mut().zip(&row[..feat]).for_each(|(a, b)| *a += *b);
        if cfg.goal_fusion == GoalFusion::SharedTrunkConcat {
            d_flat[sl[1] * feat..][..feat].iter_mut().zip(&row[feat..]).for_each(|(a, b)| *a += *b);
        }
    }
    let s3 = cache.windows[2].out_h();
    let mut dy = ncp_to_cnp(&d_flat, cfg.convs[2].channels, u, s3 * s3);
    let ws = [Block::Conv1W, Block::Conv2W, Block::Conv3W];
    for l in (0..3).rev() {
        relu_backward(&mut dy, &cache.acts[l]);
        let (dw, db) = wb_mut(grads, ws[l]);
        let dx = conv_backward(&dy, &cache.windows[l], params.get(ws[l]), cfg.convs[l].channels, &cache.cols[l], dw, db, l > 0);
        if let Some(dx) = dx {
            dy = dx;
        }
    }
}

/// Inputs of the recurrent core over `steps x batch` frames, row index
/// `t * batch + b`.
pub struct CoreInput<'a, T> {
    pub steps: usize,
    pub batch: usize,
    pub emb: &'a [T],
    pub prev_action: &'a [Option<usize>],
    pub prev_reward: &'a [f32],
    /// State is zeroed before step `t` of entry `b` (episode start).
    pub reset: &'a [bool],
    pub init: &'a AgentState<T>,
}

pub struct CoreCache<T> {
    pub steps: usize,
    pub batch: usize,
    x: Vec<T>,
    gates: Vec<T>,
    tanh_c: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    reset: Vec<bool>,
    /// `[N][H]` hidden outputs.
    pub h: Vec<T>,
    pub final_state: AgentState<T>,
}

pub fn core_forward<T: Real>(params: &Params<T>, input: &CoreInput<'_, T>) -> CoreCache<T> {
    let cfg = &params.config;
    let (steps, batch) = (input.steps, input.batch);
    let n = steps * batch;
    let (e, hw, a) = (cfg.embedding, cfg.lstm, cfg.actions);
    let inp = cfg.core_input();
    assert_eq!(input.emb.len(), n * e, "embedding batch size");
    let mut x = vec![T::zero(); n * inp];
    for k in 0..n {
        let row = &mut x[k * inp..][..inp];
        row[..e].copy_from_slice(&input.emb[k * e..][..e]);
        if let Some(act) = input.prev_action[k] {
            row[e + act] = T::one();
        }
        row[e + a] = T::from_f32(input.prev_reward[k]);
    }
    let xw = linear_forward(&x, params.get(Block::LstmWx), params.get(Block::LstmB), n, inp, 4 * hw);
    let wh = params.get(Block::LstmWh);
    let mut gates = vec![T::zero(); n * 4 * hw];
    let mut tanh_c = vec![T::zero(); n * hw];
    let mut h_all = vec![T::zero(); n * hw];
    let mut h_prev_all = vec![T::zero(); n * hw];
    let mut c_prev_all = vec![T::zero(); n * hw];
    let mut c_all = vec![T::zero(); n * hw];
    let mut h = input.init.h.clone();
    let mut c = input.init.c.clone();
    let mut z = vec![T::zero(); batch * 4 * hw];
    for t in 0..steps {
        for b in 0..batch {
            if input.reset[t * batch + b] {
                h[b * hw..][..hw].iter_mut().for_each(|v| *v = T::zero());
                c[b * hw..][..hw].iter_mut().for_each(|v| *v = T::zero());
            }
        }
        let rows = t * batch..(t + 1) * batch;
        h_prev_all[rows.start * hw..rows.end * hw].copy_from_slice(&h);
        c_prev_all[rows.start * hw..rows.end * hw].copy_from_slice(&c);
        z.copy_from_slice(&xw[rows.start * 4 * hw..rows.end * 4 * hw]);
        super::ops::matmul(&mut z, &h, wh, batch, hw, 4 * hw, false, true, true);
        for b in 0..batch {
            let zr = &mut z[b * 4 * hw..][..4 * hw];
            for j in 0..hw {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[hw + j]);
                let g = zr[2 * hw + j].tanh();
                let o = sigmoid(zr[3 * hw + j]);
                zr[j] = i;
                zr[hw + j] = f;
                zr[2 * hw + j] = g;
                zr[3 * hw + j] = o;
                let cn = f * c[b * hw + j] + i * g;
                let tc = cn.tanh();
                c[b * hw + j] = cn;
                h[b * hw + j] = o * tc;
                let k = (t * batch + b) * hw + j;
                tanh_c[k] = tc;
                c_all[k] = cn;
            }
        }
        gates[rows.start * 4 * hw..rows.end * 4 * hw].copy_from_slice(&z);
        h_all[rows.start * hw..rows.end * hw].copy_from_slice(&h);
    }
    CoreCache {
        steps,
        batch,
        x,
        gates,
        tanh_c,
        h_prev: h_prev_all,
        c_prev: c_prev_all,
        reset: input.reset.to_vec(),
        h: h_all,
        final_state: AgentState { h, c },
    }
}

/// Backpropagation through time; returns the embedding gradient `[N][E]`.
/// No gradient flows into the initial state.
pub fn core_backward<T: Real>(params: &Params<T>, cache: &CoreCache<T>, d_h: &[T], grads: &mut Params<T>) -> Vec<T> {
    let cfg = &params.config;
    let (steps, batch) = (cache.steps, cache.batch);
    let n = steps * batch;
    let hw = cfg.lstm;
    let inp = cfg.core_input();
    let wh = params.get(Block::LstmWh);
    let mut dz_all = vec![T::zero(); n * 4 * hw];
    let mut dh_next = vec![T::zero(); batch * hw];
    let mut dc_next = vec![T::zero(); batch * hw];
    let one = T::one();
    for t in (0..steps).rev() {
        let rows = t * batch..(t + 1) * batch;
        for b in 0..batch {
            let k0 = t * batch + b;
            let gz = &cache.gates[k0 * 4 * hw..][..4 * hw];
            let dz = &mut dz_all[k0 * 4 * hw..][..4 * hw];
            for j in 0..hw {
                let k = k0 * hw + j;
                let (i, f, g, o) = (gz[j], gz[hw + j], gz[2 * hw + j], gz[3 * hw + j]);
                let dh = d_h[k] + dh_next[b * hw + j];
                let tc = cache.tanh_c[k];
                let d_o = dh * tc;
                let dc = dh * o * (one - tc * tc) + dc_next[b * hw + j];
                let di = dc * g;
                let dg = dc * i;
                let df = dc * cache.c_prev[k];
                dc_next[b * hw + j] = dc * f;
                dz[j] = di * i * (one - i);
                dz[hw + j] = df * f * (one - f);
                dz[2 * hw + j] = dg * (one - g * g);
                dz[3 * hw + j] = d_o * o * (one - o);
            }
        }
        let dz_t = &dz_all[rows.start * 4 * hw..rows.end * 4 * hw];
        super::ops::matmul(grads.get_mut(Block::LstmWh), dz_t, &cache.h_prev[rows.start * hw..rows.end * hw], 4 * hw, batch, hw, true, false, true);
        super::ops::matmul(&mut dh_next, dz_t, wh, batch, 4 * hw, hw, false, false, false);
        for b in 0..batch {
            if cache.reset[t * batch + b] {
                dh_next[b * hw..][..hw].iter_mut().for_each(|v| *v = T::zero());
                dc_next[b * hw..][..hw].iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }
    let (dw, db) = {
        let i = Block::LstmWx.index();
        let (a, rest) = grads.blocks.split_at_mut(i + 1);
        // LstmWx, LstmWh, LstmB are consecutive.
        (&mut a[i], &mut rest[1])
    };
    let dx = linear_backward(&dz_all, &cache.x, params.get(Block::LstmWx), n, inp, 4 * hw, dw, db, true)
        .expect("input gradient requested");
    let e = cfg.embedding;
    let mut d_emb = vec![T::zero(); n * e];
    for (d, s) in d_emb.chunks_mut(e).zip(dx.chunks(inp)) {
        d.copy_from_slice(&s[..e]);
    }
    d_emb
}

pub struct PolicyValue<T> {
    pub logits: Vec<T>,
    pub probs: Vec<T>,
    pub log_probs: Vec<T>,
    pub values: Vec<T>,
}

pub fn policy_value_forward<T: Real>(params: &Params<T>, h: &[T], n: usize) -> PolicyValue<T> {
    let cfg = &params.config;
    let logits = linear_forward(h, params.get(Block::PolicyW), params.get(Block::PolicyB), n, cfg.lstm, cfg.actions);
    let values = linear_forward(h, params.get(Block::ValueW), params.get(Block::ValueB), n, cfg.lstm, 1);
    let (probs, log_probs) = softmax_rows(&logits, cfg.actions);
    PolicyValue { logits, probs, log_probs, values }
}

pub fn policy_value_backward<T: Real>(
    params: &Params<T>,
    h: &[T],
    n: usize,
    d_logits: &[T],
    d_values: &[T],
    grads: &mut Params<T>,
) -> Vec<T> {
    let cfg = &params.config;
    let (dw, db) = wb_mut(grads, Block::PolicyW);
    let mut dh = linear_backward(d_logits, h, params.get(Block::PolicyW), n, cfg.lstm, cfg.actions, dw, db, true)
        .expect("input gradient requested");
    let (dw, db) = wb_mut(grads, Block::ValueW);
    let dv = linear_backward(d_values, h, params.get(Block::ValueW), n, cfg.lstm, 1, dw, db, true)
        .expect("input gradient requested");
    dh.iter_mut().zip(&dv).for_each(|(a, b)| *a += *b);
    dh
}

pub struct PixelControlCache<T> {
    n: usize,
    bottom: Vec<T>,
    bottom_cnp: Vec<T>,
    window: Window,
    /// `[N][A][q][q]` dueling Q-values.
    pub q: Vec<T>,
}

pub fn pixel_control_forward<T: Real>(params: &Params<T>, h: &[T], n: usize) -> PixelControlCache<T> {
    let cfg = &params.config;
    let (c2, s2) = cfg.pc_bottom();
    let a = cfg.actions;
    let mut bottom = linear_forward(h, params.get(Block::PcFcW), params.get(Block::PcFcB), n, cfg.lstm, cfg.pc_bottom_len());
    relu_inplace(&mut bottom);
    let bottom_cnp = ncp_to_cnp(&bottom, c2, n, s2 * s2);
    let gv = deconv_window(1, n, s2, s2, DECONV_KERNEL, DECONV_STRIDE);
    let ga = deconv_window(a, n, s2, s2, DECONV_KERNEL, DECONV_STRIDE);
    let v = deconv_forward(&bottom_cnp, &gv, params.get(Block::PcValueW), params.get(Block::PcValueB), c2);
    let adv = deconv_forward(&bottom_cnp, &ga, params.get(Block::PcAdvW), params.get(Block::PcAdvB), c2);
    let q_side = cfg.q_side();
    let p = q_side * q_side;
    let inv_a = T::one() / T::from_f64(a as f64);
    let mut q = vec![T::zero(); n * a * p];
    for ni in 0..n {
        for cell in 0..p {
            let mean = (0..a).map(|k| adv[(k * n + ni) * p + cell]).sum::<T>() * inv_a;
            let vv = v[ni * p + cell];
            for k in 0..a {
                q[(ni * a + k) * p + cell] = vv + adv[(k * n + ni) * p + cell] - mean;
            }
        }
    }
    PixelControlCache { n, bottom, bottom_cnp, window: gv, q }
}

pub fn pixel_control_backward<T: Real>(
    params: &Params<T>,
    h: &[T],
    cache: &PixelControlCache<T>,
    d_q: &[T],
    grads: &mut Params<T>,
) -> Vec<T> {
    let cfg = &params.config;
    let n = cache.n;
    let (c2, s2) = cfg.pc_bottom();
    let a = cfg.actions;
    let p = cache.window.height * cache.window.width;
    let inv_a = T::one() / T::from_f64(a as f64);
    let mut dv = vec![T::zero(); n * p];
    let mut dadv = vec![T::zero(); a * n * p];
    for ni in 0..n {
        for cell in 0..p {
            let s: T = (0..a).map(|k| d_q[(ni * a + k) * p + cell]).sum();
            dv[ni * p + cell] = s;
            for k in 0..a {
                dadv[(k * n + ni) * p + cell] = d_q[(ni * a + k) * p + cell] - s * inv_a;
            }
        }
    }
    let gv = cache.window;
    let ga = deconv_window(a, n, s2, s2, DECONV_KERNEL, DECONV_STRIDE);
    let (dw, db) = wb_mut(grads, Block::PcValueW);
    let mut d_bottom = deconv_backward(&dv, &gv, &cache.bottom_cnp, params.get(Block::PcValueW), c2, dw, db);
    let (dw, db) = wb_mut(grads, Block::PcAdvW);
    let d2 = deconv_backward(&dadv, &ga, &cache.bottom_cnp, params.get(Block::PcAdvW), c2, dw, db);
    d_bottom.iter_mut().zip(&d2).for_each(|(x, y)| *x += *y);
    let mut d_b = cnp_to_ncp(&d_bottom, c2, n, s2 * s2);
    relu_backward(&mut d_b, &cache.bottom);
    let (dw, db) = wb_mut(grads, Block::PcFcW);
    linear_backward(&d_b, h, params.get(Block::PcFcW), n, cfg.lstm, cfg.pc_bottom_len(), dw, db, true)
        .expect("input gradient requested")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReconHead {
    Observation,
    Target,
    Depth,
}

impl ReconHead {
    pub const ALL: [ReconHead; 3] = [ReconHead::Observation, ReconHead::Target, ReconHead::Depth];

    pub fn channels(self) -> usize {
        match self {
            ReconHead::Depth => 1,
            _ => 3,
        }
    }

    fn weight(self) -> Block {
        match self {
            ReconHead::Observation => Block::ReconObsW,
            ReconHead::Target => Block::ReconTargetW,
            ReconHead::Depth => Block::ReconDepthW,
        }
    }
}

pub struct ReconCache<T> {
    n: usize,
    fc: Vec<T>,
    fc_cnp: Vec<T>,
    shared: Vec<T>,
    heads: Vec<ReconHead>,
    /// `[N][C][R][R]` per requested head, in request order.
    pub outputs: Vec<Vec<T>>,
}

pub fn reconstruct_forward<T: Real>(params: &Params<T>, h: &[T], n: usize, heads: &[ReconHead]) -> ReconCache<T> {
    let cfg = &params.config;
    let (c3, s3) = cfg.recon_bottom();
    let rc = cfg.recon_channels;
    let (m, big) = cfg.recon_sides();
    let r = cfg.recon_side();
    let off = (big - r) / 2;
    let mut fc = linear_forward(h, params.get(Block::ReconFcW), params.get(Block::ReconFcB), n, cfg.lstm, cfg.recon_bottom_len());
    relu_inplace(&mut fc);
    let fc_cnp = ncp_to_cnp(&fc, c3, n, s3 * s3);
    let g1 = deconv_window(rc, n, s3, s3, DECONV_KERNEL, DECONV_STRIDE);
    let mut shared = deconv_forward(&fc_cnp, &g1, params.get(Block::ReconSharedW), params.get(Block::ReconSharedB), c3);
    relu_inplace(&mut shared);
    let mut outputs = Vec::with_capacity(heads.len());
    for &head in heads {
        let ch = head.channels();
        let g2 = deconv_window(ch, n, m, m, DECONV_KERNEL, DECONV_STRIDE);
        let w = head.weight();
        let full = deconv_forward(&shared, &g2, params.get(w), params.get(bias_of(w)), rc);
        let mut out = vec![T::zero(); n * ch * r * r];
        for c in 0..ch {
            for ni in 0..n {
                for y in 0..r {
                    let src = &full[((c * n + ni) * big + y + off) * big + off..][..r];
                    out[((ni * ch + c) * r + y) * r..][..r].copy_from_slice(src);
                }
            }
        }
        outputs.push(out);
    }
    ReconCache { n, fc, fc_cnp, shared, heads: heads.to_vec(), outputs }
}

/// `d_outputs` is aligned with the heads passed to [`reconstruct_forward`].
pub fn reconstruct_backward<T: Real>(
    params: &Params<T>,
    h: &[T],
    cache: &ReconCache<T>,
    d_outputs: &[Vec<T>],
    grads: &mut Params<T>,
) -> Vec<T> {
    let cfg = &params.config;
    let n = cache.n;
    let (c3, s3) = cfg.recon_bottom();
    let rc = cfg.recon_channels;
    let (m, big) = cfg.recon_sides();
    let r = cfg.recon_side();
    let off = (big - r) / 2;
    let mut d_shared = vec![T::zero(); cache.shared.len()];
    for (&head, d_out) in cache.heads.iter().zip(d_outputs) {
        let ch = head.channels();
        let g2 = deconv_window(ch, n, m, m, DECONV_KERNEL, DECONV_STRIDE);
        let mut d_full = vec![T::zero(); g2.input_len()];
        for c in 0..ch {
            for ni in 0..n {
                for y in 0..r {
                    d_full[((c * n + ni) * big + y + off) * big + off..][..r]
                        .copy_from_slice(&d_out[((ni * ch + c) * r + y) * r..][..r]);
                }
            }
        }
        let w = head.weight();
        let (dw, db) = wb_mut(grads, w);
        let d = deconv_backward(&d_full, &g2, &cache.shared, params.get(w), rc, dw, db);
        d_shared.iter_mut().zip(&d).for_each(|(a, b)| *a += *b);
    }
    relu_backward(&mut d_shared, &cache.shared);
    let g1 = deconv_window(rc, n, s3, s3, DECONV_KERNEL, DECONV_STRIDE);
    let (dw, db) = wb_mut(grads, Block::ReconSharedW);
    let d_fc_cnp = deconv_backward(&d_shared, &g1, &cache.fc_cnp, params.get(Block::ReconSharedW), c3, dw, db);
    let mut d_fc = cnp_to_ncp(&d_fc_cnp, c3, n, s3 * s3);
    relu_backward(&mut d_fc, &cache.fc);
    let (dw, db) = wb_mut(grads, Block::ReconFcW);
    linear_backward(&d_fc, h, params.get(Block::ReconFcW), n, cfg.lstm, cfg.recon_bottom_len(), dw, db, true)
        .expect("input gradient requested")
}

/// Class scores (negative, zero, positive) from `[M][3E]` stacked
/// embeddings of three consecutive frames.
pub fn reward_prediction_forward<T: Real>(params: &Params<T>, emb3: &[T], m: usize) -> Vec<T> {
    let e = params.config.embedding;
    linear_forward(emb3, params.get(Block::RewardW), params.get(Block::RewardB), m, 3 * e, 3)
}

pub fn reward_prediction_backward<T: Real>(
    params: &Params<T>,
    emb3: &[T],
    m: usize,
    d_scores: &[T],
    grads: &mut Params<T>,
) -> Vec<T> {
    let e = params.config.embedding;
    let (dw, db) = wb_mut(grads, Block::RewardW);
    linear_backward(d_scores, emb3, params.get(Block::RewardW), m, 3 * e, 3, dw, db, true)
        .expect("input gradient requested")
}

/// Embedding of one observation/target pair.
pub fn encode<T: Real>(params: &Params<T>, rgb: &Arc<Image>, target: &Arc<Image>) -> Result<Vec<T>, NetError> {
    Ok(encode_forward(params, &[Frame { obs: rgb, target }])?.emb)
}

/// One recurrent step for a single agent.
pub fn core_step<T: Real>(
    params: &Params<T>,
    emb: &[T],
    prev_action: Option<usize>,
    prev_reward: f32,
    state: &AgentState<T>,
) -> (Vec<T>, AgentState<T>) {
    let cache = core_forward(
        params,
        &CoreInput {
            steps: 1,
            batch: 1,
            emb,
            prev_action: &[prev_action],
            prev_reward: &[prev_reward],
            reset: &[false],
            init: state,
        },
    );
    (cache.h, cache.final_state)
}

/// Action probabilities and state value for one feature vector.
pub fn policy_value<T: Real>(params: &Params<T>, features: &[T]) -> (Vec<T>, T) {
    let pv = policy_value_forward(params, features, 1);
    (pv.probs, pv.values[0])
}

/// `[A][q][q]` Q-map for one feature vector.
pub fn pixel_control_q<T: Real>(params: &Params<T>, features: &[T]) -> Vec<T> {
    pixel_control_forward(params, features, 1).q
}

/// `[C][R][R]` reconstruction for one feature vector.
pub fn reconstruct<T: Real>(params: &Params<T>, features: &[T], head: ReconHead) -> Vec<T> {
    reconstruct_forward(params, features, 1, &[head]).outputs.remove(0)
}

pub fn reward_prediction<T: Real>(params: &Params<T>, embeddings: [&[T]; 3]) -> [T; 3] {
    let x: Vec<T> = embeddings.concat();
    let s = reward_prediction_forward(params, &x, 1);
    [s[0], s[1], s[2]]
}
