//! One LSTM layer over a fixed-length sequence, forward and BPTT.
//!
//! Gate pre-activations are stacked `[i, f, o, g]`, each `hidden` wide:
//!
//! ```text
//! z = W_x x_t + W_h h_(t-1) + b
//! i, f, o = logistic(z_i, z_f, z_o);  g = tanh(z_g)
//! c_t = f * c_(t-1) + i * g;          h_t = o * tanh(c_t)
//! ```

/// Offsets of one layer's blocks in the flat parameter vector.
/// `w_x` is `4h x input`, `w_h` is `4h x h`, both row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub input: usize,
    pub hidden: usize,
    pub w_x: usize,
    pub w_h: usize,
    pub b: usize,
}

impl LayerShape {
    pub fn new(input: usize, hidden: usize, offset: usize) -> Self {
        let w_x = offset;
        let w_h = w_x + 4 * hidden * input;
        let b = w_h + 4 * hidden * hidden;
        LayerShape {
            input,
            hidden,
            w_x,
            w_h,
            b,
        }
    }

    pub fn end(&self) -> usize {
        self.b + 4 * self.hidden
    }
}

pub(crate) struct SeqCache {
    /// Activated gates per step, `[i, f, o, g]`.
    gates: Vec<f64>,
    c: Vec<f64>,
    pub h: Vec<f64>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn forward(
    shape: &LayerShape,
    params: &[f64],
    inputs: &[f64],
    steps: usize,
) -> SeqCache {
    let (n_in, h) = (shape.input, shape.hidden);
    let w_x = &params[shape.w_x..shape.w_h];
    let w_h = &params[shape.w_h..shape.b];
    let bias = &params[shape.b..shape.end()];
    let mut gates = vec![0.0; steps * 4 * h];
    let mut c = vec![0.0; steps * h];
    let mut hs = vec![0.0; steps * h];
    let mut z = vec![0.0; 4 * h];
    for t in 0..steps {
        let x = &inputs[t * n_in..(t + 1) * n_in];
        z.copy_from_slice(bias);
        for (r, zr) in z.iter_mut().enumerate() {
            let row = &w_x[r * n_in..(r + 1) * n_in];
            *zr += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        if t > 0 {
            let h_prev = &hs[(t - 1) * h..t * h];
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &w_h[r * h..(r + 1) * h];
                *zr += row.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let g = &mut gates[t * 4 * h..(t + 1) * 4 * h];
        for k in 0..3 * h {
            g[k] = logistic(z[k]);
        }
        for k in 3 * h..4 * h {
            g[k] = z[k].tanh();
        }
        for k in 0..h {
            let c_prev = if t > 0 { c[(t - 1) * h + k] } else { 0.0 };
            let ct = g[h + k] * c_prev + g[k] * g[3 * h + k];
            c[t * h + k] = ct;
            hs[t * h + k] = g[2 * h + k] * ct.tanh();
        }
    }
    SeqCache { gates, c, h: hs }
}

/// Backpropagates `dh_out` (gradient w.r.t. every step's output) through
/// the layer, adding parameter gradients into `grad`. Returns the gradient
/// w.r.t. the inputs.
pub(crate) fn backward(
    shape: &LayerShape,
    params: &[f64],
    inputs: &[f64],
    cache: &SeqCache,
    dh_out: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let (n_in, h) = (shape.input, shape.hidden);
    let steps = dh_out.len() / h;
    let w_x = &params[shape.w_x..shape.w_h];
    let w_h = &params[shape.w_h..shape.b];
    let mut dx = vec![0.0; steps * n_in];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for t in (0..steps).rev() {
        let g = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        for k in 0..h {
            let (i, f, o, gg) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
            let ct = cache.c[t * h + k];
            let c_prev = if t > 0 { cache.c[(t - 1) * h + k] } else { 0.0 };
            let tc = ct.tanh();
            let dh = dh_out[t * h + k] + dh_next[k];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            dz[k] = dc * gg * i * (1.0 - i);
            dz[h + k] = dc * c_prev * f * (1.0 - f);
            dz[2 * h + k] = dh * tc * o * (1.0 - o);
            dz[3 * h + k] = dc * i * (1.0 - gg * gg);
            dc_next[k] = dc * f;
        }
        let x = &inputs[t * n_in..(t + 1) * n_in];
        let dxt = &mut dx[t * n_in..(t + 1) * n_in];
        dh_next.fill(0.0);
        for (r, &dzr) in dz.iter().enumerate() {
            grad[shape.b + r] += dzr;
            let gx = &mut grad[shape.w_x + r * n_in..shape.w_x + (r + 1) * n_in];
            let row = &w_x[r * n_in..(r + 1) * n_in];
            for (g, &xk) in gx.iter_mut().zip(x) {
                *g += dzr * xk;
            }
            for (d, &w) in dxt.iter_mut().zip(row) {
                *d += dzr * w;
            }
            if t > 0 {
                let h_prev = &cache.h[(t - 1) * h..t * h];
                let gh = &mut grad[shape.w_h + r * h..shape.w_h + (r + 1) * h];
                let row = &w_h[r * h..(r + 1) * h];
                for (g, &hk) in gh.iter_mut().zip(h_prev) {
                    *g += dzr * hk;
                }
                for (d, &w) in dh_next.iter_mut().zip(row) {
                    *d += dzr * w;
                }
            }
        }
    }
    dx
}
