//! Single-layer scalar-input LSTM with a linear readout, trained by
//! backpropagation through time.
//!
//! The readout predicts the next value as a correction to the last value in
//! the window, in normalized units: `x̂ = x_H + scale · (w·h_H + b)`. With a
//! zero readout the model reproduces the last-observation forecast exactly.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};

const GATES: usize = 4;
// gate blocks inside the stacked 4h vectors
const IN: usize = 0;
const FORGET: usize = 1;
const OUT: usize = 2;
const CAND: usize = 3;

const DUMP_MAGIC: &str = "aegis-lstm v1";

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    hidden: usize,
    /// Input weights, `4h`.
    w_in: Vec<f64>,
    /// Recurrent weights, `4h × h` row-major.
    w_rec: Vec<f64>,
    bias: Vec<f64>,
    w_out: Vec<f64>,
    b_out: f64,
    pub norm_mean: f64,
    pub norm_scale: f64,
}

/// Recurrent state `(hidden, cell)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl CellState {
    pub fn zeros(h: usize) -> Self {
        Self {
            hidden: vec![0.0; h],
            cell: vec![0.0; h],
        }
    }
}

/// One training pair in raw (unnormalized) units.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: Vec<f64>,
    pub next: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOutcome {
    /// Loss after the update.
    pub loss: f64,
    pub grad_norm: f64,
    pub clipped: bool,
}

struct StepCache {
    x: f64,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    // activated gates, 4h
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize) -> Self {
        assert!(hidden > 0, "hidden size must be positive");
        Self {
            hidden,
            w_in: vec![0.0; GATES * hidden],
            w_rec: vec![0.0; GATES * hidden * hidden],
            bias: vec![0.0; GATES * hidden],
            w_out: vec![0.0; hidden],
            b_out: 0.0,
            norm_mean: 0.0,
            norm_scale: 1.0,
        }
    }

    /// Uniform `±1/sqrt(h)` gate weights, forget bias 1, zero readout.
    pub fn init<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden);
        let k = 1.0 / (hidden as f64).sqrt();
        for w in p.w_in.iter_mut().chain(p.w_rec.iter_mut()) {
            *w = rng.random_range(-k..k);
        }
        for j in 0..hidden {
            p.bias[FORGET * hidden + j] = 1.0;
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_params(&self) -> usize {
        self.w_in.len() + self.w_rec.len() + self.bias.len() + self.w_out.len() + 1
    }

    /// Trainable parameters flattened as `w_in, w_rec, bias, w_out, b_out`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.w_in);
        v.extend_from_slice(&self.w_rec);
        v.extend_from_slice(&self.bias);
        v.extend_from_slice(&self.w_out);
        v.push(self.b_out);
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.n_params(), "flat parameter length");
        let (a, rest) = v.split_at(self.w_in.len());
        let (b, rest) = rest.split_at(self.w_rec.len());
        let (c, rest) = rest.split_at(self.bias.len());
        let (d, e) = rest.split_at(self.w_out.len());
        self.w_in.copy_from_slice(a);
        self.w_rec.copy_from_slice(b);
        self.bias.copy_from_slice(c);
        self.w_out.copy_from_slice(d);
        self.b_out = e[0];
    }

    pub fn set_readout(&mut self, w_out: &[f64], b_out: f64) {
        self.w_out.copy_from_slice(w_out);
        self.b_out = b_out;
    }

    fn normalize(&self, v: f64) -> f64 {
        (v - self.norm_mean) / self.norm_scale
    }

    fn step_raw(&self, x: f64, state: &CellState) -> StepCache {
        let h = self.hidden;
        let mut gates = vec![0.0; GATES * h];
        for (r, g) in gates.iter_mut().enumerate() {
            let row = &self.w_rec[r * h..(r + 1) * h];
            let rec: f64 = row.iter().zip(&state.hidden).map(|(w, hp)| w * hp).sum();
            let z = self.w_in[r] * x + rec + self.bias[r];
            *g = if r / h == CAND { z.tanh() } else { sigmoid(z) };
        }
        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        for j in 0..h {
            let (i, f, g) = (gates[IN * h + j], gates[FORGET * h + j], gates[CAND * h + j]);
            c[j] = f * state.cell[j] + i * g;
            tanh_c[j] = c[j].tanh();
        }
        StepCache {
            x,
            h_prev: state.hidden.clone(),
            c_prev: state.cell.clone(),
            gates,
            c,
            tanh_c,
        }
    }

    /// Advances the cell by one (already normalized) input.
    pub fn cell_step(&self, x: f64, state: &CellState) -> Result<CellState> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        assert_eq!(state.hidden.len(), self.hidden, "state dimension");
        let h = self.hidden;
        let cache = self.step_raw(x, state);
        let hidden = (0..h).map(|j| cache.gates[OUT * h + j] * cache.tanh_c[j]).collect();
        Ok(CellState {
            hidden,
            cell: cache.c,
        })
    }

    fn unroll(&self, window: &[f64]) -> Result<(Vec<StepCache>, Vec<f64>)> {
        let h = self.hidden;
        let mut state = CellState::zeros(h);
        let mut caches = Vec::with_capacity(window.len());
        for &v in window {
            if !v.is_finite() {
                return Err(Error::NonFinite(v));
            }
            let cache = self.step_raw(self.normalize(v), &state);
            state = CellState {
                hidden: (0..h).map(|j| cache.gates[OUT * h + j] * cache.tanh_c[j]).collect(),
                cell: cache.c.clone(),
            };
            caches.push(cache);
        }
        Ok((caches, state.hidden))
    }

    fn readout(&self, hidden: &[f64]) -> f64 {
        self.w_out.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>() + self.b_out
    }

    /// Runs the window from a zero state and returns the de-normalized
    /// one-step forecast.
    pub fn forward_window(&self, window: &[f64]) -> Result<f64> {
        let last = *window.last().ok_or(Error::EmptyHistory)?;
        let (_, hidden) = self.unroll(window)?;
        Ok(last + self.norm_scale * self.readout(&hidden))
    }

    fn target(&self, s: &Sample) -> f64 {
        (s.next - s.window[s.window.len() - 1]) / self.norm_scale
    }

    /// Mean squared error in normalized units.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64> {
        let mut total = 0.0;
        for s in batch {
            let (_, hidden) = self.unroll(&s.window)?;
            let e = self.readout(&hidden) - self.target(s);
            total += e * e;
        }
        Ok(total / batch.len() as f64)
    }

    /// Loss and its gradient with respect to [`LstmParams::flat`].
    pub fn loss_and_gradient(&self, batch: &[Sample]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyHistory);
        }
        let h = self.hidden;
        let n = batch.len() as f64;
        let mut g_in = vec![0.0; GATES * h];
        let mut g_rec = vec![0.0; GATES * h * h];
        let mut g_bias = vec![0.0; GATES * h];
        let mut g_out = vec![0.0; h];
        let mut g_bout = 0.0;
        let mut loss = 0.0;

        for s in batch {
            let (caches, hidden) = self.unroll(&s.window)?;
            let err = self.readout(&hidden) - self.target(s);
            loss += err * err;
            let dy = 2.0 * err / n;
            g_bout += dy;
            for j in 0..h {
                g_out[j] += dy * hidden[j];
            }
            let mut dh: Vec<f64> = self.w_out.iter().map(|w| dy * w).collect();
            let mut dc = vec![0.0; h];
            let mut dz = vec![0.0; GATES * h];
            for cache in caches.iter().rev() {
                let gt = &cache.gates;
                for j in 0..h {
                    let (i, f, o, g) = (gt[IN * h + j], gt[FORGET * h + j], gt[OUT * h + j], gt[CAND * h + j]);
                    let tc = cache.tanh_c[j];
                    let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
                    dz[IN * h + j] = dct * g * i * (1.0 - i);
                    dz[FORGET * h + j] = dct * cache.c_prev[j] * f * (1.0 - f);
                    dz[OUT * h + j] = dh[j] * tc * o * (1.0 - o);
                    dz[CAND * h + j] = dct * i * (1.0 - g * g);
                    dc[j] = dct * f;
                }
                dh.iter_mut().for_each(|v| *v = 0.0);
                for r in 0..GATES * h {
                    let d = dz[r];
                    g_in[r] += d * cache.x;
                    g_bias[r] += d;
                    let row = &self.w_rec[r * h..(r + 1) * h];
                    let grow = &mut g_rec[r * h..(r + 1) * h];
                    for k in 0..h {
                        grow[k] += d * cache.h_prev[k];
                        dh[k] += d * row[k];
                    }
                }
            }
        }

        let mut grad = g_in;
        grad.extend(g_rec);
        grad.extend(g_bias);
        grad.extend(g_out);
        grad.push(g_bout);
        Ok((loss / n, grad))
    }

    /// One gradient-descent step with global-norm clipping.
    pub fn train_step(&mut self, batch: &[Sample], learning_rate: f64, clip_norm: f64) -> Result<TrainOutcome> {
        let (_, grad) = self.loss_and_gradient(batch)?;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite(grad_norm));
        }
        let clipped = grad_norm > clip_norm;
        let scale = if clipped { clip_norm / grad_norm } else { 1.0 };
        if learning_rate != 0.0 {
            let mut flat = self.flat();
            for (p, g) in flat.iter_mut().zip(&grad) {
                *p -= learning_rate * scale * g;
            }
            self.set_flat(&flat);
        }
        Ok(TrainOutcome {
            loss: self.loss(batch)?,
            grad_norm,
            clipped,
        })
    }

    /// Writes a versioned text dump. Floats use shortest round-trip notation.
    pub fn write_dump<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{DUMP_MAGIC}")?;
        writeln!(w, "hidden {}", self.hidden)?;
        writeln!(w, "norm {:?} {:?}", self.norm_mean, self.norm_scale)?;
        for (name, vals) in [
            ("w_in", &self.w_in),
            ("w_rec", &self.w_rec),
            ("bias", &self.bias),
            ("w_out", &self.w_out),
        ] {
            write!(w, "{name}")?;
            for v in vals.iter() {
                write!(w, " {v:?}")?;
            }
            writeln!(w)?;
        }
        writeln!(w, "b_out {:?}", self.b_out)?;
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut line = String::new();
        let mut next_line = |r: &mut R| -> Result<String> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Dump("unexpected end of dump".into()));
            }
            Ok(line.trim_end().to_string())
        };
        let magic = next_line(r)?;
        if magic != DUMP_MAGIC {
            return Err(Error::Dump(format!("bad header {magic:?}")));
        }
        let hidden: usize = parse_field(&next_line(r)?, "hidden", 1)?[0] as usize;
        if hidden == 0 {
            return Err(Error::Dump("hidden size must be positive".into()));
        }
        let mut p = Self::zeros(hidden);
        let norm = parse_field(&next_line(r)?, "norm", 2)?;
        p.norm_mean = norm[0];
        p.norm_scale = norm[1];
        p.w_in = parse_field(&next_line(r)?, "w_in", GATES * hidden)?;
        p.w_rec = parse_field(&next_line(r)?, "w_rec", GATES * hidden * hidden)?;
        p.bias = parse_field(&next_line(r)?, "bias", GATES * hidden)?;
        p.w_out = parse_field(&next_line(r)?, "w_out", hidden)?;
        p.b_out = parse_field(&next_line(r)?, "b_out", 1)?[0];
        if !(p.norm_scale > 0.0) {
            return Err(Error::Dump("normalization scale must be positive".into()));
        }
        Ok(p)
    }
}

fn parse_field(line: &str, name: &str, len: usize) -> Result<Vec<f64>> {
    let mut it = line.split_ascii_whitespace();
    if it.next() != Some(name) {
        return Err(Error::Dump(format!("expected field {name}, got {line:?}")));
    }
    let vals = it
        .map(|t| t.parse::<f64>().map_err(|e| Error::Dump(format!("{name}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != len {
        return Err(Error::Dump(format!("{name}: expected {len} values, got {}", vals.len())));
    }
    Ok(vals)
}
