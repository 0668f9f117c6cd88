//! Flooding min-sum belief propagation.
//!
//! LLRs follow the convention `L = ln P(b=1)/P(b=0)`, so a positive value
//! favours bit 1. Internally the check-node rule is written for that sign
//! convention: a check whose other inputs contain an odd number of "1"
//! votes pushes towards 1.

use serde::{Deserialize, Serialize};

use super::{LdpcError, ParityCheckMatrix};

/// Decoder knobs. `scale` multiplies every check-to-variable message; 1.0 is
/// plain min-sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinSumConfig {
    pub max_iter: usize,
    pub trace_iters: usize,
    pub scale: f64,
}

impl MinSumConfig {
    pub fn new(max_iter: usize, trace_iters: usize) -> Self {
        MinSumConfig {
            max_iter,
            trace_iters,
            scale: 1.0,
        }
    }
}

/// Result of one decode.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTrace {
    /// A-posteriori LLRs after iterations `0..=trace_iters`; entry 0 is the
    /// channel input.
    pub app_llrs: Vec<Vec<f64>>,
    /// A-posteriori LLRs at termination.
    pub final_llrs: Vec<f64>,
    /// Check-to-variable messages of the last iteration, in edge order
    /// (checks ascending, variables ascending within a check).
    pub messages: Vec<f64>,
    pub hard_decision: Vec<u8>,
    pub syndrome_ok: bool,
    pub iterations_used: usize,
}

fn hard_decision(llrs: &[f64], out: &mut [u8]) {
    // Ties resolve to 0 so the all-zero input decodes to the zero codeword.
    out.iter_mut()
        .zip(llrs)
        .for_each(|(b, &l)| *b = u8::from(l > 0.0));
}

/// Runs flooding min-sum on `h` with the given channel LLRs.
///
/// The syndrome is tested after every iteration `j >= trace_iters`
/// (iteration 0 being the channel hard decision), so the returned trace
/// always holds `trace_iters + 1` LLR vectors.
pub fn min_sum_decode(
    h: &ParityCheckMatrix,
    channel_llrs: &[f64],
    cfg: &MinSumConfig,
) -> Result<DecoderTrace, LdpcError> {
    let n = h.n_vars();
    if channel_llrs.len() != n {
        return Err(LdpcError::LengthMismatch {
            expected: n,
            got: channel_llrs.len(),
        });
    }
    if let Some(i) = channel_llrs.iter().position(|l| !l.is_finite()) {
        return Err(LdpcError::NonFiniteLlr(i));
    }
    if cfg.max_iter < cfg.trace_iters {
        return Err(LdpcError::IterationBudget {
            max_iter: cfg.max_iter,
            trace_iters: cfg.trace_iters,
        });
    }

    let rows = h.rows();
    let n_edges = h.n_edges();
    // Edge e belongs to check `edge_check[e]` and variable `edge_var[e]`.
    let mut edge_var = Vec::with_capacity(n_edges);
    let mut row_start = Vec::with_capacity(rows.len() + 1);
    for row in rows {
        row_start.push(edge_var.len());
        edge_var.extend_from_slice(row);
    }
    row_start.push(edge_var.len());

    let mut beta = vec![0.0f64; n_edges];
    let mut app = channel_llrs.to_vec();
    let mut bits = vec![0u8; n];
    let mut trace = Vec::with_capacity(cfg.trace_iters + 1);
    trace.push(app.clone());

    hard_decision(&app, &mut bits);
    let mut ok = h.is_codeword(&bits);
    let mut iter = 0;
    if !(ok && cfg.trace_iters == 0) {
        while iter < cfg.max_iter {
            iter += 1;
            // Check-node update from extrinsic variable messages app - beta.
            for c in 0..rows.len() {
                let (s, e) = (row_start[c], row_start[c + 1]);
                let mut min1 = f64::INFINITY;
                let mut min2 = f64::INFINITY;
                let mut min_idx = s;
                let mut ones_parity = false;
                for idx in s..e {
                    let alpha = app[edge_var[idx]] - beta[idx];
                    let mag = alpha.abs();
                    if alpha > 0.0 {
                        ones_parity = !ones_parity;
                    }
                    if mag < min1 {
                        min2 = min1;
                        min1 = mag;
                        min_idx = idx;
                    } else if mag < min2 {
                        min2 = mag;
                    }
                }
                for idx in s..e {
                    let alpha = app[edge_var[idx]] - beta[idx];
                    // Parity of "1" votes among the other edges.
                    let others_odd = ones_parity ^ (alpha > 0.0);
                    let mag = if idx == min_idx { min2 } else { min1 };
                    let sign = if others_odd { 1.0 } else { -1.0 };
                    beta[idx] = cfg.scale * sign * mag;
                }
            }
            // Variable-node totals.
            app.copy_from_slice(channel_llrs);
            for (idx, &k) in edge_var.iter().enumerate() {
                app[k] += beta[idx];
            }
            if iter <= cfg.trace_iters {
                trace.push(app.clone());
            }
            hard_decision(&app, &mut bits);
            ok = h.is_codeword(&bits);
            if ok && iter >= cfg.trace_iters {
                break;
            }
        }
    }

    Ok(DecoderTrace {
        app_llrs: trace,
        final_llrs: app,
        messages: beta,
        hard_decision: bits,
        syndrome_ok: ok,
        iterations_used: iter,
    })
}
