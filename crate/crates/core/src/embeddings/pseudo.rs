use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::autodiff::Mat;

/// Neighbours on each side that influence a pseudo-contextual vector.
pub const PSEUDO_WINDOW: usize = 2;

/// Weight of the context component relative to the token component.
const CONTEXT_WEIGHT: f64 = 0.5;

fn gaussian(seed: u64, parts: &[&str], d: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Deterministic stand-in for a contextual embedder. Row `p` is a unit-norm
/// vector hashed from token `p` and its ±2 neighbours; a token-only
/// component keeps vectors of the same word correlated across contexts.
pub fn pseudo_contextual_embed<S: AsRef<str>>(tokens: &[S], d: usize, seed: u64) -> Mat {
    let mut out = Mat::zeros(tokens.len(), d);
    for p in 0..tokens.len() {
        let lo = p.saturating_sub(PSEUDO_WINDOW);
        let hi = (p + PSEUDO_WINDOW + 1).min(tokens.len());
        let mut ctx: Vec<&str> = vec!["<ctx>"];
        for (q, tok) in tokens.iter().enumerate().take(hi).skip(lo) {
            ctx.push(if q == p { "<self>" } else { tok.as_ref() });
        }
        // Positions before the start or past the end are marked explicitly.
        let pad = format!("{}|{}", p - lo, hi - p);
        ctx.push(&pad);
        ctx.push(tokens[p].as_ref());
        let word = gaussian(seed, &["<tok>", tokens[p].as_ref()], d);
        let context = gaussian(seed, &ctx, d);
        let row = out.row_mut(p);
        for k in 0..d {
            row[k] = word[k] + CONTEXT_WEIGHT * context[k];
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    out
}
