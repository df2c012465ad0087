/// Sinusoidal timestep embedding: component pairs `(sin(t·f_i), cos(t·f_i))`
/// with frequencies `f_i = 10000^(−i/(dim/2 − 1))`, so `f_0 = 1`.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    assert!(dim >= 2 && dim.is_multiple_of(2), "embedding dim must be even and >= 2");
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = if half == 1 {
            1.0
        } else {
            10000f64.powf(-(i as f64) / (half - 1) as f64)
        };
        let arg = t as f64 * freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}
