//! Shared test-support: seeded random jointly observable systems with
//! known per-channel unobservable subspaces.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use distobs::design::SystemModel;

pub struct RandomSystem {
    pub model: SystemModel,
    /// Expected observable dimension per channel.
    pub expected_ni: Vec<usize>,
}

/// Build a random jointly observable system with structured channels:
/// the dynamics decompose into real and oscillator blocks with distinct
/// spectra, and each channel senses a known subset of blocks. The
/// unobservable subspace of channel i is then exactly the span of its
/// unseen blocks.
pub fn random_jointly_observable(rng: &mut ChaCha8Rng, n_max: usize, m_max: usize) -> RandomSystem {
    assert!(n_max >= 2);
    let n = rng.gen_range(2..=n_max);
    let m = rng.gen_range(2..=m_max.max(2));

    // partition n into blocks of size 1 or 2
    let mut sizes = Vec::new();
    let mut left = n;
    while left > 0 {
        let s = if left == 1 { 1 } else { rng.gen_range(1..=2) };
        sizes.push(s);
        left -= s;
    }
    let blocks = sizes.len();

    // block-diagonal dynamics with well-separated spectra
    let mut d = DMatrix::<f64>::zeros(n, n);
    let mut offset = 0;
    let mut offsets = Vec::with_capacity(blocks);
    for (j, &s) in sizes.iter().enumerate() {
        offsets.push(offset);
        if s == 1 {
            d[(offset, offset)] = -0.6 + 0.25 * j as f64 + rng.gen_range(0.0..0.08);
        } else {
            let a = -0.5 + 0.22 * j as f64 + rng.gen_range(0.0..0.06);
            let b = 0.35 + 0.3 * j as f64 + rng.gen_range(0.0..0.08);
            d[(offset, offset)] = a;
            d[(offset, offset + 1)] = -b;
            d[(offset + 1, offset)] = b;
            d[(offset + 1, offset + 1)] = a;
        }
        offset += s;
    }

    // random orthogonal change of basis
    let gaussian = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let v = gaussian.qr().q();

    // each channel senses a nonempty subset of blocks; every block is
    // assigned to at least one channel
    let mut seen: Vec<Vec<usize>> = vec![Vec::new(); m];
    for block in 0..blocks {
        let owner = rng.gen_range(0..m);
        seen[owner].push(block);
    }
    for set in seen.iter_mut() {
        if set.is_empty() {
            set.push(rng.gen_range(0..blocks));
        }
        for block in 0..blocks {
            if !set.contains(&block) && rng.gen_bool(0.3) {
                set.push(block);
            }
        }
        set.sort_unstable();
        set.dedup();
    }

    let a = &v * d * v.transpose();
    let mut channels = Vec::with_capacity(m);
    let mut expected_ni = Vec::with_capacity(m);
    for set in &seen {
        let mut row = DMatrix::<f64>::zeros(1, n);
        let mut dim = 0;
        for &block in set {
            for k in 0..sizes[block] {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                row[(0, offsets[block] + k)] = sign * rng.gen_range(0.5..1.5);
            }
            dim += sizes[block];
        }
        channels.push(row * v.transpose());
        expected_ni.push(dim);
    }

    let model = SystemModel::new(a, channels).expect("construction is observable by design");
    RandomSystem { model, expected_ni }
}
