#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use renovor_core::gmm::{fit_gmm, gmm_neg_log_likelihood};
use renovor_core::maxflow::{max_flow_min_cut, FlowNetwork};
use renovor_core::phantom::{rasterize_capsules, Segment};
use renovor_core::spd::{SpdField, SpdTensor};
use renovor_core::tensorcut::*;
use renovor_core::vesselness::{multiscale_vesselness, VesselnessParams};
use renovor_core::{Connectivity, LabelVolume, ScalarVolume, VolumeGeometry};

fn random_field(rng: &mut ChaCha8Rng, g: VolumeGeometry) -> SpdField {
    let ts = (0..g.len()).map(|_| SpdTensor::new(dense_to_sym(&random_spd(rng, 0.2, 5.0))).unwrap()).collect();
    SpdField::new(g, ts).unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> (ScalarVolume, SpdField, SeedLabels) {
    let g = VolumeGeometry::with_dims(dims).unwrap();
    let vol = ScalarVolume::from_fn(g, |c| if c[0] < dims[0] / 2 { 0.0 } else { 100.0 } + rng.random_range(-40.0f32..40.0));
    let field = random_field(rng, g);
    let n = g.len();
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for i in 1..n - 1 {
        match rng.random_range(0..10) {
            0 => fg.push(i),
            1 => bg.push(i),
            _ => {}
        }
    }
    fg.push(n - 1);
    bg.push(0);
    (vol, field, SeedLabels::new(fg, bg).unwrap())
}

fn params(omega: f64) -> MrfEnergyParams {
    MrfEnergyParams { omega, ..MrfEnergyParams::default() }
}

#[test]
fn solution_is_exact_minimum_on_tiny_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let (vol, field, seeds) = random_instance(&mut rng, [3, 2, 2]);
        let model = build_energy(&vol, &field, &seeds, &params(0.7)).unwrap();
        let (labels, cut) = model.solve().unwrap();
        let e = model.energy(&labels);
        let n = labels.len();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            let l: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            best = best.min(model.energy(&l));
        }
        assert!((e - best).abs() <= 1e-9 * (1.0 + best), "{e} vs {best}");
        assert!(cut.flow.is_finite());
    }
}

#[test]
fn solution_beats_random_labelings() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..3 {
        let (vol, field, seeds) = random_instance(&mut rng, [6, 6, 6]);
        let model = build_energy(&vol, &field, &seeds, &params(0.5)).unwrap();
        let (labels, _) = model.solve().unwrap();
        let e = model.energy(&labels);
        assert!(e.is_finite());
        let constrained = |mut l: Vec<bool>| {
            for (i, h) in model.hard.iter().enumerate() {
                match h {
                    Hard::Foreground => l[i] = true,
                    Hard::Background => l[i] = false,
                    Hard::Free => {}
                }
            }
            l
        };
        let n = labels.len();
        assert!(e <= model.energy(&constrained(vec![true; n])) + 1e-9);
        assert!(e <= model.energy(&constrained(vec![false; n])) + 1e-9);
        for _ in 0..1000 {
            let l = constrained((0..n).map(|_| rng.random_bool(0.5)).collect());
            assert!(e <= model.energy(&l) + 1e-9);
        }
        for i in 0..n {
            if model.hard[i] == Hard::Free {
                let mut l = labels.clone();
                l[i] = !l[i];
                assert!(e <= model.energy(&l) + 1e-9 * e.abs());
            }
        }
    }
}

/// Intensity-only graph cut assembled from scratch.
fn intensity_only_cut(vol: &ScalarVolume, seeds: &SeedLabels, p: &MrfEnergyParams) -> Vec<bool> {
    let g = *vol.geometry();
    let d = vol.data();
    let k = |s: &[usize]| {
        let mut v: Vec<f64> = s.iter().map(|&i| f64::from(d[i])).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        p.gmm_components.min(v.len())
    };
    let fs: Vec<f64> = seeds.foreground().iter().map(|&i| f64::from(d[i])).collect();
    let bs: Vec<f64> = seeds.background().iter().map(|&i| f64::from(d[i])).collect();
    let fm = fit_gmm(&fs, k(seeds.foreground()), &p.em).unwrap().model;
    let bm = fit_gmm(&bs, k(seeds.background()), &p.em).unwrap().model;
    let n = g.len();
    let mut diffs = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..n {
        let c = g.coords(i);
        for (a, o) in [[1i64, 0, 0], [0, 1, 0], [0, 0, 1]].into_iter().enumerate() {
            if c[a] + 1 < g.dims()[a] {
                let j = g.offset(c, o).unwrap();
                diffs.push((f64::from(d[i]) - f64::from(d[j])).abs());
                pairs.push((i, j, g.spacing()[a]));
            }
        }
    }
    let sigma = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let mut net = FlowNetwork::new(n + 2, n, n + 1).unwrap();
    let mut hard = vec![0u8; n];
    for &i in seeds.foreground() {
        hard[i] = 1;
    }
    for &i in seeds.background() {
        hard[i] = 2;
    }
    for i in 0..n {
        let x = f64::from(d[i]);
        let (src, snk) = match hard[i] {
            1 => (1e12, 0.0),
            2 => (0.0, 1e12),
            _ => (gmm_neg_log_likelihood(&bm, x), gmm_neg_log_likelihood(&fm, x)),
        };
        net.add_arc(n, i, src).unwrap();
        net.add_arc(i, n + 1, snk).unwrap();
    }
    for (&(i, j, dist), &di) in pairs.iter().zip(&diffs) {
        let w = p.lambda_i * (-di * di / (2.0 * sigma * sigma)).exp() / dist;
        net.add_arc(i, j, w).unwrap();
        net.add_arc(j, i, w).unwrap();
    }
    max_flow_min_cut(&net).source_side[..n].to_vec()
}

#[test]
fn omega_zero_is_intensity_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..5 {
        let (vol, field, seeds) = random_instance(&mut rng, [7, 6, 5]);
        let p = params(0.0);
        let a = tensor_cut_segment(&vol, &field, &seeds, &p).unwrap();
        let other = random_field(&mut rng, *vol.geometry());
        let b = tensor_cut_segment(&vol, &other, &seeds, &p).unwrap();
        assert_eq!(a, b);
        let want = intensity_only_cut(&vol, &seeds, &p);
        let m1 = build_energy(&vol, &field, &seeds, &p).unwrap();
        let got: Vec<bool> = a.data().iter().map(|&v| v != 0).collect();
        // equal labelings, or distinct labelings of equal energy
        if got != want {
            assert!((m1.energy(&got) - m1.energy(&want)).abs() <= 1e-9 * m1.energy(&got));
        }
    }
}

#[test]
fn pairwise_weights_match_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let g = VolumeGeometry::new([4, 3, 3], [1.0, 0.7, 1.6], [0.0; 3]).unwrap();
    let vol = ScalarVolume::from_fn(g, |_| rng.random_range(0.0f32..100.0));
    let field = random_field(&mut rng, g);
    for conn in [Connectivity::Six, Connectivity::TwentySix] {
        let p = MrfEnergyParams { lambda_i: 0.8, lambda_t: 1.3, omega: 0.6, connectivity: conn, ..Default::default() };
        let w = pairwise_weights(&vol, &field, &p).unwrap();
        let dense = |i: usize| sym_to_dense(field.get(i).matrix());
        let (mut si, mut st, mut cnt) = (0.0, 0.0, 0.0);
        for l in &w.links {
            si += (f64::from(vol.data()[l.a]) - f64::from(vol.data()[l.b])).abs();
            st += geodesic_oracle(&dense(l.a), &dense(l.b));
            cnt += 1.0;
        }
        let (si, st) = (si / cnt, st / cnt);
        assert!((w.sigma_i - si).abs() <= 1e-9 * si);
        assert!((w.sigma_t - st).abs() <= 1e-6 * st);
        let expected_links = if conn == Connectivity::Six { 3 * 3 * 3 + 4 * 2 * 3 + 4 * 3 * 2 } else { 0 };
        if expected_links > 0 {
            assert_eq!(w.links.len(), expected_links);
        }
        for l in &w.links {
            let (ca, cb) = (g.coords(l.a), g.coords(l.b));
            let dist = world_d2(&g, ca, cb).sqrt();
            let di = (f64::from(vol.data()[l.a]) - f64::from(vol.data()[l.b])).abs();
            let dt = geodesic_oracle(&dense(l.a), &dense(l.b));
            let want = (0.8 * (-di * di / (2.0 * si * si)).exp() + 0.6 * 1.3 * (-dt * dt / (2.0 * st * st)).exp()) / dist;
            assert!((l.weight - want).abs() <= 1e-6 * want, "{} vs {want}", l.weight);
        }
    }
}

#[test]
fn unary_only_is_nearest_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let g = VolumeGeometry::with_dims([6, 5, 4]).unwrap();
    let vol = ScalarVolume::filled(g, 50.0);
    let field = random_field(&mut rng, g);
    let seeds = SeedLabels::new((0..10).collect(), (100..110).collect()).unwrap();
    let p = MrfEnergyParams { lambda_i: 0.0, lambda_t: 0.0, omega: 1.0, ..Default::default() };
    let model = build_energy(&vol, &field, &seeds, &p).unwrap();
    let (labels, _) = model.solve().unwrap();
    let fm = sym_to_dense(model.foreground_mean.matrix());
    let bm = sym_to_dense(model.background_mean.matrix());
    for i in 10..100 {
        let t = sym_to_dense(field.get(i).matrix());
        let (df, db) = (geodesic_oracle(&fm, &t), geodesic_oracle(&bm, &t));
        if (df - db).abs() > 1e-6 {
            assert_eq!(labels[i], df < db, "voxel {i}: {df} vs {db}");
        }
    }
}

#[test]
fn tube_segmentation_intensity_only() {
    let g = VolumeGeometry::with_dims([28, 28, 28]).unwrap();
    let seg = Segment { start_mm: [14.0, 14.0, -5.0], end_mm: [14.0, 14.0, 33.0], radius_mm: 2.5, generation: 0, parent: None };
    let truth = rasterize_capsules(&g, &[seg]);
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let noise = Normal::new(0.0, 10.0).unwrap();
    let vol = ScalarVolume::new(
        g,
        truth.data().iter().map(|&t| (if t != 0 { 200.0 } else { 40.0 } + noise.sample(&mut rng)) as f32).collect(),
    )
    .unwrap();
    let mv = multiscale_vesselness(&vol, &VesselnessParams::default()).unwrap();
    let field = SpdField::from_hessians(&mv.hessian);
    let seeds = auto_seeds(&vol, &mv.vesselness, &SeedParams::default()).unwrap();
    let out = tensor_cut_segment(&vol, &field, &seeds, &params(0.0)).unwrap();
    let inter = out.data().iter().zip(truth.data()).filter(|(&a, &b)| a != 0 && b != 0).count();
    let dsc = 2.0 * inter as f64 / (out.count_nonzero() + truth.count_nonzero()) as f64;
    assert!(dsc >= 0.95, "dice {dsc}");
    let again = tensor_cut_segment(&vol, &field, &seeds, &params(0.0)).unwrap();
    assert_eq!(out, again);
}

#[test]
fn fully_seeded_volume_returns_seeds() {
    let g = VolumeGeometry::with_dims([3, 1, 1]).unwrap();
    let vol = ScalarVolume::filled(g, 1.0);
    let field = SpdField::uniform(g, SpdTensor::IDENTITY);
    let seeds = SeedLabels::new(vec![0, 1, 2], vec![]).unwrap();
    let out = tensor_cut_segment(&vol, &field, &seeds, &params(0.5)).unwrap();
    assert_eq!(out, LabelVolume::filled(g, 1));
    assert!(tensor_cut_segment(&vol, &field, &SeedLabels::default(), &params(0.5)).is_err());
}
