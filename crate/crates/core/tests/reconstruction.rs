//! Reconstruction chain properties checked end to end from analytic
//! projections.

use std::f64::consts::PI;

use sinodn_core::harness::{make_image_reference, relative_max_error};
use sinodn_core::phantom::{apply_noise, forward_project, Disk, NoiseModel, Phantom, ScanGeometry};
use sinodn_core::reconstruct::{pixel_center, reconstruct, FilterKind, ReconConfig, ReconImage};

fn disk_at(x: f64, y: f64, r: f64) -> Phantom {
    Phantom::new(vec![Disk::new(x, y, r, 1.0)]).unwrap()
}

/// Intensity-weighted centre of the pixels above half the peak value.
fn centroid(img: &ReconImage) -> (f64, f64) {
    let n = img.size();
    let peak = img.data.iter().cloned().fold(f64::MIN, f64::max);
    let (mut sx, mut sy, mut w) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let v = img.data[[i, j]];
            if v > 0.5 * peak {
                sx += v * pixel_center(j, n);
                sy += v * pixel_center(i, n);
                w += v;
            }
        }
    }
    (sx / w, sy / w)
}

#[test]
fn off_centre_disk_lands_where_the_phantom_puts_it() {
    let g = ScanGeometry::covering(360, 128);
    let cfg = ReconConfig::default();
    let phantom = disk_at(0.3, 0.1, 0.15);
    for angle in [0.0, PI / 2.0, 2.0 * PI / 3.0] {
        let rotated = phantom.rotated(angle);
        let img = reconstruct(&forward_project(&rotated, &g).unwrap(), &cfg).unwrap();
        let (x, y) = centroid(&img);
        let d = rotated.disks[0];
        let err = ((x - d.center_x).powi(2) + (y - d.center_y).powi(2)).sqrt();
        assert!(err < img.pixel_spacing, "angle {angle}: centroid ({x:.3}, {y:.3}) vs ({:.3}, {:.3})", d.center_x, d.center_y);
    }
}

#[test]
fn constant_offset_is_annihilated() {
    let g = ScanGeometry::covering(256, 96);
    let cfg = ReconConfig::default();
    let sino = forward_project(&Phantom::ring_and_spokes(0), &g).unwrap();
    let shifted = sino.with_data(sino.data.mapv(|v| v + 0.7)).unwrap();
    let a = reconstruct(&sino, &cfg).unwrap();
    let b = reconstruct(&shifted, &cfg).unwrap();
    let err = relative_max_error(&b.data, &a.data);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn attenuation_scales_linearly() {
    let g = ScanGeometry::covering(256, 96);
    let cfg = ReconConfig::default();
    let phantom = Phantom::ring_and_spokes(3);
    let base = reconstruct(&forward_project(&phantom, &g).unwrap(), &cfg).unwrap();
    let scaled = reconstruct(&forward_project(&phantom.scaled(2.5), &g).unwrap(), &cfg).unwrap();
    let err = relative_max_error(&scaled.data, &base.data.mapv(|v| 2.5 * v));
    assert!(err < 1e-9, "{err}");
}

#[test]
fn both_filters_recover_the_disk_value() {
    let g = ScanGeometry::covering(1000, 144);
    let sino = forward_project(&disk_at(0.0, 0.0, 0.5), &g).unwrap();
    for filter in [FilterKind::RamLak, FilterKind::SheppLogan] {
        let img = reconstruct(&sino, &ReconConfig { filter, ..ReconConfig::default() }).unwrap();
        let px = img.pixel_spacing;
        let inside = img.select(|x, y| (x * x + y * y).sqrt() <= 0.5 - 3.0 * px);
        let mean = inside.iter().sum::<f64>() / inside.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "{filter:?}: {mean}");
    }
}

#[test]
fn mean_of_reconstructions_is_reconstruction_of_mean() {
    let g = ScanGeometry::covering(128, 64);
    let cfg = ReconConfig {
        image_size: 64,
        ..ReconConfig::default()
    };
    let clean = forward_project(&Phantom::ring_and_spokes(1), &g).unwrap();
    let noise = NoiseModel::new(1000.0, 4);
    let samples: Vec<_> = (0..6).map(|k| apply_noise(&clean, &noise.for_sample(0, k)).unwrap()).collect();
    let reference = make_image_reference(&samples, &cfg).unwrap();

    let mut mean = samples[0].data.clone();
    samples[1..].iter().for_each(|s| mean += &s.data);
    mean.mapv_inplace(|v| v / 6.0);
    let direct = reconstruct(&samples[0].with_data(mean).unwrap(), &cfg).unwrap();
    let err = relative_max_error(&reference.data, &direct.data);
    assert!(err < 1e-5, "{err}");
}
