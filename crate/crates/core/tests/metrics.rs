use mlsr_core::metrics::*;
use mlsr_core::rng_from_seed;
use mlsr_core::spectral::io::decode_pgm16;
use mlsr_core::spectral::*;
use rand::Rng;

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.gen()).collect()
}

#[test]
fn psnr_values() {
    let a = noise(256, 1);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
    assert!((psnr(&b, &a, 1.0).unwrap() - 20.0).abs() < 1e-9);
    assert!(psnr(&a, &a[..10], 1.0).is_err());

    let c = noise(256, 2);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let diff: Vec<f64> = a.iter().zip(&c).map(|(x, y)| x - y).collect();
    let sq: Vec<f64> = diff.iter().map(|d| d * d).collect();
    let oracle = 10.0 * (1.0 / mean(&sq)).log10();
    assert!((psnr(&a, &c, 1.0).unwrap() - oracle).abs() < 1e-9);

    let mut last = f64::INFINITY;
    for amp in [0.001, 0.01, 0.05, 0.1, 0.3] {
        let n: Vec<f64> = a.iter().zip(noise(256, 3)).map(|(v, e)| v + amp * (e - 0.5)).collect();
        let p = psnr(&n, &a, 1.0).unwrap();
        assert!(p < last);
        last = p;
    }
}

/// Per-window SSIM computed directly from the 2-d Gaussian window.
fn ssim_oracle(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = 11;
    let g1: Vec<f64> = (0..k).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let mut win = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            win[i * k + j] = g1[i] * g1[j];
        }
    }
    let total: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for y in 0..=h - k {
        for x in 0..=w - k {
            let at = |img: &[f64], i: usize, j: usize| img[(y + i) * w + x + j];
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    ma += win[i * k + j] * at(a, i, j);
                    mb += win[i * k + j] * at(b, i, j);
                }
            }
            let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let (da, db) = (at(a, i, j) - ma, at(b, i, j) - mb);
                    va += win[i * k + j] * da * da;
                    vb += win[i * k + j] * db * db;
                    cab += win[i * k + j] * da * db;
                }
            }
            acc += (2.0 * ma * mb + c1) * (2.0 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

#[test]
fn ssim_properties_and_reference() {
    let a = noise(20 * 24, 4);
    assert!((ssim(&a, &a, 20, 24).unwrap() - 1.0).abs() <= 1e-12);
    let inv: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
    let s = ssim(&inv, &a, 20, 24).unwrap();
    assert!(s < 1.0 && s.abs() <= 1.0);
    assert_eq!(s, ssim(&a, &inv, 20, 24).unwrap());
    assert!(ssim(&a[..100], &a[..100], 10, 10).is_err());

    let n = 16;
    let checker: Vec<f64> = (0..n * n).map(|i| ((i / n + i % n) % 2) as f64).collect();
    let blurred: Vec<f64> = (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as isize, (i % n) as isize);
            let mut s = 0.0;
            let mut c = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (yy, xx) = (y + dy, x + dx);
                    if (0..n as isize).contains(&yy) && (0..n as isize).contains(&xx) {
                        s += checker[yy as usize * n + xx as usize];
                        c += 1.0;
                    }
                }
            }
            s / c
        })
        .collect();
    let got = ssim(&checker, &blurred, n, n).unwrap();
    assert!((got - ssim_oracle(&checker, &blurred, n, n)).abs() < 1e-6);
    let b = noise(20 * 24, 5);
    assert!((ssim(&a, &b, 20, 24).unwrap() - ssim_oracle(&a, &b, 20, 24)).abs() < 1e-6);
}

fn two_band_cube(values: &[f32; 2]) -> HsiCube {
    let bands = wavelength_grid(2, 450.0, 650.0).unwrap();
    let data = (0..16 * 16).flat_map(|_| *values).collect();
    HsiCube::new(16, 16, bands, data).unwrap()
}

#[test]
fn cube_report_closed_forms() {
    let t = two_band_cube(&[0.5, 0.5]);
    let same = cube_metrics(&t, &t).unwrap();
    assert!(same.per_band_psnr_db.iter().all(|v| v.is_infinite()));
    assert!(same.per_band_ssim.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    assert_eq!((same.flatness_std_db, same.n_inf_psnr), (0.0, 2));

    let p = two_band_cube(&[0.6, 0.51]);
    let r = cube_metrics(&p, &t).unwrap();
    let exact = |x: f32| 20.0 * (1.0 / (x as f64 - 0.5)).log10();
    let (p0, p1) = (exact(0.6), exact(0.51));
    assert!((r.per_band_psnr_db[0] - p0).abs() < 1e-9 && (p0 - 20.0).abs() < 1e-5);
    assert!((r.per_band_psnr_db[1] - p1).abs() < 1e-9 && (p1 - 40.0).abs() < 1e-4);
    assert!((r.mean_psnr_db - (p0 + p1) / 2.0).abs() < 1e-12);
    // Sample standard deviation of two values is |a - b| / sqrt(2).
    assert!((r.flatness_std_db - (p1 - p0) / 2f64.sqrt()).abs() < 1e-9);
    assert!((r.flatness_std_db - 10.0 * 2f64.sqrt()).abs() < 1e-4);

    let single = t.select_bands(&[1]).unwrap();
    let noisy = p.select_bands(&[1]).unwrap();
    let r1 = cube_metrics(&noisy, &single).unwrap();
    assert_eq!(r1.per_band_psnr_db.len(), 1);
    assert_eq!(r1.mean_psnr_db, r1.per_band_psnr_db[0]);
    assert!(cube_metrics(&single, &t).is_err());
}

#[test]
fn error_maps_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = noise(12, 6);
    let path = dir.path().join("zero.pgm");
    error_map(&a, &a, 4, 3, ERROR_MAP_SCALE, &path).unwrap();
    let (w, h, px) = decode_pgm16(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!((w, h), (4, 3));
    assert!(px.iter().all(|&v| v == 0));

    let b: Vec<f64> = a.iter().map(|v| v + 0.25).collect();
    let path = dir.path().join("white.pgm");
    let sidecar = error_map(&b, &a, 4, 3, 4.0, &path).unwrap();
    assert!(std::fs::read_to_string(sidecar).unwrap().contains("scale=4"));
    let (_, _, px) = decode_pgm16(&std::fs::read(&path).unwrap()).unwrap();
    assert!(px.iter().all(|&v| v == 65535));

    let c: Vec<f64> = a.iter().map(|v| v + 0.01).collect();
    error_map(&c, &a, 4, 3, 4.0, &path).unwrap();
    let (_, _, px) = decode_pgm16(&std::fs::read(&path).unwrap()).unwrap();
    for (q, (x, y)) in px.iter().zip(c.iter().zip(&a)) {
        assert_eq!(*q, (((x - y).abs() * 4.0).min(1.0) * 65535.0).round() as u16);
    }

    let r = MetricReport::from_per_band(vec![30.0, f64::INFINITY], vec![0.9, 1.0]);
    let csv = band_metrics_csv(&r, &[400.0, 410.0], &[0, 1]).unwrap();
    assert_eq!(csv, "band_index,wavelength_nm,psnr_db,ssim\n0,400,30,0.9\n1,410,inf,1\n");
}
