use cip_wasm::{loss_curve_json, sanitize_json, worst_pair_json};
use serde_json::Value;

#[test]
fn loss_curve_shape_and_dominance() {
    let out = loss_curve_json(10, 1.0, "every-other", 1.0, 1.0, 2.0, &[0.5, 1.0, 2.0], 0.1, 10.0, 12).unwrap();
    let v: Value = serde_json::from_str(&out).unwrap();
    let curves = v.as_array().unwrap();
    assert_eq!(curves.len(), 3);
    for c in curves {
        let pts = c["points"].as_array().unwrap();
        assert_eq!(pts.len(), 12);
        assert!((pts[0]["sigma_z2"].as_f64().unwrap() - 0.1).abs() < 1e-12);
        assert!((pts[11]["sigma_z2"].as_f64().unwrap() - 10.0).abs() < 1e-9);
        for p in pts {
            assert!(p["l_star"].as_f64().unwrap() >= p["l_star_gi"].as_f64().unwrap());
        }
    }
}

#[test]
fn loss_curve_rejects_bad_grid() {
    assert!(loss_curve_json(10, 1.0, "every-other", 1.0, 1.0, 2.0, &[1.0], 1.0, 0.5, 5).is_err());
    assert!(loss_curve_json(10, 1.0, "0,99", 1.0, 1.0, 2.0, &[1.0], 0.1, 1.0, 5).is_err());
}

#[test]
fn worst_pair_shift_matches_secret_entries() {
    let out = worst_pair_json(10, 1.0, "every-other", 1.0, 2.0, 1.0, 1.0, 2.0).unwrap();
    let v: Value = serde_json::from_str(&out).unwrap();
    let ds: Vec<f64> = v["delta_s"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let shift: Vec<f64> = v["shift"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(shift.len(), 10);
    for (k, i) in [0, 2, 4, 6, 8].into_iter().enumerate() {
        assert_eq!(shift[i], ds[k]);
    }
    let norm = ds.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm - 5f64.sqrt()).abs() < 1e-12);
    assert!(v["loss"].as_f64().unwrap() > v["loss_gi"].as_f64().unwrap());
}

#[test]
fn sanitize_deterministic() {
    let csv = "t,x\n0,1\n1,2\n2,3\n";
    let a = sanitize_json(csv, 1.0, 9).unwrap();
    assert_eq!(a, sanitize_json(csv, 1.0, 9).unwrap());
    assert_ne!(a, sanitize_json(csv, 1.0, 10).unwrap());
    assert!(sanitize_json("t,x\n1,0\n0,1\n", 1.0, 9).is_err());
    assert!(sanitize_json(csv, -1.0, 9).is_err());
}
