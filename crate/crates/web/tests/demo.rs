use std::time::Instant;

use cam_web::{duel_replay, rps_curve, weights};

#[test]
fn weights_match_the_solver() {
    let w = weights(&[0.2, 0.5, 0.9], 2.0).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(w[0] > w[1] && w[1] > w[2]);
    assert!(weights(&[1.2], 1.0).is_err());
    assert!(weights(&[0.5], f64::NAN).is_err());
}

#[test]
fn rps_curve_has_one_point_per_generation() {
    let t = Instant::now();
    let c = rps_curve(10, 0.1, 1).unwrap();
    eprintln!("rps_curve(10): {:?}", t.elapsed());
    assert_eq!(c.exploitability.len(), 10);
    for s in &c.strategy {
        assert_eq!(s.len(), 3);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert_eq!(rps_curve(10, 0.1, 1).unwrap().exploitability, c.exploitability);
}

#[test]
fn replay_is_a_complete_game() {
    let t = Instant::now();
    let r = duel_replay(2, 0, 1, 7).unwrap();
    eprintln!("duel_replay(2): {:?}", t.elapsed());
    assert!(r.frames.len() >= 2);
    assert!(r.frames.last().unwrap().actions.is_empty());
    assert!(r.frames[..r.frames.len() - 1].iter().all(|f| f.actions.len() == 2));
    assert!([0.0, 0.5, 1.0].contains(&r.score_i));
    assert!(duel_replay(0, 0, 4, 7).is_err());
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("\"frames\""));
}
