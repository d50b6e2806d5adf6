use maptrack::geometry::{ioi, iou, BoundingBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fraction of `samples` uniform points of `a` that also fall in `b`,
/// and the same count for the union, over a common sampling window.
fn monte_carlo(a: &BoundingBox, b: &BoundingBox, rng: &mut ChaCha8Rng, samples: usize) -> (f64, f64) {
    let l = a.left().min(b.left());
    let t = a.top().min(b.top());
    let r = a.right().max(b.right());
    let btm = a.bottom().max(b.bottom());
    let inside = |bb: &BoundingBox, x: f64, y: f64| x >= bb.left() && x < bb.right() && y >= bb.top() && y < bb.bottom();
    let (mut in_a, mut inter, mut union) = (0usize, 0usize, 0usize);
    for _ in 0..samples {
        let x = rng.random_range(l..r);
        let y = rng.random_range(t..btm);
        let (ia, ib) = (inside(a, x, y), inside(b, x, y));
        in_a += ia as usize;
        inter += (ia && ib) as usize;
        union += (ia || ib) as usize;
    }
    (inter as f64 / union as f64, inter as f64 / in_a as f64)
}

#[test]
fn real_valued_boxes_match_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let draw = |rng: &mut ChaCha8Rng| {
            BoundingBox::new(
                rng.random_range(0.0..60.0),
                rng.random_range(0.0..60.0),
                rng.random_range(20.0..80.0),
                rng.random_range(20.0..80.0),
            )
            .unwrap()
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let (mc_iou, mc_ioi) = monte_carlo(&a, &b, &mut rng, 40_000);
        // Standard error of a proportion over 40k draws stays below 0.0025.
        assert!((iou(&a, &b) - mc_iou).abs() < 0.015, "{a} {b}");
        assert!((ioi(&a, &b) - mc_ioi).abs() < 0.015, "{a} {b}");
    }
}

#[test]
fn documented_examples() {
    let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
    let b = BoundingBox::new(5.0, 0.0, 10.0, 10.0).unwrap();
    assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(ioi(&a, &b), 0.5);
    let inner = BoundingBox::new(2.0, 2.0, 4.0, 4.0).unwrap();
    assert_eq!(ioi(&inner, &a), 1.0);
    assert_eq!(ioi(&a, &inner), 0.16);
    let far = BoundingBox::new(100.0, 100.0, 10.0, 10.0).unwrap();
    assert_eq!(iou(&a, &far), 0.0);
    assert!(BoundingBox::new(0.0, 0.0, 0.0, 5.0).is_err());
    assert!(BoundingBox::new(f64::NAN, 0.0, 1.0, 5.0).is_err());
}
