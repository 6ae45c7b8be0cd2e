use meandim::distribution::{CoordinateDistribution, FiniteSupport, Histogram, HistogramMode};
use meandim::model::{hybrid, replacement_step, InputModel, Point};
use meandim::rng::{RandomStream, RngPlan, Role};
use meandim::sum::RunningMoments;
use proptest::prelude::*;

#[test]
fn bernoulli_coordinates_are_fair_bits() {
    let model = InputModel::bernoulli(3).unwrap();
    let mut s = RandomStream::new(1, 2);
    let mut sums = [0.0; 3];
    for _ in 0..100_000 {
        let p = model.sample_point(&mut s);
        for (j, v) in p.values().iter().enumerate() {
            assert!(*v == 0.0 || *v == 1.0);
            sums[j] += v;
        }
    }
    for s in sums {
        assert!((s / 1e5 - 0.5).abs() < 0.01);
    }
}

#[test]
fn point_mass_is_constant() {
    let model = InputModel::new(vec![CoordinateDistribution::FiniteSupport(
        FiniteSupport::new(vec![7.0], vec![1.0]).unwrap(),
    )])
    .unwrap();
    let mut s = RandomStream::new(3, 3);
    for _ in 0..1000 {
        assert_eq!(model.sample_point(&mut s), Point(vec![7.0]));
    }
}

#[test]
fn gaussian_moments() {
    let model = InputModel::gaussian(2).unwrap();
    let mut s = RandomStream::new(11, 0);
    let mut m = [RunningMoments::new(), RunningMoments::new()];
    for _ in 0..1_000_000 {
        let p = model.sample_point(&mut s);
        m[0].push(p.0[0]);
        m[1].push(p.0[1]);
    }
    for c in &m {
        assert!(c.mean().abs() < 0.005, "mean {}", c.mean());
        assert!((c.variance() - 1.0).abs() < 0.01, "variance {}", c.variance());
    }
}

#[test]
fn histogram_bin_frequencies() {
    let probs = vec![0.1, 0.0, 0.25, 0.05, 0.6];
    let h = Histogram::new(vec![0.0, 0.1, 0.3, 0.35, 0.9, 1.0], probs.clone()).unwrap();
    let edges = h.edges().to_vec();
    let dist = CoordinateDistribution::Histogram(h);
    let mut s = RandomStream::new(5, 9);
    let n = 1_000_000;
    let mut counts = [0u64; 5];
    for _ in 0..n {
        let v = dist.sample(&mut s);
        let b = edges.partition_point(|&e| e <= v) - 1;
        counts[b] += 1;
    }
    for (c, p) in counts.iter().zip(&probs) {
        let freq = *c as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        if *p == 0.0 {
            assert_eq!(*c, 0);
        } else {
            assert!((freq - p).abs() < 4.0 * se, "freq {freq} vs {p}");
        }
    }
}

#[test]
fn histogram_level_mode_draws_levels_exactly() {
    let h = Histogram::unit_bins(vec![0.5, 0.0, 0.5]).unwrap();
    let d = CoordinateDistribution::Histogram(h).with_histogram_mode(HistogramMode::Levels);
    let mut s = RandomStream::new(0, 0);
    for _ in 0..1000 {
        let v = d.sample(&mut s);
        assert!(v == 0.0 || v == 1.0);
    }
}

#[test]
fn streams_reproduce_across_runs() {
    let plan = RngPlan::new(77).with_replicate(3);
    let model = InputModel::uniform(4).unwrap();
    let draw = || {
        let mut s = plan.stream(Role::Baseline, 12);
        (0..50).map(|_| model.sample_point(&mut s)).collect::<Vec<_>>()
    };
    assert_eq!(draw(), draw());
    let mut other = plan.stream(Role::Baseline, 13);
    assert_ne!(draw()[0], model.sample_point(&mut other));
}

#[test]
fn independent_streams_are_uncorrelated() {
    let n = 200_000;
    let mut a = RandomStream::new(1, 100);
    let mut b = RandomStream::new(1, 101);
    let mut sxy = 0.0;
    for _ in 0..n {
        sxy += (a.uniform() - 0.5) * (b.uniform() - 0.5);
    }
    // var of the product term is (1/12)^2
    let corr_se = (1.0 / 144.0 / n as f64).sqrt();
    assert!((sxy / n as f64).abs() < 4.0 * corr_se);
}

#[test]
fn hybrid_examples() {
    let p = |v: &[f64]| Point(v.to_vec());
    assert_eq!(hybrid(&p(&[1., 2., 3.]), &p(&[9., 9., 9.]), 1).unwrap(), p(&[1., 9., 3.]));
    assert_eq!(hybrid(&p(&[4., 5.]), &p(&[4., 5.]), 0).unwrap(), p(&[4., 5.]));
    assert_eq!(
        hybrid(&p(&[0.; 4]), &p(&[1.; 4]), 3).unwrap(),
        p(&[0., 0., 0., 1.])
    );
    assert!(hybrid(&p(&[0.; 2]), &p(&[1.; 2]), 2).is_err());
    assert!(hybrid(&p(&[0.; 2]), &p(&[1.; 3]), 0).is_err());
}

#[test]
fn winding_points_decorrelate_after_a_sweep() {
    for d in 1..=10usize {
        for i in 0..=100i64 {
            for k in d as i64..=d as i64 + 3 {
                for j in 0..d {
                    let a = replacement_step(d, i, j);
                    for t in 0..d {
                        assert_ne!(a, replacement_step(d, i + k, t));
                    }
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn hybrid_changes_at_most_one_coordinate(
        x in prop::collection::vec(-1e6f64..1e6, 1..12),
        seed in any::<u64>(),
        j_raw in any::<usize>(),
    ) {
        let d = x.len();
        let j = j_raw % d;
        let mut s = RandomStream::new(seed, 0);
        let z = Point((0..d).map(|_| s.standard_normal()).collect());
        let x = Point(x);
        let y = hybrid(&x, &z, j).unwrap();
        for k in 0..d {
            if k == j {
                prop_assert_eq!(y.0[k], z.0[k]);
            } else {
                prop_assert_eq!(y.0[k], x.0[k]);
            }
        }
        prop_assert_eq!(hybrid(&y, &z, j).unwrap(), y);
    }

    #[test]
    fn replacement_step_is_most_recent(d in 1usize..12, i in -30i64..200, j_raw in any::<usize>()) {
        let j = j_raw % d;
        let r = replacement_step(d, i, j);
        prop_assert!(r <= i && r > i - d as i64);
        // step r updates variable j
        prop_assert_eq!((r - 1).rem_euclid(d as i64) as usize, j);
    }
}
