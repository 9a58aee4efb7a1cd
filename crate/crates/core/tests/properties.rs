use dtsbench::bench::format_float;
use dtsbench::policy::{phase1_candidates, sample_theta1, Policy, PolicyConfig, Variant};
use dtsbench::prefmat::{ArmPermutation, PreferenceMatrix};
use dtsbench::sim::{run_episode, DelaySpec, Environment, GridSpec};
use dtsbench::stats::{kl_bernoulli, pair_bounds, Alpha, WinCountMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Valid preference matrices on a 0.05 grid, so exact ties show up.
#[allow(clippy::needless_range_loop)]
fn matrix() -> impl Strategy<Value = PreferenceMatrix> {
    (2usize..8).prop_flat_map(|k| {
        prop::collection::vec(0u32..=20, k * (k - 1) / 2).prop_map(move |upper| {
            let mut rows = vec![vec![0.5; k]; k];
            let mut it = upper.into_iter();
            for i in 0..k {
                for j in i + 1..k {
                    let p = it.next().unwrap() as f64 / 20.0;
                    rows[i][j] = p;
                    rows[j][i] = 1.0 - p;
                }
            }
            PreferenceMatrix::new("prop", &rows).unwrap()
        })
    })
}

fn permutation(k: usize) -> impl Strategy<Value = ArmPermutation> {
    Just((0..k).collect::<Vec<usize>>())
        .prop_shuffle()
        .prop_map(|f| ArmPermutation::from_forward(f).unwrap())
}

fn matrix_and_perm() -> impl Strategy<Value = (PreferenceMatrix, ArmPermutation)> {
    matrix().prop_flat_map(|m| {
        let k = m.k();
        (Just(m), permutation(k))
    })
}

fn counts(k: usize) -> impl Strategy<Value = WinCountMatrix> {
    prop::collection::vec(0u64..200, k * k).prop_map(move |flat| {
        let rows: Vec<Vec<u64>> = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 0 } else { flat[i * k + j] }).collect())
            .collect();
        WinCountMatrix::from_rows(&rows).unwrap()
    })
}

fn alpha() -> impl Strategy<Value = Alpha> {
    (0.501f64..3.0).prop_map(|a| Alpha::new(a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn copeland_is_relabeling_equivariant((m, perm) in matrix_and_perm()) {
        let s = m.copeland();
        let q = m.permuted(&perm).copeland();
        for i in 0..m.k() {
            prop_assert_eq!(q.zeta[perm.forward(i)], s.zeta[i]);
        }
        prop_assert_eq!(q.zeta_star, s.zeta_star);
        let mut mapped: Vec<usize> = s.winners.iter().map(|&w| perm.forward(w)).collect();
        mapped.sort_unstable();
        prop_assert_eq!(q.winners, mapped);
    }

    #[test]
    fn regret_increment_is_bounded(m in matrix()) {
        let s = m.copeland();
        for a in 0..m.k() {
            for b in 0..m.k() {
                let r = s.regret_increment(a, b).unwrap();
                prop_assert!((0.0..=s.zeta_star).contains(&r));
                prop_assert_eq!(r, s.regret_increment(b, a).unwrap());
                prop_assert_eq!(r == 0.0, s.is_winner(a) && s.is_winner(b));
            }
        }
        prop_assert!(s.regret_increment(m.k(), 0).is_err());
    }

    #[test]
    fn kl_properties(p in 0.0f64..=1.0, q in 0.001f64..0.999) {
        let d = kl_bernoulli(p, q).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(kl_bernoulli(q, q).unwrap() < 1e-15);
        // Mirror symmetry: D(p || q) = D(1-p || 1-q).
        let mirrored = kl_bernoulli(1.0 - p, 1.0 - q).unwrap();
        prop_assert!((d - mirrored).abs() <= 1e-12 * d.max(1.0));
    }

    #[test]
    fn bounds_bracket_the_mean(w in 0u64..500, l in 0u64..500, a in alpha(), t in 2u64..1_000_000) {
        prop_assume!(w + l > 0);
        let ln_t = (t as f64).ln();
        let (u, lo) = pair_bounds(w, l, a, ln_t);
        let mean = w as f64 / (w + l) as f64;
        prop_assert!(lo <= mean && mean <= u);
        prop_assert!(((u - mean) - (mean - lo)).abs() < 1e-12);
        // Swapping the pair mirrors the interval around 1/2.
        let (u2, l2) = pair_bounds(l, w, a, ln_t);
        prop_assert!((u + l2 - 1.0).abs() < 1e-12);
        prop_assert!((lo + u2 - 1.0).abs() < 1e-12);
        // Wider with time, narrower with data.
        let (u_later, _) = pair_bounds(w, l, a, ((2 * t) as f64).ln());
        prop_assert!(u_later >= u);
        let (u_more, _) = pair_bounds(2 * w, 2 * l, a, ln_t);
        prop_assert!(u_more - mean <= u - mean + 1e-15);
    }

    #[test]
    fn theta_samples_are_antisymmetric(c in counts(5), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = sample_theta1(&mut rng, &c);
        for i in 0..5 {
            prop_assert_eq!(theta.get(i, i), 0.5);
            for j in 0..5 {
                let v = theta.get(i, j);
                prop_assert!((0.0..=1.0).contains(&v));
                if i != j {
                    prop_assert!((v + theta.get(j, i) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn candidate_set_is_relabeling_equivariant(c in counts(6), perm in permutation(6), a in alpha(), t in 2u64..100_000) {
        let rows: Vec<Vec<u64>> = (0..6)
            .map(|i| (0..6).map(|j| c.wins(perm.inverse(i), perm.inverse(j))).collect())
            .collect();
        let relabeled = WinCountMatrix::from_rows(&rows).unwrap();
        let (cands, zeta_hat) = phase1_candidates(&c, a, t);
        let (cands2, zeta_hat2) = phase1_candidates(&relabeled, a, t);
        let mut mapped: Vec<usize> = cands.iter().map(|&i| perm.forward(i)).collect();
        mapped.sort_unstable();
        prop_assert_eq!(cands2, mapped);
        for i in 0..6 {
            prop_assert_eq!(zeta_hat2[perm.forward(i)], zeta_hat[i]);
        }
    }

    #[test]
    fn traced_decisions_are_consistent(
        m in matrix(),
        v in prop::sample::select(vec![Variant::Dts, Variant::DtsPlus, Variant::PureDts]),
        seed in any::<u64>(),
    ) {
        let k = m.k();
        let cfg = PolicyConfig::new(v, 0.51).unwrap();
        let mut policy = Policy::new(k, cfg, seed);
        policy.set_trace(true);
        let mut env = Environment::new(m, seed ^ 1);
        for _ in 0..200 {
            let d = policy.select_pair();
            let tr = d.trace.as_deref().expect("tracing on");
            prop_assert!(tr.tie_set.contains(&d.first));
            prop_assert!(tr.tie_set.iter().all(|a| tr.candidates.contains(a)));
            prop_assert!(tr.eligible.contains(&d.second));
            prop_assert!(tr.eligible.contains(&d.first));
            prop_assert_eq!(tr.theta2[d.first], 0.5);
            if v == Variant::PureDts {
                prop_assert_eq!(tr.candidates.len(), k);
                prop_assert_eq!(tr.eligible.len(), k);
            }
            let winner = (!d.is_self_comparison()).then(|| env.compare(d.first, d.second).unwrap());
            policy.update(&d, winner).unwrap();
        }
        prop_assert_eq!(policy.slot(), 201);
    }

    #[test]
    fn episode_regret_accounting(
        m in matrix(),
        v in prop::sample::select(Variant::ALL.to_vec()),
        seed in any::<u64>(),
        horizon in 1u64..600,
        d in 1u64..40,
    ) {
        let k = m.k();
        let s = m.copeland();
        let mut env = Environment::new(m, seed);
        let mut policy = Policy::new(k, PolicyConfig::new(v, 0.51).unwrap(), seed.rotate_left(7));
        let log = run_episode(&mut env, &mut policy, horizon, DelaySpec::new(d).unwrap()).unwrap();
        prop_assert_eq!(log.len() as u64, horizon);
        let mut prev = 0.0;
        let mut zeta_sum = 0.0;
        for r in &log {
            prop_assert!(r.cum_regret >= prev);
            prev = r.cum_regret;
            zeta_sum += s.zeta[r.first] + s.zeta[r.second];
            prop_assert_eq!(r.outcome.is_none(), r.first == r.second);
            if let Some(w) = r.outcome {
                prop_assert!(w == r.first || w == r.second);
            }
        }
        let closed = s.zeta_star * horizon as f64 - 0.5 * zeta_sum;
        prop_assert!((prev - closed).abs() < 1e-9 * horizon as f64);
        // Only complete batches reach the policy.
        let committed = horizon / d * d;
        let real = log.iter().filter(|r| r.t <= committed && r.first != r.second).count() as u64;
        prop_assert_eq!(policy.counts().total(), real);
    }

    #[test]
    fn grid_slots_are_well_formed(horizon in 1u64..10_000_000, n in 1usize..80, lin in any::<bool>()) {
        let g = if lin { GridSpec::Linear { points: n } } else { GridSpec::Log { points: n } };
        let slots = g.slots(horizon);
        prop_assert_eq!(slots[0], 0);
        prop_assert_eq!(*slots.last().unwrap(), horizon);
        prop_assert!(slots.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn formatted_floats_keep_twelve_digits(x in -1e15f64..1e15) {
        let back: f64 = format_float(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-12 * x.abs());
    }
}
