use std::collections::{BTreeSet, HashSet};

use aemr::bitgroup::{group_by, prune};
use aemr::covset::{indicator_of, set_weight, CovariateSet, WeightVector};
use aemr::data::{CovariateSpec, Dataset};
use aemr::engine::{check_downward_closure, check_nonincreasing_weight, run, EngineConfig, StopRules};
use aemr::estimate::group_cate;
use aemr::holdout::{balancing_factor, prediction_error};
use aemr::lattice::{brute_eligible, generate_new_active_sets, LatticeState};
use aemr::oracle::{brute_enumerate, brute_pairwise};
use aemr::state::{GroupId, MatchedGroup};
use aemr::synthgen::{gen_outcome, gen_scenario, DgpSpec, Scenario};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn subset(p: usize) -> impl Strategy<Value = CovariateSet> {
    prop::collection::vec(any::<bool>(), p).prop_map(|bits| {
        bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    })
}

fn weights(p: usize) -> impl Strategy<Value = WeightVector> {
    prop::collection::vec(0u8..10, p).prop_map(|w| WeightVector::new(w.into_iter().map(f64::from).collect()).unwrap())
}

/// Small dataset with at least one treated and one control unit.
fn dataset(max_n: usize, max_p: usize) -> impl Strategy<Value = Dataset> {
    (4..=max_n, 1..=max_p)
        .prop_flat_map(|(n, p)| (Just(n), prop::collection::vec(2u32..=4, p)))
        .prop_flat_map(|(n, arities)| {
            let cells: Vec<_> = (0..n).flat_map(|_| arities.iter().map(|&a| 0..a).collect::<Vec<_>>()).collect();
            (
                Just(arities),
                cells,
                prop::collection::vec(0u8..=1, n),
                prop::collection::vec(-5i32..=5, n),
            )
        })
        .prop_map(|(arities, codes, mut t, y)| {
            t[0] = 1;
            t[1] = 0;
            let specs = arities.iter().enumerate().map(|(j, &a)| CovariateSpec::new(format!("x{j}"), a)).collect();
            Dataset::new(specs, codes, t, y.into_iter().map(f64::from).collect(), None).unwrap()
        })
}

fn permute(d: &Dataset, perm: &[usize]) -> Dataset {
    d.select_rows(perm)
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

fn fixed(w: WeightVector) -> EngineConfig {
    EngineConfig::fixed(w).with_stop(StopRules::exhaustive())
}

proptest! {
    #[test]
    fn indicator_counts_and_injectivity(p in 1usize..40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: CovariateSet = (0..p).filter(|_| rand::Rng::random_bool(&mut rng, 0.5)).collect();
        let b: CovariateSet = (0..p).filter(|_| rand::Rng::random_bool(&mut rng, 0.5)).collect();
        let (va, vb) = (indicator_of(&a, p).unwrap(), indicator_of(&b, p).unwrap());
        prop_assert_eq!(va.ones(), p - a.len());
        for i in 0..p {
            prop_assert_eq!(va.bits()[i] == 1, !a.contains(i));
        }
        prop_assert_eq!(a == b, va == vb);
    }

    #[test]
    fn weight_monotone_along_chains(w in weights(12), steps in prop::collection::vec(0usize..12, 1..12)) {
        let mut s = CovariateSet::empty();
        let mut prev = set_weight(&s, &w).unwrap();
        for j in steps {
            s.insert(j);
            let cur = set_weight(&s, &w).unwrap();
            prop_assert!(cur <= prev);
            prev = cur;
        }
    }

    #[test]
    fn union_weight_bounded_by_min(w in weights(10), a in subset(10), b in subset(10)) {
        let u = set_weight(&a.union(&b), &w).unwrap();
        prop_assert!(u <= set_weight(&a, &w).unwrap().min(set_weight(&b, &w).unwrap()));
    }

    #[test]
    fn generation_matches_brute_force(p in 2usize..=9, seed in any::<u64>(), density in 0.1f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rand::Rng::random_range(&mut rng, 1..p);
        let processed: HashSet<CovariateSet> = (0u32..1 << p)
            .filter(|m| m.count_ones() as usize == k && rand::Rng::random_bool(&mut rng, density))
            .map(|m| (0..p).filter(|j| m >> j & 1 == 1).collect())
            .collect();
        let s: CovariateSet = shuffled(p, seed)[..k].iter().copied().collect();
        let mut before = processed.clone();
        before.remove(&s);
        let z = generate_new_active_sets(&before, &s, p);
        prop_assert_eq!(&z, &brute_eligible(&before, &s, p));
        for r in &z {
            prop_assert_eq!(r.len(), k + 1);
            for x in r.iter() {
                let sub = r.without(x);
                prop_assert!(sub == s || before.contains(&sub));
            }
        }
    }

    #[test]
    fn lattice_walk_keeps_invariants(p in 1usize..=8, picks in prop::collection::vec(any::<prop::sample::Index>(), 1..200)) {
        let mut lat = LatticeState::new(p, p);
        let mut ever_active: HashSet<CovariateSet> = lat.active().iter().cloned().collect();
        for pick in picks {
            if lat.is_exhausted() {
                break;
            }
            let s = lat.active().iter().nth(pick.index(lat.active().len())).unwrap().clone();
            for r in lat.commit(&s) {
                prop_assert!(ever_active.insert(r));
            }
            prop_assert!(lat.check_invariants().is_ok());
        }
    }

    #[test]
    fn grouping_invariant_under_row_permutation(d in dataset(60, 5), seed in any::<u64>(), drop in subset(5)) {
        let retained = drop.complement(d.p()).members().into_iter().filter(|&j| j < d.p()).collect::<CovariateSet>();
        let perm = shuffled(d.n(), seed);
        let dp = permute(&d, &perm);
        let all: Vec<usize> = (0..d.n()).collect();
        let canon = |d: &Dataset, map: &dyn Fn(usize) -> usize| {
            let mut v: Vec<Vec<usize>> = prune(d, group_by(d, &retained, &all).groups)
                .into_iter()
                .map(|g| { let mut m: Vec<usize> = g.members.iter().map(|&u| map(u)).collect(); m.sort(); m })
                .collect();
            v.sort();
            v
        };
        prop_assert_eq!(canon(&d, &|u| u), canon(&dp, &|u| perm[u]));
    }

    #[test]
    fn engine_groups_are_well_formed(d in dataset(80, 6), w in weights(6)) {
        let w = WeightVector::new(w.as_slice()[..d.p()].to_vec()).unwrap();
        let res = run(&d, None, &fixed(w)).unwrap();
        let st = &res.state;
        let mut main_seen = vec![false; d.n()];
        for g in res.groups() {
            prop_assert!(g.n_treated >= 1 && g.n_control >= 1);
            let main: BTreeSet<_> = g.main_members.iter().collect();
            let aux: BTreeSet<_> = g.aux_members.iter().collect();
            prop_assert!(main.is_disjoint(&aux));
            prop_assert_eq!(main.union(&aux).count(), g.members.len());
            for &u in &g.members {
                for j in g.retained.iter() {
                    prop_assert_eq!(d.code(u, j), d.code(g.members[0], j));
                }
            }
            for &u in &g.main_members {
                prop_assert!(!main_seen[u]);
                main_seen[u] = true;
            }
        }
        for u in 0..d.n() {
            prop_assert_eq!(st.done[u], st.main_group[u].is_some());
            prop_assert_eq!(st.done[u], main_seen[u]);
        }
        prop_assert!(check_downward_closure(res.trace()).is_ok());
        prop_assert!(check_nonincreasing_weight(res.trace()).is_ok());
    }

    #[test]
    fn engine_is_deterministic(d in dataset(60, 5), w in weights(5)) {
        let w = WeightVector::new(w.as_slice()[..d.p()].to_vec()).unwrap();
        let a = run(&d, None, &fixed(w.clone())).unwrap();
        let b = run(&d, None, &fixed(w)).unwrap();
        prop_assert_eq!(&a.state, &b.state);
        prop_assert_eq!(a.stop_reason, b.stop_reason);
    }

    #[test]
    fn oracles_agree_and_ignore_row_order(d in dataset(40, 5), w in weights(5), seed in any::<u64>()) {
        let w = WeightVector::new(w.as_slice()[..d.p()].to_vec()).unwrap();
        let pair = brute_pairwise(&d, &w).unwrap();
        let en = brute_enumerate(&d, &w).unwrap();
        for m in &pair {
            match en.state.main_group_of(m.unit) {
                Some(g) => prop_assert_eq!(set_weight(&g.dropped, &w).unwrap(), m.optimal_weight),
                None => prop_assert!(m.degenerate),
            }
        }
        let perm = shuffled(d.n(), seed);
        let pp = brute_pairwise(&permute(&d, &perm), &w).unwrap();
        let orig: Vec<(usize, f64, bool)> = pair.iter().map(|m| (m.unit, m.optimal_weight, m.degenerate)).collect();
        let mut moved: Vec<(usize, f64, bool)> = pp.iter().map(|m| (perm[m.unit], m.optimal_weight, m.degenerate)).collect();
        moved.sort_by_key(|m| m.0);
        prop_assert_eq!(orig, moved);
    }

    #[test]
    fn balancing_factor_in_range(rc in 0usize..50, rt in 0usize..50, fc in 0.0f64..=1.0, ft in 0.0f64..=1.0) {
        let mc = (fc * rc as f64) as usize;
        let mt = (ft * rt as f64) as usize;
        let bf = balancing_factor(mc, rc, mt, rt);
        prop_assert!((0.0..=2.0).contains(&bf));
        prop_assert_eq!(bf, balancing_factor(mc, rc, 0, 0) + balancing_factor(0, 0, mt, rt));
    }

    #[test]
    fn prediction_error_ignores_row_order(d in dataset(60, 4), seed in any::<u64>(), drop in subset(4)) {
        let drop: CovariateSet = drop.iter().filter(|&j| j < d.p()).collect();
        let a = prediction_error(&d, &drop, 0.0).unwrap();
        let b = prediction_error(&permute(&d, &shuffled(d.n(), seed)), &drop, 0.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
    }

    #[test]
    fn prediction_error_grows_with_dropped_columns(d in dataset(60, 4), drop in subset(4), extra in 0usize..4) {
        let drop: CovariateSet = drop.iter().filter(|&j| j < d.p()).collect();
        let more = drop.with(extra % d.p());
        let a = prediction_error(&d, &drop, 0.0).unwrap();
        let b = prediction_error(&d, &more, 0.0).unwrap();
        prop_assert!(b >= a - 1e-9 * (1.0 + a), "{} then {}", a, b);
    }

    #[test]
    fn group_cate_of_twins_is_tau(nt in 1usize..6, nc in 1usize..6, base in -20i32..20, tau in -16i32..16, extra in 0usize..4, seed in any::<u64>()) {
        let tau = f64::from(tau) / 4.0;
        let n = nt + nc + extra;
        let rows: Vec<Vec<u32>> = (0..n).map(|u| vec![u32::from(u >= nt + nc), 1]).collect();
        let t: Vec<u8> = (0..n).map(|u| u8::from(u < nt || (u >= nt + nc && u % 2 == 0))).collect();
        let y: Vec<f64> = (0..n).map(|u| f64::from(base) + if t[u] == 1 { tau } else { 0.0 } + if u >= nt + nc { 100.0 } else { 0.0 }).collect();
        let d = Dataset::binary(&rows, &t, &y).unwrap();
        let members = shuffled(nt + nc, seed);
        let g = MatchedGroup {
            id: GroupId { iteration: 0, rank: 0 },
            dropped: CovariateSet::empty(),
            retained: CovariateSet::full(2),
            key_values: vec![0, 1],
            main_members: members.clone(),
            members,
            aux_members: vec![],
            n_treated: nt,
            n_control: nc,
        };
        prop_assert_eq!(group_cate(&g, &d).unwrap(), tau);
    }

    #[test]
    fn synthgen_is_deterministic_and_counts_exact(nc in 5usize..60, nt in 5usize..60, seed in any::<u64>(), which in 0usize..4) {
        let spec = match which {
            0 => DgpSpec::irrelevant(nc, nt, seed),
            1 => DgpSpec::exp_decay(nc, nt, 6, seed),
            2 => DgpSpec::noise(nc, nt, 1.0, 0.5, seed),
            _ => DgpSpec::missing(nc, nt, 5, 0.2, seed),
        };
        let a = gen_scenario(&spec).unwrap();
        let b = gen_scenario(&spec).unwrap();
        prop_assert_eq!(&a.data, &b.data);
        prop_assert_eq!(&a.holdout, &b.holdout);
        prop_assert_eq!(&a.true_cate, &b.true_cate);
        prop_assert_eq!(a.data.n_treated(), nt);
        prop_assert_eq!(a.data.n_control(), nc);
        let mut quiet = a.model.clone();
        quiet.tau = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Missing cells hide the latent covariates the effect was drawn from.
        for u in (0..a.data.n()).filter(|&u| (0..a.data.p()).all(|j| !a.data.is_missing(u, j))) {
            let x = a.data.row(u);
            let diff = gen_outcome(x, 1, &quiet, &mut rng) - gen_outcome(x, 0, &quiet, &mut rng);
            prop_assert_eq!(diff, a.true_cate[u]);
        }
    }

    #[test]
    fn missing_values_never_key_a_group(seed in any::<u64>(), rate in 0.05f64..0.5) {
        let g = gen_scenario(&DgpSpec::missing(90, 30, 5, rate, seed)).unwrap();
        prop_assert_eq!(g.model.alpha.len(), 5);
        let res = run(&g.data, None, &fixed(WeightVector::uniform(5)).with_missing(true)).unwrap();
        for grp in res.groups() {
            for &u in &grp.members {
                for j in grp.retained.iter() {
                    prop_assert!(!g.data.is_missing(u, j));
                }
            }
        }
    }
}

#[test]
fn scenario_names_parse() {
    for (s, want) in [
        ("irrelevant", Scenario::Irrelevant),
        ("exp_decay", Scenario::ExpDecay),
        ("imbalance", Scenario::Imbalance),
        ("noise", Scenario::Noise),
        ("missing", Scenario::MissingCorrelated),
    ] {
        assert_eq!(s.parse::<Scenario>().unwrap(), want);
    }
    assert!("bogus".parse::<Scenario>().is_err());
}

#[test]
fn irrelevant_columns_score_near_one() {
    let mut spec = DgpSpec::irrelevant(2500, 2500, 77);
    spec.holdout_control = Some(2500);
    spec.holdout_treated = Some(2500);
    let g = gen_scenario(&spec).unwrap();
    let scores = aemr::holdout::permutation_importance(&g.holdout, 50, 0.0, 77).unwrap();
    assert!(scores.iter().all(|&s| s >= 0.0));
    for (j, s) in scores.iter().enumerate().skip(5) {
        assert!((s - 1.0).abs() <= 0.05, "x{j} scored {s}");
    }
}
