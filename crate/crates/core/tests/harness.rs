use std::sync::Arc;

use cccb::harness::*;
use cccb::{EnvironmentInstance, GeneratorConfig, NoiseModel, PolicyKind, RecomputeMode};

fn desk(seed: u64) -> EnvironmentInstance {
    EnvironmentInstance::generate(GeneratorConfig::new(20, 5, 2), seed).unwrap()
}

#[test]
fn determinant_bound_holds_over_a_long_episode() {
    let inst = desk(1);
    let ep = run_episode(&inst, PolicyKind::CcconUcb, &EpisodeConfig::new(0.2, 500), 11).unwrap();
    let probe = probe_lemma2(&ep.log, &ep.trace);
    assert!(probe.pass);
    assert_eq!(probe.rounds_checked, 501);
    // Equality at t = 0.
    assert!(probe.min_slack().unwrap().abs() < 1e-12);
    let last = ep.trace.rows.last().unwrap();
    let rhs = 5.0 * (5.0 + last.optimistic as f64 * 2.0 * 5.0 / 5.0).ln();
    assert!(rhs - last.log_det_v > 1.0);
}

#[test]
fn norm_sum_bounds_hold_with_positive_slack() {
    let inst = desk(2);
    let ep = run_episode(&inst, PolicyKind::C2Ucb, &EpisodeConfig::new(0.2, 200), 12).unwrap();
    let probe = probe_norm_sums(&ep.log, &ep.trace);
    assert!(probe.pass);
    let positive_slack = ep
        .trace
        .rows
        .iter()
        .filter(|r| r.optimistic > 0)
        .all(|r| {
            let (a, b) = norm_sum_bounds(r.optimistic, 2, 5, 5.0, 5.0);
            a.min(b) - r.norm_sum.unwrap() > 0.0
        });
    assert!(positive_slack);
}

#[test]
fn tighter_norm_sum_bound_switches_near_dimension() {
    // d = 10, K = 2, λ = L: the determinant form is tighter up to n_t·K = d.
    let tighter: Vec<bool> = (1..=12)
        .map(|n| {
            let (a, b) = norm_sum_bounds(n, 2, 10, 10.0, 10.0);
            a <= b + 1e-12
        })
        .collect();
    assert!(tighter[..5].iter().all(|&t| t));
    assert!(tighter[5..].iter().all(|&t| !t));
}

#[test]
fn conservative_round_bound_holds_during_warm_up() {
    let inst = desk(3);
    let ep = run_episode(&inst, PolicyKind::CcconUcb, &EpisodeConfig::new(0.15, 400), 13).unwrap();
    let probe = probe_conservative_rounds(&ep.log, &ep.trace);
    assert!(probe.pass, "{probe:?}");
    assert!(probe.rounds_checked > 0);
    // With no data the first rounds are forced conservative; d_t then passes
    // (1 − α)/α = 5.67 at t = 6 while d_(t−1) = 5 does not.
    assert!(ep.log.records[..6].iter().all(|r| r.was_conservative));
    assert_eq!(probe.notes.len(), 1);
}

#[test]
fn conservative_round_probe_skips_other_policies() {
    let inst = desk(4);
    for (kind, cfg) in [
        (PolicyKind::C2Ucb, EpisodeConfig::new(0.2, 50)),
        (PolicyKind::AlwaysConservative, EpisodeConfig::new(0.2, 50)),
        (PolicyKind::CcconUcb, EpisodeConfig::new(0.2, 50).unknown_mu0()),
    ] {
        let ep = run_episode(&inst, kind, &cfg, 1).unwrap();
        assert_eq!(probe_conservative_rounds(&ep.log, &ep.trace).rounds_checked, 0);
    }
}

#[test]
fn coverage_is_near_certain_at_desk_scale_and_certain_when_widened() {
    let episodes = |scale: f64| -> Vec<Episode> {
        let mut cfg = EpisodeConfig::new(0.2, 300);
        cfg.coverage_radius_scale = scale;
        (0..100)
            .map(|s| run_episode(&desk(100 + s), PolicyKind::C2Ucb, &cfg, 500 + s).unwrap())
            .collect()
    };
    let base = episodes(1.0);
    assert!(probe_confidence_coverage(&base).unwrap().pass);
    let wide = episodes(2.0);
    assert!(wide.iter().all(|e| e.coverage_held));
}

#[test]
fn shrunken_intervals_are_caught() {
    let mut cfg = EpisodeConfig::new(0.2, 300);
    cfg.coverage_radius_scale = 0.05;
    let ep = run_episode(&desk(5), PolicyKind::C2Ucb, &cfg, 1).unwrap();
    assert!(!ep.coverage_held);
}

#[test]
fn noiseless_episodes_keep_coverage() {
    let mut gen = GeneratorConfig::new(20, 5, 2);
    gen.noise = NoiseModel::Gaussian { sigma: 0.0 };
    let inst = EnvironmentInstance::generate(gen, 6).unwrap();
    for kind in [PolicyKind::CcconUcb, PolicyKind::C2Ucb] {
        let ep = run_episode(&inst, kind, &EpisodeConfig::new(0.2, 300), 2).unwrap();
        assert!(ep.coverage_held);
    }
}

#[test]
fn rounds_are_conserved_and_regret_is_monotone() {
    let inst = desk(7);
    for kind in [PolicyKind::CcconUcb, PolicyKind::C2Ucb, PolicyKind::AlwaysConservative] {
        for mode in [RecomputeMode::Fresh, RecomputeMode::Static] {
            let mut cfg = EpisodeConfig::new(0.2, 300);
            cfg.recompute_mode = mode;
            let ep = run_episode(&inst, kind, &cfg, 3).unwrap();
            let (n, d) = selection_counts(&ep.log);
            assert_eq!(n + d, 300);
            let r = pseudo_regret(&ep.log);
            assert!(r[0] >= 0.0);
            assert!(r.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}

#[test]
fn policies_share_contexts_under_one_episode_seed() {
    let inst = desk(8);
    let cfg = EpisodeConfig::new(0.2, 100);
    let a = run_episode(&inst, PolicyKind::C2Ucb, &cfg, 9).unwrap();
    let b = run_episode(&inst, PolicyKind::AlwaysConservative, &cfg, 9).unwrap();
    for (x, y) in a.log.records.iter().zip(&b.log.records) {
        assert_eq!(x.optimal_reward, y.optimal_reward);
    }
}

#[test]
fn known_safety_on_a_small_batch() {
    let cfg = EpisodeConfig::new(0.1, 500);
    let jobs: Vec<Job> = (0..20)
        .map(|s| Job {
            instance: Arc::new(desk(200 + s)),
            kind: PolicyKind::CcconUcb,
            config: cfg.clone(),
            episode_seed: s,
        })
        .collect();
    for ep in run_batch(&jobs, 2) {
        let ep = ep.unwrap();
        assert_eq!(constraint_violations(&ep.log, 0.1, ep.log.meta.mu0_true), 0);
    }
}

#[test]
fn realized_counter_is_available() {
    let inst = desk(9);
    let ep = run_episode(&inst, PolicyKind::C2Ucb, &EpisodeConfig::new(0.01, 300), 4).unwrap();
    let realized = realized_constraint_violations(&ep.log, 0.01, inst.mu0_true, &inst.config.reward_function);
    assert!(realized <= 300);
}

#[test]
fn endurance_summary_groups_by_alpha_and_tercile() {
    let samples: Vec<EnduranceSample> = (0..6)
        .flat_map(|i| {
            [0.1, 0.3].map(move |alpha| EnduranceSample {
                instance_seed: i,
                alpha,
                gap: i as f64,
                endurance: if i == 0 { None } else { Some(10 - i as usize) },
            })
        })
        .collect();
    let summary = summarize_endurance(&samples, 20);
    assert_eq!(summary.len(), 6);
    let low = &summary[0];
    assert_eq!((low.alpha, low.tercile, low.runs, low.censored), (0.1, 0, 2, 1));
    assert_eq!(low.mean_endurance, (21.0 + 9.0) / 2.0);
}

#[test]
fn probe_report_serializes() {
    let inst = desk(10);
    let ep = run_episode(&inst, PolicyKind::CcconUcb, &EpisodeConfig::new(0.2, 100), 5).unwrap();
    let report = probe_episode(&ep);
    let json = serde_json::to_string(&report).unwrap();
    let back: ProbeReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}

#[test]
fn invalid_episode_configs_are_rejected() {
    let inst = desk(11);
    let mut cfg = EpisodeConfig::new(0.2, 0);
    assert!(run_episode(&inst, PolicyKind::CcconUcb, &cfg, 0).is_err());
    cfg.horizon = 10;
    cfg.delta = 0.0;
    assert!(run_episode(&inst, PolicyKind::CcconUcb, &cfg, 0).is_err());
    let cfg = EpisodeConfig::new(1.0, 10);
    assert!(run_episode(&inst, PolicyKind::CcconUcb, &cfg, 0).is_err());
}
