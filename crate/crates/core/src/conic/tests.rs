//! Cross-checks of the conic encoding against direct metric evaluation, and
//! solver behavior on small programs.

use approx::assert_relative_eq;
use proptest::prelude::{prop_assert, ProptestConfig};

use crate::baselines::{build_structure, SchemeKind};
use crate::metrics::{self, PrecoderSet, RateAllocation};
use crate::netmodel::{noise_power, Criticality, Scenario, SystemConfig};
use crate::qt_algo::{init_precoders, update_aux, AuxVariables, InitMode};
use crate::structure::{RsmaStructure, StructureParams};

use super::program::{LinearRow, ProgramBuilder};
use super::*;

fn small_config(num_bs: usize, num_users: usize, antennas: usize, seed: u64) -> SystemConfig {
    SystemConfig {
        num_bs,
        num_users,
        antennas_per_bs: antennas,
        desired_rates_mbps: vec![5.0; num_users],
        criticality_levels: vec![Criticality::Lo; num_users],
        seed,
        ..SystemConfig::desk_default()
    }
}

/// Embed a candidate `(w, r, gamma)` into the program's variable vector,
/// with interference epigraphs set to their exact (noise-normalized) values
/// and the objective epigraphs tight.
#[allow(clippy::too_many_arguments)]
fn embed_point(
    program: &ConicProgram,
    w: &PrecoderSet,
    r: &RateAllocation,
    gamma_private: &[f64],
    gamma_common: &std::collections::BTreeMap<(usize, usize), f64>,
    h: &crate::netmodel::ChannelState,
    s: &RsmaStructure,
    config: &SystemConfig,
) -> Vec<f64> {
    let layout = &program.layout;
    let l = layout.antennas;
    let noise_w = noise_power(config);
    let mut x = vec![0.0; program.num_vars];

    for (k, stream) in layout.private_streams.iter().enumerate() {
        for (p, &b) in stream.serving.iter().enumerate() {
            for a in 0..l {
                let (re, im) = stream.coeff(p, a, l);
                x[re] = w.private[k][b * l + a].re;
                x[im] = w.private[k][b * l + a].im;
            }
        }
    }
    for (i, stream) in layout.common_streams.iter().enumerate() {
        if let Some(stream) = stream {
            for (p, &b) in stream.serving.iter().enumerate() {
                for a in 0..l {
                    let (re, im) = stream.coeff(p, a, l);
                    x[re] = w.common[i][b * l + a].re;
                    x[im] = w.common[i][b * l + a].im;
                }
            }
        }
    }
    for k in 0..layout.num_users {
        x[layout.rate_private[k]] = r.private[k];
    }
    match &layout.shares {
        Some(shares) => {
            for k in 0..layout.num_users {
                x[shares[k]] = r.common[k];
            }
            if let Some(owner) = s.shared_common {
                if let Some(rc) = layout.rate_common[owner] {
                    x[rc] = r.common.iter().sum();
                }
            }
        }
        None => {
            for (i, rc) in layout.rate_common.iter().enumerate() {
                if let Some(rc) = rc {
                    x[*rc] = r.common[i];
                }
            }
        }
    }
    let _ = noise_w;
    let d2 = |k: usize| program.user_divisor[k] * program.user_divisor[k];
    for k in 0..layout.num_users {
        x[layout.gamma_private[k]] = gamma_private[k];
        x[layout.intf_private[k]] = metrics::private_interference(k, w, h, s) / d2(k);
    }
    for (&(i, k), &idx) in &layout.gamma_common {
        x[idx] = gamma_common[&(i, k)];
        x[layout.intf_common[&(i, k)]] =
            metrics::common_interference(i, k, w, h, s).unwrap() / d2(k);
    }
    let mse: f64 = (0..layout.num_users)
        .map(|k| (r.total(k) - config.desired_rates_mbps[k]).powi(2))
        .sum();
    x[layout.mse_epigraph] = mse;
    x[layout.power_epigraph] = w.total_power();
    x
}

#[test]
fn rate_log_cone_boundary_points() {
    let tau = 10.0;
    let mut b = ProgramBuilder::new(2);
    encode_rate_log(&mut b, 0, 1, tau);
    let p = b.finish(VariableLayout::empty());

    // (r, gamma) = (0, 0) and (tau, 1) sit on the boundary.
    assert!(p.cone_violation(&[0.0, 0.0]).abs() < 1e-12);
    assert!(p.cone_violation(&[tau, 1.0]).abs() < 1e-12);
    // (tau, 0.9) violates r <= tau log2(1 + gamma).
    assert!(p.cone_violation(&[tau, 0.9]) > 1e-3);
    // Interior point.
    assert!(p.cone_violation(&[tau - 1.0, 1.0]) < 0.0_f64.max(-1e-12) + 1e-12);
}

#[test]
fn qt_row_with_zero_aux_pins_gamma() {
    // u = 0 collapses the row to gamma <= 0.
    let cfg = small_config(1, 1, 1, 9);
    let scen = Scenario::generate(&cfg);
    let s = build_structure(SchemeKind::Tin, &scen.channel, &cfg, &StructureParams::default());
    let u = AuxVariables::zeros(&s, 1);
    let program = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();

    let w = PrecoderSet::zeros(1, 1);
    let r = RateAllocation::zeros(1);
    let ok = embed_point(&program, &w, &r, &[0.0], &Default::default(), &scen.channel, &s, &cfg);
    assert!(program.cone_violation(&ok) < 1e-9);
    let bad = embed_point(&program, &w, &r, &[0.1], &Default::default(), &scen.channel, &s, &cfg);
    assert!(program.cone_violation(&bad) > 0.05);
}

#[test]
fn qt_row_at_optimal_aux_reproduces_the_sinr() {
    // Single user: at u from the closed form, the row boundary sits exactly
    // at gamma = |h^H w|^2 / sigma^2 for the w that produced u.
    let cfg = small_config(1, 1, 2, 11);
    let scen = Scenario::generate(&cfg);
    let s = build_structure(SchemeKind::Tin, &scen.channel, &cfg, &StructureParams::default());
    let noise_w = noise_power(&cfg);
    let w = init_precoders(&scen.channel, &s.clusters, &cfg, InitMode::Mrt);
    let u = update_aux(&w, &scen.channel, &s, noise_w);
    let program = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();

    let sinr = metrics::sinr_private(0, &w, &scen.channel, &s, noise_w);
    let r = RateAllocation::zeros(1);
    let at = |gamma: f64| {
        embed_point(&program, &w, &r, &[gamma], &Default::default(), &scen.channel, &s, &cfg)
    };
    assert!(program.cone_violation(&at(sinr)) < 1e-9 * sinr.max(1.0));
    assert!(program.cone_violation(&at(sinr * 0.95)) < 1e-9 * sinr.max(1.0));
    assert!(program.cone_violation(&at(sinr * 1.05)) > 1e-6);
}

#[test]
fn encoded_program_agrees_with_direct_qt_evaluation() {
    // Dual-route check on a full RSMA instance: the program accepts exactly
    // the points whose direct surrogate and constraint evaluations pass.
    for seed in [3u64, 17, 29] {
        let cfg = small_config(2, 3, 2, seed);
        let scen = Scenario::generate(&cfg);
        let s = build_structure(SchemeKind::Rsma, &scen.channel, &cfg, &StructureParams::default());
        let noise_w = noise_power(&cfg);
        let w = init_precoders(&scen.channel, &s.clusters, &cfg, InitMode::Random);
        let u = update_aux(&w, &scen.channel, &s, noise_w);
        let program = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();
        program.validate().unwrap();

        let gamma_p_true: Vec<f64> =
            (0..3).map(|k| metrics::sinr_private(k, &w, &scen.channel, &s, noise_w)).collect();
        let gamma_c_true: std::collections::BTreeMap<(usize, usize), f64> = s
            .common_pairs()
            .into_iter()
            .map(|(i, k)| {
                ((i, k), metrics::sinr_common(i, k, &w, &scen.channel, &s, noise_w).unwrap())
            })
            .collect();

        // Within the surrogate boundary (g <= 0): accepted.
        let bounds = metrics::achievable_rates(&w, &scen.channel, &s, &cfg);
        let tighten = 0.9;
        let gp: Vec<f64> = gamma_p_true.iter().map(|g| g * tighten).collect();
        let gc: std::collections::BTreeMap<_, _> =
            gamma_c_true.iter().map(|(&p, &g)| (p, g * tighten)).collect();
        let mut r = RateAllocation::zeros(3);
        for (k, &gamma) in gp.iter().enumerate() {
            r.private[k] = crate::metrics::rate_bound(cfg.bandwidth_mhz, gamma).min(2.0);
            r.common[k] = 0.5;
        }
        for (k, &gamma) in gp.iter().enumerate() {
            let g_direct =
                metrics::qt_private_gap(k, &w, &scen.channel, &s, noise_w, u.private[k], gamma);
            assert!(g_direct < 0.0, "tightened gamma must satisfy the surrogate");
        }
        let x = embed_point(&program, &w, &r, &gp, &gc, &scen.channel, &s, &cfg);
        assert!(
            program.cone_violation(&x) < 1e-7,
            "direct-pass point rejected (violation {})",
            program.cone_violation(&x)
        );
        let _ = bounds;

        // Beyond the surrogate boundary: both routes reject.
        let gp_bad: Vec<f64> = gamma_p_true.iter().map(|g| g * 1.1).collect();
        for (k, &gamma) in gp_bad.iter().enumerate() {
            let g_direct =
                metrics::qt_private_gap(k, &w, &scen.channel, &s, noise_w, u.private[k], gamma);
            assert!(g_direct > 0.0);
        }
        let x_bad = embed_point(&program, &w, &r, &gp_bad, &gc, &scen.channel, &s, &cfg);
        assert!(program.cone_violation(&x_bad) > 1e-6);
    }
}

#[test]
fn aux_dimension_mismatch_is_a_build_error() {
    let cfg = small_config(2, 3, 1, 5);
    let scen = Scenario::generate(&cfg);
    let s = build_structure(SchemeKind::Rsma, &scen.channel, &cfg, &StructureParams::default());
    let mut u = AuxVariables::zeros(&s, 3);
    u.private.pop();
    assert!(build_subproblem(&scen.channel, &s, &u, &cfg).is_err());

    let mut u = AuxVariables::zeros(&s, 3);
    u.common.remove(&s.common_pairs()[0]);
    assert!(build_subproblem(&scen.channel, &s, &u, &cfg).is_err());
}

#[test]
fn variable_count_matches_closed_form() {
    // Fully connected structure at the full scale: K (2 (BL + 1) + K + 1).
    let cases = [(10usize, 16usize, 2usize), (4, 6, 2), (2, 3, 1), (3, 5, 4)];
    for (b, k, l) in cases {
        let mut cfg = small_config(b, k, l, 1);
        cfg.desired_rates_mbps = vec![5.0; k];
        cfg.criticality_levels = vec![Criticality::Lo; k];
        let s = RsmaStructure::full(b, k);
        let layout = VariableLayout::build(&s, &cfg);
        assert_eq!(
            layout.core_variable_count(),
            VariableLayout::full_rsma_core_count(b, k, l),
            "core count mismatch at B={b} K={k} L={l}"
        );
    }
    // The headline case: B=10, K=16, L=2 gives 944.
    assert_eq!(VariableLayout::full_rsma_core_count(10, 16, 2), 944);
}

#[test]
fn tin_program_has_no_common_cones() {
    let cfg = small_config(2, 3, 2, 6);
    let scen = Scenario::generate(&cfg);
    let s = build_structure(SchemeKind::Tin, &scen.channel, &cfg, &StructureParams::default());
    let u = AuxVariables::zeros(&s, 3);
    let program = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();
    let exp_blocks =
        program.blocks.iter().filter(|b| b.kind == ConeKind::Exponential).count();
    assert_eq!(exp_blocks, cfg.num_users); // private rate cones only
    assert!(program.layout.gamma_common.is_empty());
    assert!(program.layout.rate_common.iter().all(Option::is_none));
}

#[test]
fn rebuilt_program_is_structurally_identical() {
    let cfg = small_config(2, 3, 2, 8);
    let scen = Scenario::generate(&cfg);
    let s = build_structure(SchemeKind::Rsma, &scen.channel, &cfg, &StructureParams::default());
    let noise_w = noise_power(&cfg);
    let w = init_precoders(&scen.channel, &s.clusters, &cfg, InitMode::Mrt);
    let u = update_aux(&w, &scen.channel, &s, noise_w);
    let a = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();
    let b = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();
    assert_eq!(a.dump_text(), b.dump_text());
}

#[test]
fn trivial_power_minimization_returns_zero() {
    // min t, t >= ||w||^2, ||w|| <= 1: solution w = 0.
    let mut b = ProgramBuilder::new(3);
    b.set_objective(2, 1.0);
    b.push_sq_epigraph(
        2,
        vec![
            LinearRow::new(vec![(0, -1.0)], 0.0),
            LinearRow::new(vec![(1, -1.0)], 0.0),
        ],
    );
    b.push_soc(vec![
        LinearRow::new(vec![], 1.0),
        LinearRow::new(vec![(0, -1.0)], 0.0),
        LinearRow::new(vec![(1, -1.0)], 0.0),
    ]);
    let p = b.finish(VariableLayout::empty());
    let res = solve(&p, &SolverSettings::default());
    assert_eq!(res.status, SolveStatus::Optimal);
    let x = res.solution.unwrap().raw;
    assert!(x[0].abs() < 1e-6 && x[1].abs() < 1e-6);
    assert!(res.objective.abs() < 1e-6);
}

#[test]
fn contradictory_rows_are_infeasible() {
    // r >= 1 and r <= 0.
    let mut b = ProgramBuilder::new(1);
    b.set_objective(0, 1.0);
    b.push_leq(vec![(0, -1.0)], -1.0);
    b.push_leq(vec![(0, 1.0)], 0.0);
    let p = b.finish(VariableLayout::empty());
    let res = solve(&p, &SolverSettings::default());
    assert_eq!(res.status, SolveStatus::Infeasible);
}

#[test]
fn single_user_subproblem_matches_scalar_search() {
    // B = K = L = 1 at fixed auxiliaries: the subproblem reduces to a scalar
    // power choice; compare against a dense 1-D scan.
    let cfg = SystemConfig {
        area_side_m: 150.0,
        fronthaul_capacity_mbps: 40.0,
        desired_rates_mbps: vec![12.0],
        ..small_config(1, 1, 1, 13)
    };
    let scen = Scenario::generate(&cfg);
    let s = build_structure(SchemeKind::Tin, &scen.channel, &cfg, &StructureParams::default());
    let noise_w = noise_power(&cfg);
    let w0 = init_precoders(&scen.channel, &s.clusters, &cfg, InitMode::Mrt);
    let u = update_aux(&w0, &scen.channel, &s, noise_w);
    let program = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();
    let res = solve(&program, &SolverSettings::default());
    assert_eq!(res.status, SolveStatus::Optimal);
    let mapped = res.solution.unwrap();
    let psi_solver = metrics::objective_psi(&mapped.precoders, &mapped.rates, &cfg);

    // Scalar oracle over the amplitude; u and h are phase-aligned under MRT.
    let h_gain = scen.channel.link(0, 0)[0].norm();
    let u_mag = u.private[0].norm();
    let des = cfg.desired_rates_mbps[0];
    let mut best = f64::INFINITY;
    let n = 200_001;
    for i in 0..n {
        let a = (i as f64 / (n - 1) as f64) * cfg.max_power_w.sqrt();
        let qt_bound = 2.0 * u_mag * h_gain * a - u_mag * u_mag * noise_w;
        let gamma = qt_bound.max(0.0);
        let bound = cfg.bandwidth_mhz * (1.0 + gamma).log2();
        let r = des.min(bound).min(cfg.fronthaul_capacity_mbps);
        let psi = cfg.alpha * (r - des).powi(2) + (1.0 - cfg.alpha) * a * a;
        best = best.min(psi);
    }
    assert_relative_eq!(psi_solver, best, max_relative = 1e-4);
}

#[test]
fn epigraph_objective_equals_metrics_psi() {
    for seed in [2u64, 4, 10] {
        let cfg = small_config(2, 3, 2, seed);
        let scen = Scenario::generate(&cfg);
        let s = build_structure(SchemeKind::Rsma, &scen.channel, &cfg, &StructureParams::default());
        let noise_w = noise_power(&cfg);
        let w = init_precoders(&scen.channel, &s.clusters, &cfg, InitMode::Mrt);
        let u = update_aux(&w, &scen.channel, &s, noise_w);
        let program = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();
        let res = solve(&program, &SolverSettings::default());
        assert_eq!(res.status, SolveStatus::Optimal);
        let mapped = res.solution.unwrap();
        let psi = metrics::objective_psi(&mapped.precoders, &mapped.rates, &cfg);
        assert_relative_eq!(res.objective, psi, max_relative = 1e-6);
    }
}

#[test]
fn solver_is_deterministic() {
    let cfg = small_config(2, 3, 2, 21);
    let scen = Scenario::generate(&cfg);
    let s = build_structure(SchemeKind::Rsma, &scen.channel, &cfg, &StructureParams::default());
    let noise_w = noise_power(&cfg);
    let w = init_precoders(&scen.channel, &s.clusters, &cfg, InitMode::Mrt);
    let u = update_aux(&w, &scen.channel, &s, noise_w);
    let program = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();
    let a = solve(&program, &SolverSettings::default());
    let b = solve(&program, &SolverSettings::default());
    assert_eq!(a.status, SolveStatus::Optimal);
    assert_relative_eq!(a.objective, b.objective, max_relative = 1e-8);
}

#[test]
fn epigraph_objective_matches_at_alpha_extremes() {
    // At alpha 0 or 1 one epigraph carries zero weight; the equivalence with
    // the direct objective must survive the slack in that epigraph.
    for alpha in [0.0, 1.0] {
        let mut cfg = small_config(2, 3, 1, 40);
        cfg.alpha = alpha;
        let scen = Scenario::generate(&cfg);
        let s = build_structure(SchemeKind::Rsma, &scen.channel, &cfg, &StructureParams::default());
        let noise_w = noise_power(&cfg);
        let w = init_precoders(&scen.channel, &s.clusters, &cfg, InitMode::Mrt);
        let u = update_aux(&w, &scen.channel, &s, noise_w);
        let program = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();
        let res = solve(&program, &SolverSettings::default());
        assert_eq!(res.status, SolveStatus::Optimal);
        let mapped = res.solution.unwrap();
        let psi = metrics::objective_psi(&mapped.precoders, &mapped.rates, &cfg);
        assert!(
            (res.objective - psi).abs() <= 1e-6 * psi.abs().max(1e-9) + 1e-9,
            "alpha {alpha}: epigraph {} vs direct {psi}",
            res.objective
        );
    }
}

proptest::proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Round trip: points that satisfy every constraint by direct metric
    /// evaluation (with margin) are accepted by the encoded program, and
    /// points that break the surrogate are rejected.
    #[test]
    fn round_trip_direct_evaluation_vs_program(
        seed in 0u64..1000,
        gamma_scale in 0.05f64..0.95,
        rate_scale in 0.05f64..0.9,
    ) {
        let cfg = small_config(2, 3, 1, 7000 + seed);
        let scen = Scenario::generate(&cfg);
        let s = build_structure(SchemeKind::Rsma, &scen.channel, &cfg, &StructureParams::default());
        let noise_w = noise_power(&cfg);
        let w = init_precoders(&scen.channel, &s.clusters, &cfg, InitMode::Random);
        let u = update_aux(&w, &scen.channel, &s, noise_w);
        let program = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();

        let kn = cfg.num_users;
        let gp: Vec<f64> = (0..kn)
            .map(|k| gamma_scale * metrics::sinr_private(k, &w, &scen.channel, &s, noise_w))
            .collect();
        let gc: std::collections::BTreeMap<(usize, usize), f64> = s
            .common_pairs()
            .into_iter()
            .map(|(i, k)| {
                let sinr = metrics::sinr_common(i, k, &w, &scen.channel, &s, noise_w).unwrap();
                ((i, k), gamma_scale * sinr)
            })
            .collect();
        // Rates inside both the log bound and the fronthaul budget.
        let mut r = RateAllocation::zeros(kn);
        let mut common_min = vec![f64::INFINITY; kn];
        for (&(i, _), &g) in &gc {
            common_min[i] = common_min[i].min(g);
        }
        for k in 0..kn {
            r.private[k] = (rate_scale * metrics::rate_bound(cfg.bandwidth_mhz, gp[k]))
                .min(cfg.fronthaul_capacity_mbps / (2.0 * kn as f64));
            r.common[k] = if common_min[k].is_finite() {
                (rate_scale * metrics::rate_bound(cfg.bandwidth_mhz, common_min[k]))
                    .min(cfg.fronthaul_capacity_mbps / (2.0 * kn as f64))
            } else {
                0.0
            };
        }
        // Direct route: surrogates and fronthaul hold with margin.
        for (k, &gamma) in gp.iter().enumerate() {
            let g = metrics::qt_private_gap(k, &w, &scen.channel, &s, noise_w, u.private[k], gamma);
            prop_assert!(g < 0.0);
        }
        let x = embed_point(&program, &w, &r, &gp, &gc, &scen.channel, &s, &cfg);
        prop_assert!(
            program.cone_violation(&x) <= 1e-7,
            "direct-pass point rejected with violation {}",
            program.cone_violation(&x)
        );

        // Inflate one private gamma past the surrogate: both routes reject.
        let mut gp_bad = gp.clone();
        gp_bad[0] = gp[0] / gamma_scale * 1.05;
        let g = metrics::qt_private_gap(0, &w, &scen.channel, &s, noise_w, u.private[0], gp_bad[0]);
        prop_assert!(g > 0.0);
        let x_bad = embed_point(&program, &w, &r, &gp_bad, &gc, &scen.channel, &s, &cfg);
        prop_assert!(program.cone_violation(&x_bad) > 0.0);
    }
}

#[test]
fn scm_program_ties_shares_to_the_stream_rate() {
    let cfg = small_config(2, 3, 1, 30);
    let scen = Scenario::generate(&cfg);
    let s = build_structure(SchemeKind::Scm, &scen.channel, &cfg, &StructureParams::default());
    let noise_w = noise_power(&cfg);
    let w = init_precoders(&scen.channel, &s.clusters, &cfg, InitMode::Mrt);
    let u = update_aux(&w, &scen.channel, &s, noise_w);
    let program = build_subproblem(&scen.channel, &s, &u, &cfg).unwrap();
    program.validate().unwrap();
    assert!(program.layout.shares.is_some());
    let res = solve(&program, &SolverSettings::default());
    assert_eq!(res.status, SolveStatus::Optimal);
    let mapped = res.solution.unwrap();
    // Shares are the per-user common rates; the stream rate bounds their sum.
    let owner = s.shared_common.unwrap();
    let stream_rate = mapped.raw[program.layout.rate_common[owner].unwrap()];
    let share_sum: f64 = mapped.rates.common.iter().sum();
    assert!(share_sum <= stream_rate + 1e-6);
}
