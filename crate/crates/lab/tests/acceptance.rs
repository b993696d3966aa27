//! One line per acceptance criterion; exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use degroot_core::audit::{check_a1_coupling, AuditReport, Perturbation};
use degroot_core::dynamics::roles_from_bots;
use degroot_core::oracles::{degroot_closed_form, hoeffding_tail_bound, walk_distribution, wilson_interval};
use degroot_core::{
    AgentRole, Bot, Distortion, Graph, GraphSpec, InitialDistribution, Noise, Simulation, UpdateRule, ValueGrid,
};
use degroot_lab::{run_scenario, ExperimentConfig, ScenarioResult};

fn preset(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.toml"));
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run(name: &str) -> (ScenarioResult, Duration) {
    let start = Instant::now();
    let result = run_scenario(&preset(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    (result, start.elapsed())
}

fn audit<'a>(r: &'a ScenarioResult, name: &str) -> &'a AuditReport {
    r.audit_report(name).unwrap_or_else(|| panic!("{}: no audit {name}", r.scenario))
}

fn metric(r: &ScenarioResult, name: &str) -> f64 {
    r.get(name).unwrap_or_else(|| panic!("{}: no metric {name}", r.scenario))
}

struct Ledger {
    failed: Vec<u32>,
}

impl Ledger {
    fn line(&mut self, id: u32, title: &str, pass: bool, detail: String) {
        println!("criterion {id:>2} {} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }
}

fn uniform_init() -> InitialDistribution {
    InitialDistribution {
        mu: 0.5,
        noise: Noise::Uniform { half_width: 0.5 },
        clip_range: None,
    }
}

fn coupling(ledger: &mut Ledger) {
    let g = Graph::generate(&GraphSpec::Torus { width: 21, height: 21 }).unwrap();
    let roles = vec![AgentRole::Regular; g.node_count()];
    let grid = ValueGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
    let rules = [UpdateRule::EpsDeGroot { eps: 0.02 }, UpdateRule::Granular { values: grid }];
    let mut total = AuditReport::passing(degroot_core::audit::Condition::Monotonicity);
    let mut pairs = 0;
    for rule in &rules {
        for k in 0..100u64 {
            let lower = uniform_init().sample(g.node_count(), 10_000 + k).unwrap();
            let upper = match k % 2 {
                0 => Perturbation::RandomRaise { max: 0.2, seed: k }.apply(&lower),
                _ => Perturbation::Raise {
                    agent: (k as usize * 37) % g.node_count(),
                    amount: 0.3,
                }
                .apply(&lower),
            };
            let report = check_a1_coupling(&g, rule.clone(), &roles, Distortion::None, k, lower, upper, 1000).unwrap();
            total.absorb(&report);
            pairs += 1;
        }
    }
    ledger.line(
        4,
        "monotone coupling",
        total.pass,
        format!("{pairs} ordered pairs x 1000 steps, {} comparisons, order kept: {}", total.checks, total.pass),
    );
}

fn walk_identity(ledger: &mut Ledger) {
    let specs = [
        GraphSpec::Path { n: 30 },
        GraphSpec::Cycle { n: 30 },
        GraphSpec::Torus { width: 9, height: 9 },
        GraphSpec::RegularTree { branching: 2, depth: 4 },
        GraphSpec::RandomRegular { n: 50, degree: 3, seed: 77 },
    ];
    let mut worst = 0.0f64;
    for spec in &specs {
        let g = Graph::generate(spec).unwrap();
        let initial = uniform_init().sample(g.node_count(), 5).unwrap();
        for bots in [vec![], vec![Bot { node: 0, value: 1.0 }]] {
            let roles = roles_from_bots(g.node_count(), &bots).unwrap();
            let mut sim = Simulation::new(&g, UpdateRule::DeGroot, roles, Distortion::None, 0, initial.clone());
            for t in 0..=50u64 {
                if t > 0 {
                    sim.step();
                }
                for (i, x) in sim.state().now.iter().enumerate() {
                    let want = degroot_closed_form(&g, &initial, &bots, i, t).unwrap();
                    worst = worst.max((x - want).abs());
                }
            }
        }
    }
    ledger.line(
        7,
        "walk-averaging identity",
        worst <= 1e-10,
        format!("5 graphs, with and without a bot, t <= 50: max |sim - closed form| = {worst:.2e} (<= 1e-10)"),
    );
}

fn hoeffding(ledger: &mut Ledger) {
    let g = Graph::generate(&GraphSpec::Torus { width: 31, height: 31 }).unwrap();
    let (delta, reps, mu) = (0.3, 2000u64, 0.5);
    let times = [4u64, 16, 64];
    let n = g.node_count();
    // below[k][i]: replications with B_{i,t_k} < mu - delta / 3
    let mut below = vec![vec![0u64; n]; times.len()];
    let roles = vec![AgentRole::Regular; n];
    for r in 0..reps {
        let initial = uniform_init().sample(n, 50_000 + r).unwrap();
        let mut sim = Simulation::new(&g, UpdateRule::DeGroot, roles.clone(), Distortion::None, 0, initial);
        for (k, &t) in times.iter().enumerate() {
            while sim.t() < t {
                sim.step();
            }
            for (i, &b) in sim.state().now.iter().enumerate() {
                below[k][i] += (b < mu - delta / 3.0) as u64;
            }
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let mut worst_excess = f64::NEG_INFINITY;
        let mut worst_freq = 0.0f64;
        let mut bound_at = 0.0;
        for i in 0..n {
            let bound = hoeffding_tail_bound(delta, &walk_distribution(&g, i, t).unwrap().probs).bound;
            let w = wilson_interval(below[k][i], reps);
            worst_excess = worst_excess.max(w.frequency - bound - w.half_width);
            worst_freq = worst_freq.max(w.frequency);
            bound_at = bound;
        }
        pass &= worst_excess <= 0.0;
        parts.push(format!("t={t}: max freq {worst_freq:.4} vs bound {bound_at:.4}"));
    }
    ledger.line(9, "Hoeffding validity", pass, format!("{reps} replications on torus(31,31); {}", parts.join("; ")));
}

fn main() {
    let mut ledger = Ledger { failed: Vec::new() };

    let (ly, ly_time) = run("lyapunov-audit");
    let (lyd, _) = run("lyapunov-audit-distorted");
    let mono = audit(&ly, "lyapunov_monotone");
    ledger.line(
        1,
        "Lyapunov monotonicity",
        mono.pass && ly_time < Duration::from_secs(60),
        format!(
            "10 seeds x 5 centers x 2000 steps: {} checks, worst excess {:.2e}, runtime {:.1}s",
            mono.checks,
            mono.worst_violation,
            ly_time.as_secs_f64()
        ),
    );
    let bound = audit(&ly, "variation_bound");
    ledger.line(
        2,
        "variation bound",
        bound.pass,
        format!(
            "{} (center, seed) pairs, a=0, b=2000; max V / budget = {:.3e}",
            bound.checks,
            metric(&ly, "max_variation_over_budget")
        ),
    );
    let (a3, a3d) = (audit(&ly, "robustness"), audit(&lyd, "robustness"));
    ledger.line(
        3,
        "per-step robustness audit",
        a3.pass && a3d.pass,
        format!(
            "undistorted {} checks (pass {}), uniform noise beta=0.0171 with reduced params {} checks (pass {})",
            a3.checks, a3.pass, a3d.checks, a3d.pass
        ),
    );

    coupling(&mut ledger);

    let (path, _) = run("fragility-bot-path");
    let (torus, _) = run("fragility-bot-torus");
    ledger.line(
        5,
        "bot fragility",
        path.pass && torus.pass,
        format!(
            "path(51): gap {:.2e} at t={}, oracle diff {:.1e}; torus(21,21): gap {:.2e} at t={}, oracle diff {:.1e}",
            metric(&path, "final_max_gap"),
            metric(&path, "steps"),
            metric(&path, "oracle_max_diff"),
            metric(&torus, "final_max_gap"),
            metric(&torus, "steps"),
            metric(&torus, "oracle_max_diff"),
        ),
    );

    let (bias, _) = run("fragility-bias");
    ledger.line(
        6,
        "bias fragility",
        bias.pass,
        format!(
            "min opinion {:.3} > initial max {:.3} + 10 after {} steps",
            metric(&bias, "final_min"),
            metric(&bias, "initial_max"),
            metric(&bias, "steps_to_threshold")
        ),
    );

    walk_identity(&mut ledger);

    let (rw, _) = run("rw-decay");
    ledger.line(
        8,
        "random-walk decay",
        rw.pass,
        format!(
            "path(2001) slope {:.4} in [-0.55, -0.45], empirical constant {:.4}",
            metric(&rw, "slope"),
            metric(&rw, "empirical_constant")
        ),
    );

    hoeffding(&mut ledger);

    let (bot, bot_time) = run("robust-bot");
    let target_freq = metric(&bot, "eps=0.005/max_frequency");
    let rise = metric(&bot, "trend/worst_rise");
    let trend: Vec<String> = ["0.05", "0.02", "0.01", "0.005"]
        .iter()
        .map(|e| format!("{e}:{:.4}", metric(&bot, &format!("eps={e}/mean_error"))))
        .collect();
    ledger.line(
        10,
        "robust learning with a bot",
        target_freq <= 0.1 && rise <= 0.0 && bot_time < Duration::from_secs(1800),
        format!(
            "eps=0.005 max freq {target_freq:.3} (Wilson-padded {:.3}), mean error by eps {}, runtime {:.0}s",
            metric(&bot, "eps=0.005/max_padded_frequency"),
            trend.join(" "),
            bot_time.as_secs_f64()
        ),
    );

    let (dist, dist_time) = run("robust-distortion");
    let bracket = audit(&dist, "eps=0.005/bracket");
    let mut variants_pass = true;
    let mut parts = Vec::new();
    for v in ["noise", "plus", "minus"] {
        let freq = metric(&dist, &format!("eps=0.005/{v}/max_frequency"));
        variants_pass &= freq <= 0.1;
        parts.push(format!(
            "{v}: max freq {freq:.3} (final-state {:.3}, unconverged {})",
            metric(&dist, &format!("eps=0.005/{v}/final_state_max_frequency")),
            metric(&dist, &format!("eps=0.005/{v}/non_converged"))
        ));
    }
    ledger.line(
        11,
        "robust learning under distortion",
        variants_pass && bracket.pass,
        format!(
            "{}; bracket minus <= noise <= plus over {} comparisons: {}; runtime {:.0}s",
            parts.join(", "),
            bracket.checks,
            bracket.pass,
            dist_time.as_secs_f64()
        ),
    );

    let (maj, _) = run("granular-majority");
    ledger.line(
        12,
        "granular majority equivalence",
        maj.pass,
        format!(
            "{} graphs, {} updates, {} mismatches; W={{0,1}}, d=2: gamma={}, eta={}",
            metric(&maj, "graphs"),
            metric(&maj, "compared_updates"),
            metric(&maj, "mismatches"),
            metric(&maj, "params_d2/gamma"),
            metric(&maj, "params_d2/eta")
        ),
    );

    let mut unconverged = Vec::new();
    for (label, r) in [("lyapunov-audit", &ly), ("lyapunov-audit-distorted", &lyd)] {
        let missing = metric(r, "replications") - metric(r, "converged_runs");
        if missing > 0.0 {
            unconverged.push(format!("{label}: {missing} of {}", metric(r, "replications")));
        }
    }
    for e in ["0.05", "0.02", "0.01", "0.005"] {
        let missing = metric(&bot, &format!("eps={e}/non_converged"));
        if missing > 0.0 {
            unconverged.push(format!("robust-bot eps={e}: {missing}"));
        }
    }
    for v in ["noise", "plus", "minus"] {
        let missing = metric(&dist, &format!("eps=0.005/{v}/non_converged"));
        if missing > 0.0 {
            unconverged.push(format!("robust-distortion {v}: {missing}"));
        }
    }
    ledger.line(
        13,
        "alternate convergence",
        unconverged.is_empty(),
        if unconverged.is_empty() {
            "every run converged at tolerance 1e-6".into()
        } else {
            format!(
                "unconverged at horizon: {}; tail budget max {:.3e}",
                unconverged.join(", "),
                metric(&lyd, "max_tail_budget")
            )
        },
    );

    if !ledger.failed.is_empty() {
        println!("failed criteria: {:?}", ledger.failed);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
