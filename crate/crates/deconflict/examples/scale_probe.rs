use deconflict::instances::{gen_cp, gen_rcp, CpConfig, RcpConfig};
use deconflict::model::{build_deterministic, build_robust, ControlSpec, UncertaintySpec};
use deconflict::solver::{solve, SolveParams};

fn main() {
    let c = ControlSpec::default_bounds(0.5).unwrap();
    let p = SolveParams { time_limit: 30.0, ..Default::default() };
    println!("--- CP deterministic ---");
    for n in 4..=10 {
        let inst = gen_cp(&CpConfig { n, ..CpConfig::default() }).unwrap();
        let ir = build_deterministic(&inst, &c).unwrap();
        let (sol, rep) = solve(&ir, &p).unwrap();
        println!(
            "CP-{n}: status={:?} ub={:.4e} gap={:.4} time={:.2}s nodes={} cuts={}",
            rep.status, rep.ub, rep.gap, rep.time_sec, rep.nodes, rep.n_cut_rounds
        );
        let _ = sol;
    }
    println!("--- CP robust eps=5% ---");
    for n in [4usize, 5, 6, 7] {
        for gamma in [1.0, 4.0] {
            let inst = gen_cp(&CpConfig { n, ..CpConfig::default() }).unwrap();
            let u = UncertaintySpec::uniform(0.05, gamma).unwrap();
            let ir = build_robust(&inst, &c, &u).unwrap();
            let (_, rep) = solve(&ir, &p).unwrap();
            println!(
                "CP-{n} g={gamma}: status={:?} ub={:.4e} time={:.2}s nodes={} cuts={}",
                rep.status, rep.ub, rep.time_sec, rep.nodes, rep.n_cut_rounds
            );
        }
    }
    println!("--- RCP-20 ---");
    for seed in 1..=3u64 {
        let inst = gen_rcp(&RcpConfig::new(20, seed)).unwrap();
        let rep0 = {
            let ir = build_deterministic(&inst, &c).unwrap();
            solve(&ir, &p).unwrap().1
        };
        println!(
            "RCP-20-{seed} det: status={:?} ub={:.3e} time={:.2}s nodes={}",
            rep0.status, rep0.ub, rep0.time_sec, rep0.nodes
        );
        for gamma in [2.0, 4.0] {
            let u = UncertaintySpec::uniform(0.05, gamma).unwrap();
            let ir = build_robust(&inst, &c, &u).unwrap();
            let (_, rep) = solve(&ir, &p).unwrap();
            println!(
                "RCP-20-{seed} g={gamma}: status={:?} ub={:.3e} time={:.2}s nodes={} cuts={}",
                rep.status, rep.ub, rep.time_sec, rep.nodes, rep.n_cut_rounds
            );
        }
    }
}
