use swiptbeam::netmodel::{default_scenario, generate_instance};
use swiptbeam::sca::{self, AlgorithmId, ScaSettings};

fn main() {
    let (net, pw) = default_scenario().to_configs().unwrap();
    let settings = ScaSettings::default();
    let t0 = std::time::Instant::now();
    for alg in [AlgorithmId::PsEe, AlgorithmId::TsEe, AlgorithmId::PsMaxmin, AlgorithmId::TsMaxmin] {
        let mut inf = 0;
        for seed in 0..20u64 {
            let inst = generate_instance(&net, &pw, seed).unwrap();
            let r = sca::run(&inst, alg, &settings, 10_000 + seed).unwrap();
            if !r.is_feasible() { inf += 1; println!("{} seed={} INFEASIBLE: {:?}", alg.as_str(), seed, r.outcome); }
        }
        println!("{}: {} infeasible", alg.as_str(), inf);
    }
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
}
