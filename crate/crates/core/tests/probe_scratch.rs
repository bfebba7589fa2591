use odecol::problems::*;

#[test]
fn probe_qvm_desk() {
    let t0 = std::time::Instant::now();
    let data = generate_qvm_data(&QvmDataConfig::default()).unwrap();
    println!("data generated in {:.1}s", t0.elapsed().as_secs_f64());
    for strat in [Strategy::I, Strategy::II] {
        let cfg = QvmTrainConfig { strategy: strat, ..Default::default() };
        let t1 = std::time::Instant::now();
        let run = train_qvm(&cfg, &data).unwrap();
        let wall = t1.elapsed().as_secs_f64();
        for ph in &run.phases {
            println!(
                "[{}] phase '{}': {:?} iters {} obj {:.6e} wall {:.1}s cb {:.1}s nvar {}",
                strat, ph.label, ph.status, ph.iterations, ph.objective, ph.wall_s, ph.callback_s, ph.n_var
            );
        }
        let tail: Vec<_> = run.solution.log.iter().rev().take(4).collect();
        for row in tail.into_iter().rev() {
            println!(
                "  it {} obj {:.6e} pr {:.2e} du {:.2e} mu {:.1e} a_pr {:.2e} a_du {:.2e} dw {:.1e}",
                row.iter, row.objective, row.inf_pr, row.inf_du, row.mu, row.alpha_pr, row.alpha_du, row.delta_w
            );
        }
        let p = run.params().to_vec();
        for pick in [SurrogatePick::Friction, SurrogatePick::Spring] {
            let fit = qvm_surrogate_fit(run.model(), &p, &data, pick).unwrap();
            println!(
                "[{}] {:?}: rel rms {:.4} range {:.1} at_zero {:.3e} interval [{:.4}, {:.4}]",
                strat, pick, fit.relative_rms(), fit.range, fit.at_zero, fit.input_lo, fit.input_hi
            );
        }
        println!("[{}] total wall {:.1}s", strat, wall);
    }
    println!("total probe {:.1}s", t0.elapsed().as_secs_f64());
}
