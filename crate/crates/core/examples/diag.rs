use npl_risk::copula::rand_pit;
use npl_risk::data::{generate_synthetic, split, DatasetConfig, SplitSpec, TrueMarginal};
use npl_risk::estimation::{empirical_moments, fit_factor_params};
use npl_risk::marginal::{
    default_tau_grid, predict_marginal, train_category, RateDistribution, TrainConfig,
};
use npl_risk::rng;

fn main() {
    let j = 3;
    let cfg = DatasetConfig::balanced(j, 6, 300, 10, vec![0.3, 0.5, 0.7], 7).unwrap();
    let (portfolios, truth) = generate_synthetic(&cfg).unwrap();
    let spec = SplitSpec {
        train_fraction: 0.5,
        holdout_dates: vec![9, 10],
    };
    let parts = split(&portfolios, &spec, 2).unwrap();

    let taus = default_tau_grid(99);
    let tc = TrainConfig {
        learning_rate: 5e-3,
        iterations: 1500,
        ..Default::default()
    };
    let mut models = Vec::new();
    for cat in 1..=j {
        let recs: Vec<_> = parts
            .train
            .iter()
            .flat_map(|p| p.loans.iter())
            .filter(|l| l.category == cat)
            .cloned()
            .collect();
        models.push(train_category(&recs, &taus, &tc).unwrap());
    }

    // Compare a few fitted marginals against truth.
    let sample_loan = &parts.train[0].loans[0];
    let tm: &TrueMarginal = &truth
        .loans
        .iter()
        .find(|t| t.loan_id == sample_loan.id)
        .unwrap()
        .marginal;
    let fitted = predict_marginal(&models[sample_loan.category - 1], &sample_loan.features).unwrap();
    println!("loan {}: true p0 {:.3} fitted p0 {:.3}", sample_loan.id, tm.p0, fitted.atom_at_zero());
    for tau in [0.5, 0.7, 0.9, 0.95] {
        println!(
            "  tau {tau}: true {:.4} fitted {:.4}",
            tm.quantile_raw(tau),
            fitted.quantile_raw(tau)
        );
    }

    for portfolio in &parts.train {
        let t = portfolio.date_index;
        let mut rng = rng::stream2(31, t, 0);
        let mut fit_scores: Vec<Vec<f64>> = vec![Vec::new(); j];
        let mut true_scores: Vec<Vec<f64>> = vec![Vec::new(); j];
        for loan in &portfolio.loans {
            let y = loan.realized_rate.unwrap();
            let u_prime = rng::uniform_open01(&mut rng);
            let fitted = predict_marginal(&models[loan.category - 1], &loan.features).unwrap();
            let uf = rand_pit(y, &fitted, u_prime);
            fit_scores[loan.category - 1].push(npl_risk::copula::gaussian_score(uf).unwrap());
            let tmarg = &truth
                .loans
                .iter()
                .find(|tr| tr.loan_id == loan.id)
                .unwrap()
                .marginal;
            let ut = rand_pit(y, tmarg, u_prime);
            true_scores[loan.category - 1].push(npl_risk::copula::gaussian_score(ut).unwrap());
        }
        let m_true = truth.factor_at(t).unwrap();
        print!("date {t} (m={m_true:+.2}): ");
        for c in 0..j {
            let n = fit_scores[c].len() as f64;
            let mf = fit_scores[c].iter().sum::<f64>() / n;
            let vf = fit_scores[c].iter().map(|v| (v - mf) * (v - mf)).sum::<f64>() / (n - 1.0);
            let mt = true_scores[c].iter().sum::<f64>() / n;
            let vt = true_scores[c].iter().map(|v| (v - mt) * (v - mt)).sum::<f64>() / (n - 1.0);
            print!("[fit m {mf:+.2} v {vf:.2} | true m {mt:+.2} v {vt:.2}] ");
        }
        let sum_fit = empirical_moments(&fit_scores, t).unwrap();
        let f1 = fit_factor_params(&sum_fit).unwrap();
        let sum_true = empirical_moments(&true_scores, t).unwrap();
        let f2 = fit_factor_params(&sum_true).unwrap();
        println!();
        println!(
            "   fit betas {:?} m {:.2} | true-marginal betas {:?} m {:.2}",
            f1.betas.iter().map(|b| (b * 100.0).round() / 100.0).collect::<Vec<_>>(),
            f1.m,
            f2.betas.iter().map(|b| (b * 100.0).round() / 100.0).collect::<Vec<_>>(),
            f2.m
        );
    }
}
