use dpsk_keyrate::channel::{click_statistics, ChannelModel};
use dpsk_keyrate::conic::solve_kappa;
use dpsk_keyrate::engine::{expected_key_length, optimize_alpha, EngineConfig, RateEvaluator, RateStatus};
use dpsk_keyrate::params::ProtocolParams;
use dpsk_keyrate::renyi::TradeoffFunction;

fn fig3(n: f64) -> ProtocolParams {
    ProtocolParams {
        chi_db: 10.0,
        n,
        ..ProtocolParams::default()
    }
}

#[test]
fn zero_tradeoff_never_beats_the_optimized_rate() {
    let p = fig3(1e8);
    let (_, best) = optimize_alpha(&p);
    assert_eq!(best.status, RateStatus::Certified);
    let stats = click_statistics(&p, &ChannelModel::from_params(&p).unwrap()).unwrap();
    for alpha in [1.001, 1.05, 1.5, 1.9] {
        let params = ProtocolParams { alpha, ..p.clone() };
        let zero = TradeoffFunction::zero();
        let k = solve_kappa(&zero, alpha, &params).unwrap();
        let r = expected_key_length(&params, &zero, k.kappa, &stats).unwrap();
        assert!(r.expected_length <= best.expected_length, "alpha {alpha}: {} > {}", r.expected_length, best.expected_length);
    }
}

#[test]
fn alpha_profile_has_one_interior_maximum() {
    let p = fig3(1e7);
    let config = EngineConfig::default();
    let mut ev = RateEvaluator::new(&p, &config);
    let margins: Vec<f64> = (0..15)
        .rev()
        .map(|i| {
            let excess = 1e-5 * (0.5f64 / 1e-5).powf(i as f64 / 14.0);
            ev.evaluate(1.0 + excess).margin_per_pulse(p.n)
        })
        .rev()
        .collect();
    let peak = margins
        .iter()
        .enumerate()
        .fold(0, |b, (i, &m)| if m > margins[b] { i } else { b });
    assert!(peak > 0 && peak < margins.len() - 1, "{margins:?}");
    assert!(margins[..=peak].windows(2).all(|w| w[1] > w[0]), "{margins:?}");
    assert!(margins[peak..].windows(2).all(|w| w[1] < w[0]), "{margins:?}");
}

#[test]
fn rate_grows_with_block_size() {
    let rates: Vec<f64> = [1e5, 1e6, 1e7, 1e8]
        .iter()
        .map(|&n| optimize_alpha(&fig3(n)).1.rate_per_pulse)
        .collect();
    assert!(rates.windows(2).all(|w| w[1] >= w[0]), "{rates:?}");
    assert!(rates[3] > 0.0);
}

#[test]
fn failures_report_zero_rate() {
    let bad = ProtocolParams {
        beta: -1.0,
        ..ProtocolParams::default()
    };
    let r = RateEvaluator::new(&bad, &EngineConfig::default()).evaluate(1.1);
    assert!(matches!(r.status, RateStatus::Failed(_)));
    assert_eq!(r.rate_per_pulse, 0.0);
}
