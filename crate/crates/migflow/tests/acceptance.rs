//! End-to-end acceptance gate. Each test prints one PASS line for its
//! criterion; a failing criterion fails its test.

use migflow::analysis::{
    agglomerative_cluster, chi_square_homogeneity, chi_square_survival, PairVector,
};
use migflow::bayes::{
    build_target, count_parameters, fit_model, posterior_predict, sign_agreement,
    truncated_normal_logpdf, HyperParams, ModelSpec, SimulationTruth,
};
use migflow::classical::{ols_fit, predict_classical, unpooled_fit};
use migflow::data::{build_pair_index, FlowPanel, PairIndex};
use migflow::features::{build_design, intervening_population, DesignMatrix, FlowSource, ModelForm};
use migflow::metrics::{cpc, cpc_d, mae, r2};
use migflow::sampler::{diagnostics, nuts_sample, SamplerConfig, TargetDensity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const TRAIN_YEARS: [i32; 12] = [2005, 2006, 2007, 2008, 2009, 2010, 2011, 2012, 2013, 2014, 2015, 2016];
const TEST_YEARS: [i32; 3] = [2017, 2018, 2019];

struct Fixture {
    panel: FlowPanel,
    pair_index: PairIndex,
    train: DesignMatrix,
    test: DesignMatrix,
}

fn make_fixture(sigma_alpha: f64, seed: u64) -> Fixture {
    let mut truth = SimulationTruth::gravity_default();
    truth.sigma_alpha = sigma_alpha;
    truth.residual_sigma = 0.3;
    let years: Vec<i32> = TRAIN_YEARS.iter().chain(&TEST_YEARS).copied().collect();
    let (panel, _) = migflow::bayes::simulate_panel(&truth, 20, &years, seed).unwrap();
    let pair_index = build_pair_index(&panel.regions).unwrap();
    let distances = panel.distance_matrix().unwrap();
    let train = build_design(
        &panel,
        &pair_index,
        &distances,
        ModelForm::Gravity,
        FlowSource::Midpoint,
        Some(&TRAIN_YEARS),
    )
    .unwrap();
    let test = build_design(
        &panel,
        &pair_index,
        &distances,
        ModelForm::Gravity,
        FlowSource::Midpoint,
        Some(&TEST_YEARS),
    )
    .unwrap();
    Fixture { panel, pair_index, train, test }
}

fn sampler(seed: u64) -> SamplerConfig {
    SamplerConfig { n_warmup: 250, n_draws: 500, n_chains: 2, seed, ..SamplerConfig::default() }
}

fn holdout_r2_and_cpc(observed: &[f64], predicted: &[f64]) -> (f64, f64) {
    (r2(observed, predicted).unwrap(), cpc(observed, predicted).unwrap())
}

#[test]
fn criterion_01_hierarchy_beats_pooling() {
    let fx = make_fixture(1.0, 314);
    assert_eq!(fx.pair_index.len(), 380);
    let observed = fx.test.flows();

    let pooled = ols_fit(&fx.train).unwrap();
    let pooled_pred = predict_classical(&pooled, &fx.test).unwrap();
    let (r2_pooled, cpc_pooled) = holdout_r2_and_cpc(&observed, &pooled_pred);

    let hyper = HyperParams::from_ols(&pooled).unwrap();
    let fit =
        fit_model(&ModelSpec::hg1(), &fx.train, &hyper, &sampler(1), &fx.pair_index).unwrap();
    let hg1_pred = posterior_predict(&fit, &fx.test).unwrap();
    let (r2_hg1, cpc_hg1) = holdout_r2_and_cpc(&observed, &hg1_pred);

    assert!(
        r2_hg1 >= r2_pooled + 0.2,
        "held-out R²: hg1 {r2_hg1:.3} vs pooled {r2_pooled:.3}"
    );
    assert!(cpc_hg1 > cpc_pooled, "CPC: hg1 {cpc_hg1:.3} vs pooled {cpc_pooled:.3}");
    println!(
        "ACCEPTANCE 1: PASS — varying-intercept model beats pooled gravity out of sample \
         (R² {r2_hg1:.3} vs {r2_pooled:.3}, CPC {cpc_hg1:.3} vs {cpc_pooled:.3})"
    );
}

#[test]
fn criterion_02_pooled_limit_collapses() {
    let mut truth = SimulationTruth::gravity_default();
    truth.sigma_alpha = 0.0;
    truth.sigma_beta = vec![0.0; 3];
    truth.residual_sigma = 0.3;
    let years: Vec<i32> = TRAIN_YEARS.iter().chain(&TEST_YEARS).copied().collect();
    let (panel, _) = migflow::bayes::simulate_panel(&truth, 20, &years, 314).unwrap();
    let pair_index = build_pair_index(&panel.regions).unwrap();
    let distances = panel.distance_matrix().unwrap();
    let train = build_design(
        &panel, &pair_index, &distances, ModelForm::Gravity, FlowSource::Midpoint,
        Some(&TRAIN_YEARS),
    )
    .unwrap();
    let test = build_design(
        &panel, &pair_index, &distances, ModelForm::Gravity, FlowSource::Midpoint,
        Some(&TEST_YEARS),
    )
    .unwrap();
    let observed = test.flows();

    let pooled = ols_fit(&train).unwrap();
    let r2_pooled = r2(&observed, &predict_classical(&pooled, &test).unwrap()).unwrap();

    let hyper = HyperParams::from_ols(&pooled).unwrap();
    let fit = fit_model(&ModelSpec::hg1(), &train, &hyper, &sampler(2), &pair_index).unwrap();
    let r2_hg1 = r2(&observed, &posterior_predict(&fit, &test).unwrap()).unwrap();

    assert!(
        (r2_hg1 - r2_pooled).abs() <= 0.05,
        "homogeneous pairs: hg1 R² {r2_hg1:.3} vs pooled {r2_pooled:.3}"
    );
    println!(
        "ACCEPTANCE 2: PASS — with homogeneous pairs partial pooling collapses to the pooled \
         fit (R² {r2_hg1:.3} vs {r2_pooled:.3})"
    );
}

#[test]
fn criterion_03_sign_agreement() {
    let fx = make_fixture(1.0, 314);

    let pooled = ols_fit(&fx.train).unwrap();
    let hyper = HyperParams::from_ols(&pooled).unwrap();
    let fit =
        fit_model(&ModelSpec::hg2(), &fx.train, &hyper, &sampler(3), &fx.pair_index).unwrap();
    let bayes_pct = sign_agreement(&fit.coefficient_intervals(), ModelForm::Gravity).unwrap();
    for (name, pct) in &bayes_pct {
        assert!(*pct >= 90.0, "hierarchical {name} sign agreement {pct:.1}% < 90%");
    }

    let unpooled = unpooled_fit(&fx.train, &fx.pair_index, 0.90).unwrap();
    let names: Vec<String> = fx.train.feature_names.clone();
    let unpooled_pct =
        sign_agreement(&unpooled.to_coefficient_intervals(&names), ModelForm::Gravity).unwrap();
    let worst = unpooled_pct
        .iter()
        .map(|(_, pct)| *pct)
        .fold(f64::INFINITY, f64::min);
    assert!(
        worst <= 80.0,
        "expected per-pair OLS to lose the signs on some coefficient: {unpooled_pct:?}"
    );
    println!(
        "ACCEPTANCE 3: PASS — hierarchical interval signs all ≥ 90% agreement \
         ({:?}) while per-pair OLS drops to {worst:.0}% on its worst coefficient",
        bayes_pct.iter().map(|(n, p)| format!("{n} {p:.0}%")).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_04_parameter_counts() {
    assert_eq!(count_parameters(&ModelSpec::hg1(), 51), 2553);
    assert_eq!(count_parameters(&ModelSpec::hr1(), 51), 2554);
    assert_eq!(count_parameters(&ModelSpec::hr2(), 51), 12750);
    assert_eq!(count_parameters(&ModelSpec::hg2(), 51), 7651);
    println!(
        "ACCEPTANCE 4: PASS — parameter counts 2553/2554/12750 at N=51; the all-parameters \
         gravity variant keeps its distance coefficient shared, giving 7651 (see README note)"
    );
}

struct StdNormalTarget {
    dim: usize,
}

impl TargetDensity for StdNormalTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for (g, xi) in grad.iter_mut().zip(x) {
            *g = -xi;
            lp -= 0.5 * xi * xi;
        }
        lp
    }
}

/// Neal's funnel, centered: v ~ N(0,3), x_i | v ~ N(0, exp(v/2)).
struct CenteredFunnel {
    dim: usize,
}

impl TargetDensity for CenteredFunnel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let v = x[0];
        let sigma2 = (v / 2.0).exp(); // variance of each x_i
        let n = (self.dim - 1) as f64;
        let mut sum_sq = 0.0;
        for i in 1..self.dim {
            sum_sq += x[i] * x[i];
            grad[i] = -x[i] / sigma2;
        }
        let lp = -0.5 * v * v / 9.0 - 0.5 * n * (v / 2.0) - 0.5 * sum_sq / sigma2;
        grad[0] = -v / 9.0 - 0.25 * n + 0.25 * sum_sq / sigma2;
        lp
    }
}

/// The same funnel non-centered: v ~ N(0,3), z_i ~ N(0,1) independent.
struct NonCenteredFunnel {
    dim: usize,
}

impl TargetDensity for NonCenteredFunnel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let v = x[0];
        let mut lp = -0.5 * v * v / 9.0;
        grad[0] = -v / 9.0;
        for i in 1..self.dim {
            lp -= 0.5 * x[i] * x[i];
            grad[i] = -x[i];
        }
        lp
    }
}

#[test]
fn criterion_05_sampler_correctness() {
    let target = StdNormalTarget { dim: 10 };
    let config = SamplerConfig {
        n_warmup: 250,
        n_draws: 1000,
        n_chains: 4,
        seed: 7,
        ..SamplerConfig::default()
    };
    let output = nuts_sample(&target, &config, &vec![0.0; 10]).unwrap();
    let n = output.n_total_draws() as f64;
    for dim in 0..10 {
        let mean: f64 = output.flat_draws().map(|d| d[dim]).sum::<f64>() / n;
        let var: f64 = output.flat_draws().map(|d| (d[dim] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() <= 0.15, "dim {dim} mean {mean:.3}");
        assert!((0.7..=1.3).contains(&var), "dim {dim} variance {var:.3}");
    }
    let report = diagnostics(&output).unwrap();
    assert!(report.max_rhat() <= 1.05, "max split R-hat {:.4}", report.max_rhat());
    assert_eq!(output.sampling_divergence_fraction(), 0.0, "divergences on a normal target");

    // Funnel: the centered parameterization must diverge strictly more.
    let funnel_config = SamplerConfig {
        n_warmup: 250,
        n_draws: 500,
        n_chains: 2,
        seed: 11,
        ..SamplerConfig::default()
    };
    let centered =
        nuts_sample(&CenteredFunnel { dim: 10 }, &funnel_config, &vec![0.0; 10]).unwrap();
    let non_centered =
        nuts_sample(&NonCenteredFunnel { dim: 10 }, &funnel_config, &vec![0.0; 10]).unwrap();
    let c = centered.sampling_divergence_fraction();
    let nc = non_centered.sampling_divergence_fraction();
    assert!(c > nc, "centered funnel divergence {c:.4} not above non-centered {nc:.4}");
    println!(
        "ACCEPTANCE 5: PASS — 10-dim normal moments and split R-hat within bounds, zero \
         divergences; funnel diverges more when centered ({:.1}% vs {:.1}%)",
        100.0 * c,
        100.0 * nc
    );
}

#[test]
fn criterion_06_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for _ in 0..100 {
        let n = rng.gen_range(2..40);
        let obs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..500.0)).collect();
        let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..500.0)).collect();
        let dist: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..4000.0)).collect();

        let mae_oracle = obs
            .iter()
            .zip(&pred)
            .map(|(o, p)| (o - p).abs())
            .sum::<f64>()
            / n as f64;
        assert!((mae(&obs, &pred).unwrap() - mae_oracle).abs() < 1e-12);

        let mean = obs.iter().sum::<f64>() / n as f64;
        let ss_res: f64 = obs.iter().zip(&pred).map(|(o, p)| (o - p).powi(2)).sum();
        let ss_tot: f64 = obs.iter().map(|o| (o - mean).powi(2)).sum();
        assert!((r2(&obs, &pred).unwrap() - (1.0 - ss_res / ss_tot)).abs() < 1e-12);

        let min_sum: f64 = obs.iter().zip(&pred).map(|(o, p)| o.min(*p)).sum();
        let cpc_oracle = 2.0 * min_sum / (obs.iter().sum::<f64>() + pred.iter().sum::<f64>());
        assert!((cpc(&obs, &pred).unwrap() - cpc_oracle).abs() < 1e-12);

        // CPC_D oracle: accumulate into 2 km histogram bins directly.
        let bin_of = |d: f64| (d / 2.0).floor() as usize;
        let max_bin = dist.iter().map(|&d| bin_of(d)).max().unwrap();
        let mut h_obs = vec![0.0; max_bin + 1];
        let mut h_pred = vec![0.0; max_bin + 1];
        for i in 0..n {
            h_obs[bin_of(dist[i])] += obs[i];
            h_pred[bin_of(dist[i])] += pred[i];
        }
        let min_sum: f64 = h_obs.iter().zip(&h_pred).map(|(o, p)| o.min(*p)).sum();
        let oracle = 2.0 * min_sum / (h_obs.iter().sum::<f64>() + h_pred.iter().sum::<f64>());
        let got = cpc_d(&obs, &dist, &pred, &dist).unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }

    assert_eq!(cpc(&[2.0, 2.0], &[1.0, 3.0]).unwrap(), 0.75);
    // Half-open bins: exactly 2.0 km belongs to the second bin, so these two
    // entries never overlap.
    let boundary = cpc_d(&[10.0], &[2.0], &[10.0], &[1.999_999]).unwrap();
    assert_eq!(boundary, 0.0);
    println!(
        "ACCEPTANCE 6: PASS — CPC/CPC_D/MAE/R² match brute-force recomputation on 100 random \
         instances; cpc([2,2],[1,3]) = 0.75; 2 km bin boundary is half-open"
    );
}

#[test]
fn criterion_07_intervening_population_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for trial in 0..1000 {
        let n = rng.gen_range(3..=8);
        let mut truth = SimulationTruth::gravity_default();
        truth.sigma_alpha = 0.5;
        let (panel, _) = migflow::bayes::simulate_panel(&truth, n, &[2000], rng.gen()).unwrap();
        let distances = panel.distance_matrix().unwrap();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                // Definitional oracle: enumerate the strictly-closer set and
                // sum its populations. Float sums are order-sensitive, so
                // keep index order for the exactness claim, and verify the
                // selected set against a distance-sorted sweep as well.
                let selected: Vec<usize> = (0..n)
                    .filter(|&k| k != i && k != j && distances[i][k] < distances[i][j])
                    .collect();
                let expected: f64 = selected
                    .iter()
                    .map(|&k| panel.population(k, 2000).unwrap())
                    .sum();
                let mut others: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
                others.sort_by(|&a, &b| distances[i][a].partial_cmp(&distances[i][b]).unwrap());
                let mut swept: Vec<usize> = others
                    .into_iter()
                    .take_while(|&k| distances[i][k] < distances[i][j])
                    .collect();
                swept.sort_unstable();
                assert_eq!(swept, selected, "trial {trial}, pair ({i},{j})");
                let got = intervening_population(i, j, 2000, &panel, &distances).unwrap();
                assert_eq!(got, expected, "trial {trial}, pair ({i},{j})");
            }
        }
    }
    println!(
        "ACCEPTANCE 7: PASS — intervening population matches the sorted-enumeration oracle \
         exactly on 1000 random geometries with N ≤ 8"
    );
}

#[test]
fn criterion_08_truncated_normal_density() {
    for &mu in &[-2.0, 0.0, 3.0] {
        for &sigma in &[0.5, 1.0, 5.0] {
            let hi = mu + 12.0 * sigma;
            let n = 400_000;
            let h = hi / n as f64;
            let f = |x: f64| truncated_normal_logpdf(x, mu, sigma).unwrap().exp();
            let mut total = 0.5 * (f(0.0) + f(hi));
            for i in 1..n {
                total += f(i as f64 * h);
            }
            total *= h;
            assert!((total - 1.0).abs() < 1e-6, "mu={mu} sigma={sigma}: integral {total}");
        }
    }
    let at_zero = truncated_normal_logpdf(0.0, 0.0, 1.0).unwrap();
    assert!((at_zero - (-0.22579)).abs() < 1e-5, "logpdf(0;0,1) = {at_zero}");
    println!(
        "ACCEPTANCE 8: PASS — truncated-normal density integrates to 1 within 1e-6 over a \
         3x3 (mu, sigma) grid; logpdf(0;0,1) = {at_zero:.5}"
    );
}

fn rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let mut agree = 0usize;
    let mut total = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

#[test]
fn criterion_09_clustering_and_homogeneity() {
    // Two planted parameter directions with small angular noise.
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut vectors = Vec::new();
    let mut truth_labels = Vec::new();
    for pair_id in 0..80 {
        let group = pair_id % 2;
        let base: [f64; 3] = if group == 0 { [2.0, 1.0, -1.0] } else { [-1.0, 2.0, 1.5] };
        let values: Vec<f64> = base
            .iter()
            .map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        vectors.push(PairVector { pair_id, values });
        truth_labels.push(group);
    }
    let clustering = agglomerative_cluster(&vectors, 2).unwrap();
    let ri = rand_index(&clustering.assignment, &truth_labels);
    assert!(ri >= 0.95, "Rand index {ri:.3}");

    let sample: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let identical = chi_square_homogeneity(&sample, &sample, 8).unwrap();
    assert_eq!(identical.p_value, 1.0, "identical samples must give p = 1");

    let shifted: Vec<f64> = sample.iter().map(|x| x + 2.0).collect();
    let test = chi_square_homogeneity(&sample, &shifted, 8).unwrap();
    assert!(test.p_value < 0.01, "2-sd shift p = {}", test.p_value);

    let s = chi_square_survival(3.841, 1.0);
    assert!((s - 0.05).abs() < 1e-3, "survival(3.841, 1) = {s}");
    println!(
        "ACCEPTANCE 9: PASS — planted directions recovered (Rand {ri:.3}); homogeneity test \
         p = 1 on identical samples, p = {:.2e} after a 2-sd shift; survival(3.841, 1) = {s:.4}",
        test.p_value
    );
}

#[test]
fn criterion_10_gradient_check() {
    let specs = [ModelSpec::hg1(), ModelSpec::hg2(), ModelSpec::hr1(), ModelSpec::hr2()];
    for spec in specs {
        let mut truth = SimulationTruth::gravity_default();
        truth.family = spec.family;
        if spec.family == ModelForm::Radiation {
            truth.beta = vec![1.0, 1.0, -1.0, -1.0];
        }
        truth.sigma_alpha = 0.6;
        truth.sigma_beta = vec![0.1; spec.family.n_features()];
        let (panel, _) = migflow::bayes::simulate_panel(&truth, 5, &[2000, 2001], 1010).unwrap();
        let pair_index = build_pair_index(&panel.regions).unwrap();
        let distances = panel.distance_matrix().unwrap();
        let design = build_design(
            &panel, &pair_index, &distances, spec.family, FlowSource::Midpoint, None,
        )
        .unwrap();
        let hyper = HyperParams::from_ols(&ols_fit(&design).unwrap()).unwrap();
        let target = build_target(&spec, &design, &hyper, &pair_index).unwrap();
        let dim = target.dim();

        let mut rng = ChaCha8Rng::seed_from_u64(1010 + spec.family.n_features() as u64);
        let mut grad = vec![0.0; dim];
        let mut scratch = vec![0.0; dim];
        for point in 0..20 {
            let x: Vec<f64> =
                (0..dim).map(|_| 0.4 * rng.sample::<f64, _>(StandardNormal)).collect();
            let lp = target.log_density_gradient(&x, &mut grad);
            assert!(lp.is_finite());
            let h = 1e-4;
            for i in 0..dim {
                let mut xp = x.clone();
                xp[i] += h;
                let fp = target.log_density_gradient(&xp, &mut scratch);
                xp[i] -= 2.0 * h;
                let fm = target.log_density_gradient(&xp, &mut scratch);
                let fd = (fp - fm) / (2.0 * h);
                let denom = grad[i].abs().max(fd.abs()).max(1.0);
                assert!(
                    (grad[i] - fd).abs() / denom <= 1e-5,
                    "{} point {point} coord {i}: analytic {} vs fd {fd}",
                    spec.name(),
                    grad[i]
                );
            }
        }
    }
    println!(
        "ACCEPTANCE 10: PASS — analytic gradients of all four hierarchical targets match \
         central differences within 1e-5 relative at 20 random points each"
    );
}

/// Point `MIGFLOW_REAL_DATA_DIR` at a directory holding the four-CSV schema
/// (regions/flows/populations/covariates) to run the qualitative real-data
/// ordering check; without it the criterion is reported as skipped.
#[test]
fn criterion_11_real_data_ordering() {
    let dir = match std::env::var_os("MIGFLOW_REAL_DATA_DIR") {
        Some(d) => std::path::PathBuf::from(d),
        None => {
            println!(
                "ACCEPTANCE 11: SKIP — optional real-data check; set MIGFLOW_REAL_DATA_DIR \
                 to a directory of regions/flows/populations/covariates CSVs to enable"
            );
            return;
        }
    };
    let panel = migflow::data::load_panel(
        &dir.join("flows.csv"),
        &dir.join("populations.csv"),
        &dir.join("regions.csv"),
        &dir.join("covariates.csv"),
    )
    .unwrap();
    let pair_index = build_pair_index(&panel.regions).unwrap();
    let distances = panel.distance_matrix().unwrap();
    let years = panel.years();
    let (train_years, test_years): (Vec<i32>, Vec<i32>) =
        years.iter().partition(|&&y| y <= 2016);
    let r2_of = |form: ModelForm, bayes: bool| -> f64 {
        let train = build_design(
            &panel, &pair_index, &distances, form, FlowSource::Midpoint, Some(&train_years),
        )
        .unwrap();
        let test = build_design(
            &panel, &pair_index, &distances, form, FlowSource::Midpoint, Some(&test_years),
        )
        .unwrap();
        let pooled = ols_fit(&train).unwrap();
        let predicted = if bayes {
            let hyper = HyperParams::from_ols(&pooled).unwrap();
            let fit =
                fit_model(&ModelSpec::hg1(), &train, &hyper, &sampler(11), &pair_index).unwrap();
            posterior_predict(&fit, &test).unwrap()
        } else {
            predict_classical(&pooled, &test).unwrap()
        };
        r2(&test.flows(), &predicted).unwrap()
    };
    let r2_gravity = r2_of(ModelForm::Gravity, false);
    let r2_radiation = r2_of(ModelForm::Radiation, false);
    let r2_hg1 = r2_of(ModelForm::Gravity, true);
    assert!(
        r2_hg1 > r2_radiation && r2_radiation > r2_gravity,
        "expected R²(hg1) > R²(radiation) > R²(gravity), got {r2_hg1:.3} / {r2_radiation:.3} / {r2_gravity:.3}"
    );
    println!(
        "ACCEPTANCE 11: PASS — real-data ordering R²(hg1) {r2_hg1:.3} > R²(radiation) \
         {r2_radiation:.3} > R²(gravity) {r2_gravity:.3}"
    );
}
