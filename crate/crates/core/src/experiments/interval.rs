use serde::{Deserialize, Serialize};

use super::{cell_seed, check_nonneg, DataSource, ExperimentConfig, Report, Table};
use crate::data::Dataset;
use crate::distprop::{MarginalGaussian, Propagate};
use crate::error::{Error, Result};
use crate::metrics::{picp_mpiw, IntervalScore};
use crate::network::{init_params, Activation, MlpSpec, Network, PnnNetwork};
use crate::numerics::SeededRng;
use crate::train::{train, LossSpec, Model, OptimizerConfig};

/// Source of the predictive spread.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    /// Plain network; all variance comes from propagating input noise.
    Sdp,
    /// Mean and log-variance heads, no input noise.
    Pnn,
    /// PNN variance plus the propagated input noise of the mean path.
    SdpPnn,
}

impl IntervalMethod {
    pub fn name(&self) -> &'static str {
        match self {
            IntervalMethod::Sdp => "sdp",
            IntervalMethod::Pnn => "pnn",
            IntervalMethod::SdpPnn => "sdp_pnn",
        }
    }

    fn uses_input_noise(&self) -> bool {
        !matches!(self, IntervalMethod::Pnn)
    }
}

/// Prediction-interval calibration over a grid of training settings, with
/// model selection by validation coverage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntervalConfig {
    pub seed: u64,
    pub data: DataSource,
    pub split: [f64; 3],
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rates: Vec<f64>,
    pub weight_decays: Vec<f64>,
    /// Input variances σ² tried by the noise-propagating methods.
    pub input_variances: Vec<f64>,
    pub n_seeds: usize,
    pub methods: Vec<IntervalMethod>,
    /// Models whose validation PICP falls inside this window are eligible.
    pub picp_window: [f64; 2],
    pub level: f64,
    /// Second pass over 11 variances spaced by `10^0.1` around the first
    /// pass's selected variance.
    pub refine: bool,
}

impl Default for IntervalConfig {
    fn default() -> Self {
        IntervalConfig {
            seed: 0,
            data: DataSource::HeteroscedasticSine { n: 1000 },
            split: [0.6, 0.2, 0.2],
            hidden: vec![64],
            activation: Activation::Relu,
            epochs: 5000,
            batch_size: 64,
            learning_rates: vec![1e-2, 1e-3, 1e-4],
            weight_decays: vec![0.0, 1e-3, 1e-2, 1e-1, 1.0],
            input_variances: (-8..=0).map(|e| 10f64.powi(e)).collect(),
            n_seeds: 20,
            methods: vec![IntervalMethod::Sdp, IntervalMethod::Pnn, IntervalMethod::SdpPnn],
            picp_window: [0.925, 0.975],
            level: 0.95,
            refine: false,
        }
    }
}

impl ExperimentConfig for IntervalConfig {
    const NAME: &'static str = "interval";

    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn smoke(&mut self) {
        if let DataSource::HeteroscedasticSine { n } = &mut self.data {
            *n = (*n).min(300);
        }
        self.epochs = self.epochs.min(100);
        self.learning_rates = vec![1e-2];
        self.weight_decays = vec![0.0];
        self.input_variances = vec![1e-3, 1e-2];
        self.n_seeds = 1;
        self.refine = false;
    }

    fn validate(&self) -> Result<()> {
        check_nonneg("input_variances", &self.input_variances)?;
        check_nonneg("weight_decays", &self.weight_decays)?;
        if self.learning_rates.iter().any(|&lr| !(lr > 0.0)) || self.batch_size == 0 || self.n_seeds == 0 {
            return Err(Error::Config("learning rates, batch_size and n_seeds must be positive".into()));
        }
        if !(0.0 < self.level && self.level < 1.0) || self.picp_window[0] > self.picp_window[1] {
            return Err(Error::Config("level must be in (0, 1) and the PICP window ordered".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Trained {
    Net(Network),
    Pnn(PnnNetwork),
}

/// Per-sample predictive mean and standard deviation.
fn predict(model: &Trained, input_var: f64, data: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
    let sd = input_var.sqrt();
    let mut mu = Vec::with_capacity(data.len());
    let mut sigma = Vec::with_capacity(data.len());
    match model {
        Trained::Net(net) => {
            for x in data.x.rows_iter() {
                let out = MarginalGaussian::isotropic(x.to_vec(), sd)?.push_network(net)?;
                mu.push(out.loc()[0]);
                sigma.push(out.scale()[0]);
            }
        }
        Trained::Pnn(pnn) => {
            let mean_net = pnn.mean_network();
            for x in data.x.rows_iter() {
                let (m, v) = pnn.predict(x)?;
                let prop = MarginalGaussian::isotropic(x.to_vec(), sd)?.push_network(&mean_net)?;
                mu.push(m[0]);
                sigma.push((v[0] + prop.variances()[0]).sqrt());
            }
        }
    }
    Ok((mu, sigma))
}

/// One grid point of one method.
#[derive(Clone, Debug)]
struct Candidate {
    pass: usize,
    lr: f64,
    weight_decay: f64,
    input_variance: f64,
    seed: usize,
    outcome: std::result::Result<Scores, String>,
}

#[derive(Clone, Debug)]
struct Scores {
    val: IntervalScore,
    test: IntervalScore,
    test_mu: Vec<f64>,
}

struct Setup<'a> {
    cfg: &'a IntervalConfig,
    train: &'a Dataset,
    val: &'a Dataset,
    test: &'a Dataset,
}

const STREAM_SPLIT: u64 = 30;
const STREAM_MODEL: u64 = 31;

impl Setup<'_> {
    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.train.n_features()];
        w.extend(&self.cfg.hidden);
        w.push(1);
        w
    }

    fn fit(&self, method: IntervalMethod, lr: f64, wd: f64, var: f64, seed: u64) -> Result<Scores> {
        let cfg = self.cfg;
        let mut rng = SeededRng::new(seed);
        let sd = var.sqrt();
        let (mut model, loss) = match method {
            IntervalMethod::Sdp => (
                Model::Net(init_params(&MlpSpec::new(&self.widths(), cfg.activation), &mut rng)?),
                LossSpec::SdpGaussianNll { input_std: sd },
            ),
            IntervalMethod::Pnn | IntervalMethod::SdpPnn => (
                Model::Pnn(PnnNetwork::init(&self.widths(), cfg.activation, &mut rng)?),
                LossSpec::PnnGaussianNll { input_std: sd },
            ),
        };
        let opt = OptimizerConfig::new(lr, cfg.epochs, cfg.batch_size).with_weight_decay(wd);
        train(&mut model, self.train, None, &loss, &opt, &mut rng)?;
        let trained = match model {
            Model::Net(n) => Trained::Net(n),
            Model::Pnn(p) => Trained::Pnn(p),
        };
        let score = |d: &Dataset| -> Result<(IntervalScore, Vec<f64>)> {
            let (mu, sigma) = predict(&trained, var, d)?;
            let targets = d.real_targets().ok_or(Error::Config("interval experiment needs real targets".into()))?;
            // Targets are min-max scaled by the training range, so that range is 1.
            Ok((picp_mpiw(&mu, &sigma, targets, cfg.level, 1.0)?, mu))
        };
        let (val, _) = score(self.val)?;
        let (test, test_mu) = score(self.test)?;
        Ok(Scores { val, test, test_mu })
    }

    fn sweep(&self, m: usize, method: IntervalMethod, pass: usize, variances: &[f64]) -> Vec<Candidate> {
        let cfg = self.cfg;
        let mut out = Vec::new();
        for (a, &lr) in cfg.learning_rates.iter().enumerate() {
            for (b, &wd) in cfg.weight_decays.iter().enumerate() {
                for (c, &var) in variances.iter().enumerate() {
                    for s in 0..cfg.n_seeds {
                        let path = [STREAM_MODEL, m as u64, pass as u64, a as u64, b as u64, c as u64, s as u64];
                        let outcome = self.fit(method, lr, wd, var, cell_seed(cfg.seed, &path)).map_err(|e| e.to_string());
                        out.push(Candidate {
                            pass,
                            lr,
                            weight_decay: wd,
                            input_variance: var,
                            seed: s,
                            outcome,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Index of the eligible candidate with the smallest validation MPIW; the
/// first one in grid order wins ties.
fn select(cands: &[Candidate], window: [f64; 2]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cands.iter().enumerate() {
        if let Ok(s) = &c.outcome {
            let ok = s.val.picp >= window[0] && s.val.picp <= window[1];
            if ok && best.map_or(true, |(_, w)| s.val.mpiw < w) {
                best = Some((i, s.val.mpiw));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Narrowest constant-width interval around `mu` whose coverage of
/// `targets` reaches `picp`. Returns `(PICP, MPIW)` for range 1.
pub fn fixed_width_baseline(mu: &[f64], targets: &[f64], picp: f64) -> (f64, f64) {
    let mut r: Vec<f64> = mu.iter().zip(targets).map(|(m, y)| (y - m).abs()).collect();
    r.sort_by(f64::total_cmp);
    let n = r.len();
    let k = ((picp * n as f64).ceil() as usize).clamp(1, n);
    let w = r[k - 1];
    let covered = r.iter().filter(|&&v| v <= w).count();
    (covered as f64 / n as f64, 2.0 * w)
}

/// Trains every configured grid point per method and selects one model per
/// method. Tables: `candidates` (every grid point) and `selected` (one row
/// per dataset and method, with a constant-width baseline of equal test
/// coverage around the selected model's means).
pub fn run_interval_experiment(cfg: &IntervalConfig) -> Result<Report> {
    cfg.validate()?;
    let splits = cfg.data.splits(cfg.split, cell_seed(cfg.seed, &[STREAM_SPLIT]))?;
    if splits.val.is_empty() || splits.test.is_empty() {
        return Err(Error::Config("validation and test parts must be non-empty".into()));
    }
    let setup = Setup {
        cfg,
        train: &splits.train,
        val: &splits.val,
        test: &splits.test,
    };
    let dataset = cfg.data.name();
    let mut cand_table = Table::new(&[
        "method", "pass", "lr", "weight_decay", "input_variance", "seed", "status", "val_picp", "val_mpiw", "test_picp",
        "test_mpiw",
    ]);
    let mut sel_table = Table::new(&[
        "dataset", "method", "n_candidates", "n_in_window", "selected", "lr", "weight_decay", "input_variance", "seed",
        "val_picp", "val_mpiw", "test_picp", "test_mpiw", "fixed_width_picp", "fixed_width_mpiw",
    ]);
    let targets = splits.test.real_targets().ok_or(Error::Config("interval experiment needs real targets".into()))?;
    for (m, &method) in cfg.methods.iter().enumerate() {
        let variances = if method.uses_input_noise() { cfg.input_variances.clone() } else { vec![0.0] };
        let mut cands = setup.sweep(m, method, 1, &variances);
        if cfg.refine && method.uses_input_noise() {
            if let Some(i) = select(&cands, cfg.picp_window) {
                let centre = cands[i].input_variance;
                if centre > 0.0 {
                    let fine: Vec<f64> = (-5..=5).map(|k| centre * 10f64.powf(0.1 * k as f64)).collect();
                    cands.extend(setup.sweep(m, method, 2, &fine));
                }
            }
        }
        for c in &cands {
            let (status, v) = match &c.outcome {
                Ok(s) => ("ok".to_string(), [s.val.picp, s.val.mpiw, s.test.picp, s.test.mpiw]),
                Err(e) => (format!("failed: {e}"), [f64::NAN; 4]),
            };
            cand_table.push(vec![
                method.name().into(),
                c.pass.into(),
                c.lr.into(),
                c.weight_decay.into(),
                c.input_variance.into(),
                c.seed.into(),
                status.into(),
                v[0].into(),
                v[1].into(),
                v[2].into(),
                v[3].into(),
            ]);
        }
        let in_window = cands
            .iter()
            .filter(|c| matches!(&c.outcome, Ok(s) if s.val.picp >= cfg.picp_window[0] && s.val.picp <= cfg.picp_window[1]))
            .count();
        let mut row: Vec<super::Cell> =
            vec![dataset.as_str().into(), method.name().into(), cands.len().into(), in_window.into()];
        match select(&cands, cfg.picp_window) {
            Some(i) => {
                let c = &cands[i];
                let s = c.outcome.as_ref().expect("selected candidates trained");
                let (bp, bw) = fixed_width_baseline(&s.test_mu, targets, s.test.picp);
                row.extend([
                    true.into(),
                    c.lr.into(),
                    c.weight_decay.into(),
                    c.input_variance.into(),
                    c.seed.into(),
                    s.val.picp.into(),
                    s.val.mpiw.into(),
                    s.test.picp.into(),
                    s.test.mpiw.into(),
                    bp.into(),
                    bw.into(),
                ]);
            }
            None => {
                row.push(false.into());
                row.extend(std::iter::repeat_n(super::Cell::Num(f64::NAN), 10));
            }
        }
        sel_table.push(row);
    }
    let mut report = Report::new(IntervalConfig::NAME, cfg)?;
    report.tables.insert("candidates".into(), cand_table);
    report.tables.insert("selected".into(), sel_table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_width_baseline_hits_requested_coverage() {
        let mu = vec![0.0; 4];
        let y = vec![0.1, -0.2, 0.3, -0.4];
        assert_eq!(fixed_width_baseline(&mu, &y, 0.5), (0.5, 0.4));
        assert_eq!(fixed_width_baseline(&mu, &y, 1.0), (1.0, 0.8));
        assert_eq!(fixed_width_baseline(&mu, &y, 0.0).0, 0.25);
    }

    #[test]
    fn zero_noise_plain_network_never_qualifies() {
        let mut cfg = IntervalConfig::default();
        cfg.smoke();
        cfg.methods = vec![IntervalMethod::Sdp];
        cfg.input_variances = vec![0.0];
        cfg.epochs = 20;
        let r = run_interval_experiment(&cfg).unwrap();
        let sel = r.table("selected").unwrap();
        assert_eq!(sel.len(), 1);
        assert_eq!(sel.rows[0][4].as_str(), Some("false"));
        assert_eq!(r.table("candidates").unwrap().numbers("val_mpiw").unwrap(), vec![0.0]);
    }

    #[test]
    fn smoke_run_reports_one_row_per_method() {
        let mut cfg = IntervalConfig::default();
        cfg.smoke();
        cfg.epochs = 10;
        let r = run_interval_experiment(&cfg).unwrap();
        let sel = r.table("selected").unwrap();
        let methods: Vec<&str> = sel.rows.iter().map(|row| row[1].as_str().unwrap()).collect();
        assert_eq!(methods, vec!["sdp", "pnn", "sdp_pnn"]);
        // 2 variances for sdp and sdp_pnn, a single zero-noise point for pnn.
        assert_eq!(r.table("candidates").unwrap().len(), 5);
    }
}
