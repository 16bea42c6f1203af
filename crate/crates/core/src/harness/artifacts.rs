use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::config::ScenarioConfig;
use crate::model::{capacity_percent, loss_percent};
use crate::sim::{MpcRecord, Sample, SampleSink, SimError, SimSummary, Violation};

/// Column names of `timeseries.csv` for a fleet of the given size.
pub fn timeseries_header(n_g: usize, n_b: usize) -> Vec<String> {
    let mut cols = vec!["t_s".to_string()];
    for i in 0..n_g {
        cols.push(format!("pgm{i}_p_w"));
        cols.push(format!("pgm{i}_i_a"));
    }
    for j in 0..n_b {
        for suffix in ["p_w", "i_a", "soc", "ah_throughput_ah", "q_loss_ah"] {
            cols.push(format!("pcm{j}_{suffix}"));
        }
    }
    cols.extend(["p_load_w", "i_load_a", "residual_w"].map(String::from));
    cols
}

/// Streams samples into a CSV writer.
pub struct CsvSampleSink<W: Write> {
    writer: csv::Writer<W>,
    field: String,
}

impl<W: Write> CsvSampleSink<W> {
    pub fn new(inner: W, n_g: usize, n_b: usize) -> Result<Self, HarnessError> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(timeseries_header(n_g, n_b))?;
        Ok(Self {
            writer,
            field: String::new(),
        })
    }

    pub fn finish(mut self) -> Result<W, HarnessError> {
        self.writer.flush().map_err(|e| HarnessError::Csv(e.into()))?;
        self.writer
            .into_inner()
            .map_err(|e| HarnessError::Invalid(e.to_string()))
    }

    fn put(&mut self, x: f64) -> csv::Result<()> {
        self.field.clear();
        write!(self.field, "{x}").expect("writing to a String");
        self.writer.write_field(&self.field)
    }

    fn write_sample(&mut self, s: &Sample) -> csv::Result<()> {
        self.put(s.t)?;
        for i in 0..s.p_g.len() {
            self.put(s.p_g[i])?;
            self.put(s.i_g[i])?;
        }
        for j in 0..s.p_b.len() {
            self.put(s.p_b[j])?;
            self.put(s.i_b[j])?;
            self.put(s.soc[j])?;
            self.put(s.ah_throughput_ah[j])?;
            self.put(s.capacity_loss_ah[j])?;
        }
        self.put(s.p_load)?;
        self.put(s.i_load)?;
        self.put(s.residual_w)?;
        self.writer.write_record(None::<&[u8]>)
    }
}

impl<W: Write> SampleSink for CsvSampleSink<W> {
    fn record(&mut self, sample: &Sample) -> Result<(), SimError> {
        self.write_sample(sample)
            .map_err(|e| SimError::Sink(e.to_string()))
    }
}

fn create(path: &Path) -> Result<csv::Writer<std::fs::File>, HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_mpc_diag(path: &Path, records: &[MpcRecord]) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    let (n_g, n_b) = records
        .first()
        .map_or((0, 0), |r| (r.pgm_setpoints.len(), r.pcm_setpoints.len()));
    let mut header: Vec<String> = [
        "t_s",
        "iterations",
        "converged",
        "stop",
        "residual_w",
        "shortfall_w",
        "p_f0_w",
        "lambda0",
    ]
    .map(String::from)
    .to_vec();
    header.extend((0..n_g).map(|i| format!("pgm{i}_setpoint_w")));
    for j in 0..n_b {
        header.push(format!("pcm{j}_setpoint_w"));
        header.push(format!("pcm{j}_soc0"));
        header.push(format!("pcm{j}_soc_fallback"));
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.t.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
            format!("{:?}", r.stop).to_lowercase(),
            r.residual_w.to_string(),
            r.shortfall_w.to_string(),
            r.p_f0.to_string(),
            r.lambda.first().copied().unwrap_or(0.0).to_string(),
        ];
        row.extend(r.pgm_setpoints.iter().map(f64::to_string));
        for j in 0..n_b {
            row.push(r.pcm_setpoints[j].to_string());
            row.push(r.soc0[j].to_string());
            row.push(r.soc_fallback[j].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_violations(path: &Path, violations: &[Violation]) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    w.write_record(["t_s", "device", "kind", "amount"])?;
    for v in violations {
        w.write_record([
            v.t.to_string(),
            v.device.to_string(),
            format!("{:?}", v.kind).to_lowercase(),
            v.amount.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResultRow {
    /// Generator weight applied to every PGM; empty without generators.
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    /// `∫|p_b|` summed over batteries.
    pub battery_energy_wh: f64,
    pub battery_discharge_wh: f64,
    pub battery_charge_wh: f64,
    pub generator_energy_wh: f64,
    pub load_energy_wh: f64,
    pub imbalance_wh: f64,
    pub capacity_loss_ah: f64,
    /// `(Q − Q_L)/Q·100` over the pooled battery capacity.
    pub capacity_remaining_pct: f64,
    /// `100 − capacity_remaining_pct`.
    pub capacity_loss_pct: f64,
    pub shortfall_events: usize,
    pub fallback_events: usize,
    pub violations: usize,
    pub mpc_steps: usize,
    pub max_soc_model_error: f64,
    /// Empty unless the cell failed.
    pub error: String,
}

pub fn summary_row(cfg: &ScenarioConfig, s: &SimSummary) -> SweepResultRow {
    let t = &s.totals;
    let discharge: f64 = t.battery_discharge_wh.iter().sum();
    let charge: f64 = t.battery_charge_wh.iter().sum();
    let q: f64 = cfg.pcms.iter().map(|b| b.spec.capacity_ah).sum();
    let q_l: f64 = s.capacity_loss_ah.iter().sum();
    let (remaining, lost) = if q > 0.0 {
        (capacity_percent(q, q_l), loss_percent(q, q_l))
    } else {
        (100.0, 0.0)
    };
    SweepResultRow {
        beta: cfg.pgms.first().map(|g| g.spec.weight_beta),
        gamma: cfg.pcms.first().map(|b| b.spec.weight_gamma),
        battery_energy_wh: discharge + charge,
        battery_discharge_wh: discharge,
        battery_charge_wh: charge,
        generator_energy_wh: t.generator_wh.iter().sum(),
        load_energy_wh: t.load_wh,
        imbalance_wh: t.imbalance_wh,
        capacity_loss_ah: q_l,
        capacity_remaining_pct: remaining,
        capacity_loss_pct: lost,
        shortfall_events: s.shortfall_events,
        fallback_events: s.fallback_events,
        violations: s.violations.len(),
        mpc_steps: s.mpc_steps,
        max_soc_model_error: s.max_soc_model_error,
        error: String::new(),
    }
}

pub fn write_summary(path: &Path, rows: &[SweepResultRow]) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SweepResultRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
