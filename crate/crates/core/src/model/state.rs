use super::{degradation_factor, soc_step, CRateMode, PcmSpec, SECONDS_PER_HOUR};

/// Continuous plant state advanced by the simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantState {
    pub time_s: f64,
    pub gen_current_a: Vec<f64>,
    pub soc: Vec<f64>,
    /// Charge throughput `∫|i_b| dt` in ampere-seconds.
    pub ah_throughput: Vec<f64>,
    pub capacity_loss_ah: Vec<f64>,
}

impl PlantState {
    pub fn new(gen_current_a: Vec<f64>, soc: Vec<f64>) -> Self {
        let n_b = soc.len();
        Self {
            time_s: 0.0,
            gen_current_a,
            soc,
            ah_throughput: vec![0.0; n_b],
            capacity_loss_ah: vec![0.0; n_b],
        }
    }

    pub fn ah_throughput_ah(&self, j: usize) -> f64 {
        self.ah_throughput[j] / SECONDS_PER_HOUR
    }

    /// Advances battery `j` by `dt` with terminal current `i_b` held.
    ///
    /// Returns `true` when the SoC had to be clamped.
    pub fn advance_battery(&mut self, j: usize, i_b: f64, spec: &PcmSpec, dt: f64) -> bool {
        let step = soc_step(self.soc[j], i_b, spec.capacity_ah, dt);
        self.soc[j] = step.soc;

        // i_b is piecewise constant over the step, so |i_b| dt is exact.
        let moved = i_b.abs() * dt;
        self.ah_throughput[j] += moved;
        let d = &spec.degradation;
        self.capacity_loss_ah[j] = match d.c_rate_mode {
            CRateMode::Constant => degradation_factor(d, d.c_rate) * self.ah_throughput_ah(j),
            CRateMode::Instantaneous => {
                let c_rate = i_b.abs() / spec.capacity_ah;
                self.capacity_loss_ah[j] + degradation_factor(d, c_rate) * moved / SECONDS_PER_HOUR
            }
        };
        step.saturated
    }
}
