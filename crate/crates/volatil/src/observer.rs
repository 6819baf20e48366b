use std::time::Instant;

use volatil_core::driver::SamplerObserver;

/// Prints a start banner, 10% progress ticks and the runtime to stderr.
pub struct ConsoleObserver {
    label: String,
    origin: Instant,
}

impl ConsoleObserver {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            origin: Instant::now(),
        }
    }
}

impl SamplerObserver for ConsoleObserver {
    fn now(&self) -> Option<f64> {
        Some(self.origin.elapsed().as_secs_f64())
    }

    fn on_start(&mut self, strategy: &str, iterations: usize, series_len: usize) {
        eprintln!(
            "{}: {iterations} iterations of strategy {strategy} on {series_len} observations",
            self.label
        );
    }

    fn on_progress(&mut self, done: usize, total: usize) {
        eprintln!("{}: {:>3}% ({done}/{total})", self.label, done * 100 / total);
    }

    fn on_finish(&mut self, runtime: f64, iterations: usize) {
        let rate = if runtime > 0.0 { iterations as f64 / runtime } else { f64::INFINITY };
        eprintln!("{}: done in {runtime:.2} s ({rate:.0} iterations/s)", self.label);
    }
}
