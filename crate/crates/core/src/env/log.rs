use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::StepOutcome;
use crate::error::{Error, Result};

/// Per-step CSV log of environment outcomes.
pub struct StepLogWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl StepLogWriter<File> {
    pub fn create(path: &Path, users: usize) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(f, users)
    }
}

impl<W: Write> StepLogWriter<W> {
    pub fn new(w: W, users: usize) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        let mut header: Vec<String> = [
            "step", "reward", "eta_raw", "e_s", "e_t", "e_r", "active_links", "mean_xi",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=users).map(|u| format!("shortfall_u{u}")));
        header.push("cache_hit".into());
        inner.write_record(&header)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, step: u64, out: &StepOutcome, cache_hit: bool) -> Result<()> {
        let e = &out.slot.energy;
        let mut rec = vec![
            step.to_string(),
            out.reward.to_string(),
            out.eta.to_string(),
            e.e_s.to_string(),
            e.e_t.to_string(),
            e.e_r.to_string(),
            out.slot.links.len().to_string(),
            out.slot.mean_xi().to_string(),
        ];
        rec.extend(out.shortfalls.iter().map(|s| s.to_string()));
        rec.push((cache_hit as u8).to_string());
        self.inner.write_record(&rec)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io("<step log>", e))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::io("<step log>", e.into_error()))
    }
}
