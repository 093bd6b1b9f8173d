use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// Receives residual vectors as trials complete, in trial order.
pub trait ResidualSink {
    fn record(&mut self, series: &str, trial: usize, residual: &[f64]) -> Result<()>;

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl ResidualSink for NullSink {
    fn record(&mut self, _: &str, _: usize, _: &[f64]) -> Result<()> {
        Ok(())
    }
}

/// Streams `series,trial,coordinate,value` rows.
pub struct CsvSink<W: Write> {
    out: BufWriter<W>,
}

impl CsvSink<File> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(File::create(path)?)
    }
}

impl<W: Write> CsvSink<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut out = BufWriter::new(w);
        writeln!(out, "series,trial,coordinate,value")?;
        Ok(Self { out })
    }

    pub fn into_inner(self) -> Result<W> {
        self.out.into_inner().map_err(|e| e.into_error().into())
    }
}

impl<W: Write> ResidualSink for CsvSink<W> {
    fn record(&mut self, series: &str, trial: usize, residual: &[f64]) -> Result<()> {
        for (i, v) in residual.iter().enumerate() {
            writeln!(self.out, "{series},{trial},{i},{v}")?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
