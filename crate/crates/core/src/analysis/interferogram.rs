use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Poisson error bar: `√counts`, or 1 for an empty bin.
pub fn poisson_sigma(counts: u64) -> f64 {
    if counts == 0 {
        1.0
    } else {
        (counts as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferogramPoint {
    /// Relative delay, s.
    pub delay: f64,
    pub counts: u64,
    pub sigma: f64,
}

impl InterferogramPoint {
    pub fn new(delay: f64, counts: u64) -> Self {
        Self { delay, counts, sigma: poisson_sigma(counts) }
    }
}

/// Threefold counts versus delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interferogram {
    points: Vec<InterferogramPoint>,
    /// Integration time per point, s.
    pub integration_time: f64,
    /// Digest of the scenario that produced the data, empty if unknown.
    pub meta: String,
}

impl Interferogram {
    pub fn new(points: Vec<InterferogramPoint>, integration_time: f64, meta: impl Into<String>) -> Result<Self> {
        if let Some(w) = points.windows(2).find(|w| !(w[0].delay < w[1].delay)) {
            return Err(domain(format!("delays must be strictly increasing ({} s then {} s)", w[0].delay, w[1].delay)));
        }
        if let Some(p) = points.iter().find(|p| !(p.sigma > 0.0 && p.sigma.is_finite())) {
            return Err(domain(format!("sigma must be > 0 at delay {} s", p.delay)));
        }
        if points.iter().any(|p| !p.delay.is_finite()) {
            return Err(domain("delays must be finite"));
        }
        if !(integration_time >= 0.0) {
            return Err(domain("integration time must be >= 0"));
        }
        Ok(Self { points, integration_time, meta: meta.into() })
    }

    /// Points with Poisson error bars from `(delay, counts)` pairs.
    pub fn from_counts(data: &[(f64, u64)], integration_time: f64, meta: impl Into<String>) -> Result<Self> {
        let points = data.iter().map(|&(d, c)| InterferogramPoint::new(d, c)).collect();
        Self::new(points, integration_time, meta)
    }

    pub fn points(&self) -> &[InterferogramPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `delay_ps,counts,sigma` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "delay_ps,counts,sigma")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.delay * 1e12, p.counts, p.sigma)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, integration_time: f64) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let text = line.trim();
            if i == 0 {
                if text != "delay_ps,counts,sigma" {
                    return Err(Error::Parse { line: 1, msg: "expected header 'delay_ps,counts,sigma'".into() });
                }
                continue;
            }
            if text.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: lineno, msg };
            let fields: Vec<&str> = text.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let delay: f64 = fields[0].parse().map_err(|_| bad(format!("bad delay '{}'", fields[0])))?;
            let counts: u64 = fields[1].parse().map_err(|_| bad(format!("bad count '{}'", fields[1])))?;
            let sigma: f64 = fields[2].parse().map_err(|_| bad(format!("bad sigma '{}'", fields[2])))?;
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(bad(format!("sigma must be > 0, got {sigma}")));
            }
            if points.last().is_some_and(|p: &InterferogramPoint| p.delay >= delay * 1e-12) {
                return Err(bad("delays must be strictly increasing".into()));
            }
            points.push(InterferogramPoint { delay: delay * 1e-12, counts, sigma });
        }
        if points.is_empty() {
            return Err(Error::Parse { line: 1, msg: "no data rows".into() });
        }
        Self::new(points, integration_time, "")
    }
}
