//! Reusable multiplication context: driver, packing buffers, temporaries,
//! thread pool and counters, kept alive across calls.

use crate::blocking::{gemm_with, BlockingParams, Driver};
use crate::error::Result;
use crate::matrix::{MatMut, MatRef, ProblemShape};
use crate::stats::{ExecStats, StatsSnapshot};
use crate::strassen::{self, OperandTable, Temporaries, VariantSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecConfig {
    pub blocking: BlockingParams,
    /// Workers for the loop over `m_C` blocks.
    pub threads: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self { blocking: BlockingParams::default(), threads: 1 }
    }
}

#[derive(Debug)]
pub struct Gemm {
    config: ExecConfig,
    driver: Driver,
    temps: Temporaries,
    tables: [OperandTable; 2],
    stats: ExecStats,
}

impl Gemm {
    pub fn new(config: ExecConfig) -> Result<Self> {
        Ok(Self {
            config,
            driver: Driver::new(config.blocking, config.threads)?,
            temps: Temporaries::default(),
            tables: [OperandTable::for_level(1)?, OperandTable::for_level(2)?],
            stats: ExecStats::default(),
        })
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    pub fn reset_stats(&self) {
        self.stats.reset();
    }

    /// Allocates the temporaries `spec` needs for an `m x n x k` product so
    /// that later calls do not allocate.
    pub fn reserve(&mut self, spec: VariantSpec, m: usize, n: usize, k: usize) -> Result<()> {
        self.temps.reserve(spec.fusion, spec.level, m, n, k, Some(&self.stats))
    }

    /// `C := alpha*A*B + C` with the chosen algorithm.
    pub fn multiply(
        &mut self,
        spec: VariantSpec,
        shape: ProblemShape,
        a: MatRef<'_>,
        b: MatRef<'_>,
        c: &mut MatMut<'_>,
    ) -> Result<()> {
        match spec.level {
            0 => gemm_with(&mut self.driver, shape, a, b, c, Some(&self.stats)),
            1 | 2 => {
                let table = &self.tables[spec.level as usize - 1];
                strassen::execute(&mut self.driver, &mut self.temps, Some(&self.stats), table, spec.fusion, shape, a, b, c)
            }
            l => Err(crate::Error::Level(l)),
        }
    }
}
